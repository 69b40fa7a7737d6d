import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heavyband.core import BandedSymmetricMatrix, RemovalSet, SpectralParameter
from heavyband.models import classical_locations, laplacian_1d
from heavyband.oracles import jacobi_eigenvalues
from heavyband.spectrum import (
    SpectralDecomposition,
    Tridiagonal,
    cluster_basis,
    delocalization_report,
    dyadic_certificate,
    eigen_count,
    eigenvalues,
    eigenvalues_bisection,
    eigenvector,
    empirical_vs_arcsine,
    empirical_vs_arcsine_exact,
    reduce_to_tridiagonal,
    rigidity_report,
    wegner_check,
)

from conftest import noisy_laplacian, random_banded


def laplacian_spectrum(N):
    return np.sort(2 * np.cos(np.arange(1, N + 1) * np.pi / (N + 1)))


def test_tridiagonal_passthrough(rng):
    H = random_banded(rng, 20, 1)
    tri = reduce_to_tridiagonal(H)
    assert np.array_equal(tri.diag, H.bands[0]) and np.array_equal(tri.offdiag, H.bands[1])


@pytest.mark.parametrize("K", [2, 3, 5])
def test_band_reduction_preserves_spectrum(rng, K):
    H = random_banded(rng, 16, K)
    tri = reduce_to_tridiagonal(H)
    assert np.max(np.abs(np.sort(np.linalg.eigvalsh(tri.to_banded().to_dense())) - jacobi_eigenvalues(H.to_dense()))) < 1e-9
    assert np.sum(tri.diag) == pytest.approx(H.trace(), abs=1e-10)


def test_bisection_laplacian():
    assert eigenvalues(laplacian_1d(3)) == pytest.approx([-np.sqrt(2), 0, np.sqrt(2)], abs=1e-11)
    assert np.max(np.abs(eigenvalues(laplacian_1d(100)) - laplacian_spectrum(100))) < 1e-10


def test_bisection_random_tridiagonal(rng):
    tri = Tridiagonal(rng.standard_normal(32), rng.standard_normal(31))
    ev = eigenvalues_bisection(tri)
    assert np.max(np.abs(ev - jacobi_eigenvalues(tri.to_banded().to_dense()))) < 1e-9


def test_eigen_count_examples():
    tri = reduce_to_tridiagonal(laplacian_1d(3))
    assert eigen_count(tri, (-1, 1)) == 1
    assert eigen_count(tri, (-10, 10)) == 3


def test_eigen_count_matches_bisection(rng):
    for _ in range(50):
        n = int(rng.integers(2, 60))
        tri = reduce_to_tridiagonal(random_banded(rng, n, int(rng.integers(0, 4))))
        a, b = np.sort(rng.uniform(-4, 4, 2))
        ev = eigenvalues_bisection(tri)
        assert eigen_count(tri, (a, b)) == np.sum((ev >= a) & (ev <= b))
        assert len(eigenvalues_bisection(tri, (a, b))) == eigen_count(tri, (a, b))


def test_eigenvector_laplacian():
    v = eigenvector(laplacian_1d(5), 2 * np.cos(np.pi / 6))
    w = np.sin(np.arange(1, 6) * np.pi / 6)
    w /= np.linalg.norm(w)
    assert abs(abs(v @ w) - 1) < 1e-10


def test_eigenvectors_residual_and_orthogonality(rng):
    for s in range(5):
        H = noisy_laplacian(80, K=1, seed=s)
        ev = eigenvalues(H)
        idx = rng.choice(80, 6, replace=False)
        V = np.stack([eigenvector(H, ev[k]) for k in idx], axis=1)
        norm = max(H.norm_inf(), 1.0)
        for c, k in enumerate(idx):
            assert np.linalg.norm(H.matvec(V[:, c]) - ev[k] * V[:, c]) <= 1e-8 * norm
            assert np.linalg.norm(V[:, c]) == pytest.approx(1, abs=1e-10)
        G = V.T @ V - np.eye(6)
        assert np.max(np.abs(G)) < 1e-6


def test_cluster_basis_degenerate():
    # two decoupled copies of the same block give doubly degenerate eigenvalues
    blk = laplacian_1d(4).to_dense()
    M = np.zeros((8, 8))
    M[:4, :4] = blk
    M[4:, 4:] = blk
    H = BandedSymmetricMatrix.from_dense(M, 1)
    lam = 2 * np.cos(np.pi / 5)
    V = cluster_basis(H, [lam, lam])
    assert np.allclose(V.T @ V, np.eye(2), atol=1e-10)
    assert np.allclose(H.to_dense() @ V, lam * V, atol=1e-8)


def test_wegner_examples():
    assert wegner_check(laplacian_1d(100), SpectralParameter(0, 0.2)).holds
    w = wegner_check(laplacian_1d(50), SpectralParameter(5.0, 0.1))
    assert w.count == 0 and w.holds


def test_wegner_random():
    for s in range(100):
        H = noisy_laplacian(60, K=s % 3, alpha=0.5 + (s % 7) * 0.2, seed=s)
        rng = np.random.default_rng(s)
        assert wegner_check(H, SpectralParameter(float(rng.uniform(-2, 2)), float(10 ** rng.uniform(-3, 0)))).holds


def test_rigidity_examples():
    N = 2048
    g = classical_locations(N)
    assert rigidity_report(np.concatenate([-g, g]), N, 0.5).deviation == 0
    lap = laplacian_spectrum(N)
    assert rigidity_report(lap, N, 0.5).deviation < 0.01
    base = rigidity_report(g, N, 0.5).deviation
    assert rigidity_report(np.concatenate([g, [1.9, 1.95]]), N, 0.5).deviation == base


def test_rigidity_reports_count_mismatch():
    r = rigidity_report(np.array([-0.5, 0.1, 0.2]), 4, 0.5)
    assert r.count_mismatch and r.n_nonnegative == 2


def test_delocalization_laplacian():
    N = 100
    rep = delocalization_report(laplacian_1d(N), 0.5, eta=0.05)
    assert rep.max_sup_norm <= np.sqrt(2 / (N + 1)) + 1e-12
    assert rep.max_sup_norm > 0.95 * np.sqrt(2 / (N + 1))
    assert rep.green_check_holds and rep.green_checks > 0


def test_delocalization_decoupled_site():
    M = laplacian_1d(30).to_dense()
    M[10, :] = M[:, 10] = 0
    M[10, 10] = 0.123
    rep = delocalization_report(BandedSymmetricMatrix.from_dense(M, 1), 0.5)
    assert rep.max_sup_norm == pytest.approx(1.0)


def test_delocalization_green_bound_noisy():
    rep = delocalization_report(noisy_laplacian(300, K=2, seed=4), 0.5, RemovalSet((0.0,), 0.05), eta=0.01)
    assert rep.green_check_holds and not rep.failures


def test_arcsine_laplacian():
    assert empirical_vs_arcsine(laplacian_spectrum(4096), 4096, 0.5) < 0.005


def test_arcsine_empty_window():
    # mu = 0 on the window, so the sup is the arcsine mass of the whole window
    dev = empirical_vs_arcsine(np.array([-3.0, 3.0]), 2, 0.5)
    assert dev == pytest.approx(2 / np.pi * np.arcsin(0.75), abs=1e-12)


def test_arcsine_certificate(rng):
    for _ in range(20):
        N = int(rng.integers(5, 200))
        ev = np.sort(rng.uniform(-2, 2, N))
        exact = empirical_vs_arcsine_exact(ev, N, 0.5)
        grid = empirical_vs_arcsine(ev, N, 0.5)
        assert grid <= exact + 1e-12
        assert exact - grid <= dyadic_certificate(0.5) + 1e-12


def test_arcsine_exact_brute_force(rng):
    from heavyband.models import arcsine_cdf

    ev = np.sort(rng.uniform(-1.5, 1.5, 12))
    pts = np.concatenate([[-1.5, 1.5], ev])
    best = 0.0
    for a in pts:
        for b in pts:
            if a > b:
                continue
            rho = arcsine_cdf(b) - arcsine_cdf(a)
            best = max(best, abs(np.sum((ev >= a) & (ev <= b)) / 12 - rho), abs(np.sum((ev > a) & (ev < b)) / 12 - rho))
    assert empirical_vs_arcsine_exact(ev, 12, 0.5) == pytest.approx(best, abs=1e-12)


@given(st.integers(0, 10_000), st.integers(2, 60), st.integers(0, 4))
def test_trace_equals_eigenvalue_sum(seed, n, K):
    H = random_banded(np.random.default_rng(seed), n, K)
    assert np.sum(eigenvalues(H)) == pytest.approx(H.trace(), rel=1e-8, abs=1e-8)


def test_interlacing(rng):
    for s in range(20):
        H = noisy_laplacian(int(rng.integers(5, 80)), K=int(rng.integers(0, 3)), seed=s)
        k = int(rng.integers(0, H.n))
        lam = eigenvalues(H)
        mu = eigenvalues(H.minor([k])[0])
        tol = 1e-9 * max(1, H.norm_inf())
        assert np.all(lam[:-1] <= mu + tol) and np.all(mu <= lam[1:] + tol)


def test_csv_and_sidecar_roundtrip(tmp_path, rng):
    H = noisy_laplacian(20, seed=2)
    ev = eigenvalues(H)
    dec = SpectralDecomposition(ev, {3: eigenvector(H, ev[3]), 7: eigenvector(H, ev[7])})
    dec.to_csv(tmp_path / "e.csv")
    assert np.array_equal(SpectralDecomposition.read_csv(tmp_path / "e.csv"), ev)
    order = dec.write_vectors(tmp_path / "v.f64")
    V = SpectralDecomposition.read_vectors(tmp_path / "v.f64", 20)
    assert order == [3, 7] and np.array_equal(V[1], dec.eigenvectors[7])
    assert (tmp_path / "v.f64").stat().st_size == 2 * 20 * 8
