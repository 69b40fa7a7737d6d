import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heavyband.core import (
    BandedSymmetricMatrix,
    RemovalSet,
    SpectralDomain,
    SpectralParameter,
    domain_mesh,
    pairs_in_band,
    removal_set,
)

from conftest import random_banded


def test_band_layout_and_dense_roundtrip(rng):
    M = random_banded(rng, 9, 2)
    D = M.to_dense()
    assert np.allclose(D, D.T)
    assert np.all(D[np.abs(np.subtract.outer(np.arange(9), np.arange(9))) > 2] == 0)
    assert [len(b) for b in M.bands] == [9, 8, 7]
    back = BandedSymmetricMatrix.from_dense(D)
    assert back.bandwidth == 2
    assert np.array_equal(back.to_dense(), D)


def test_bands_are_read_only(rng):
    M = random_banded(rng, 5, 1)
    with pytest.raises(ValueError):
        M.bands[0][0] = 1.0


def test_from_dense_rejects_asymmetric():
    with pytest.raises(ValueError):
        BandedSymmetricMatrix.from_dense(np.array([[0.0, 1.0], [2.0, 0.0]]))


def test_bad_band_lengths():
    with pytest.raises(ValueError):
        BandedSymmetricMatrix(3, 1, (np.zeros(3), np.zeros(3)))


@given(st.integers(1, 12), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_get_is_symmetric(n, K, seed):
    M = random_banded(np.random.default_rng(seed), n, K)
    for i in range(n):
        for j in range(n):
            assert M.get(i, j) == M.get(j, i)
            if abs(i - j) > K:
                assert M.get(i, j) == 0.0


@given(st.integers(1, 15), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_matvec_matches_dense(n, K, seed):
    rng = np.random.default_rng(seed)
    M = random_banded(rng, n, K)
    x = rng.standard_normal(n)
    assert np.allclose(M.matvec(x), M.to_dense() @ x)


def test_minor_drops_rows_and_columns(rng):
    M = random_banded(rng, 8, 2)
    sub, kept = M.minor([1, 5])
    assert list(kept) == [0, 2, 3, 4, 6, 7]
    assert np.array_equal(sub.to_dense(), M.to_dense()[np.ix_(kept, kept)])
    with pytest.raises(ValueError):
        M.minor(range(8))


def test_addition_widens_bandwidth(rng):
    A, B = random_banded(rng, 6, 1), random_banded(rng, 6, 3)
    assert (A + B).bandwidth == 3
    assert np.allclose((A + B).to_dense(), A.to_dense() + B.to_dense())


def test_spectral_parameter_requires_positive_eta():
    assert SpectralParameter(0.5, 0.1).z == complex(0.5, 0.1)
    for bad in (0.0, -1e-3):
        with pytest.raises(ValueError):
            SpectralParameter(0.0, bad)


@pytest.mark.parametrize("K", [0, 1])
def test_removal_set_empty_for_small_K(K):
    assert removal_set(K, 3).points == ()


def test_removal_set_K2():
    rs = removal_set(2, 3)
    assert np.allclose(rs.points, [0.0])
    assert rs.radius == pytest.approx(1e-3)
    assert rs.intervals() == [(pytest.approx(-1e-3), pytest.approx(1e-3))]
    assert 0.0005 in rs and 0.002 not in rs


def test_removal_set_roots_by_scan():
    # every point is a root of sin(l arccos(E/2)) for some l <= K
    rs = removal_set(5, 3)
    for E in rs.points:
        lam = np.arccos(E / 2)
        assert min(abs(np.sin(l * lam)) for l in range(2, 6)) < 1e-12


@given(st.integers(0, 8), st.integers(1, 5))
def test_removal_set_monotone_and_symmetric(K, p):
    a = np.array(removal_set(K, p).points)
    b = np.array(removal_set(K + 1, p).points)
    assert all(np.min(np.abs(b - x)) < 1e-12 for x in a)
    assert np.allclose(np.sort(a), np.sort(-a))
    assert np.all(np.abs(a) < 2)


def test_mesh_single_point():
    mesh = domain_mesh(SpectralDomain(0.5, 0.5), 100, 1, 1)
    assert len(mesh) == 1
    assert mesh[0].E == pytest.approx(-1.5)
    assert mesh[0].eta == pytest.approx(0.1)


def test_mesh_energies():
    mesh = domain_mesh(SpectralDomain(0.5, 0.5), 100, 3, 1)
    assert [z.E for z in mesh] == pytest.approx([-1.5, 0.0, 1.5])


def test_mesh_avoids_removal():
    dom = SpectralDomain(0.5, 0.1, K=2, p=1)
    mesh = domain_mesh(dom, 100, 41, 2)
    assert not any(-0.1 < z.E < 0.1 for z in mesh)
    assert len({z.E for z in mesh}) == len(mesh) // 2


def test_mesh_rejects_tiny_N():
    with pytest.raises(ValueError):
        domain_mesh(SpectralDomain(0.5, 0.5, sigma=0.3, alpha=1.0), 4, 3, 3)


@given(
    st.sampled_from([100, 1000, 5000]),
    st.floats(0.1, 0.6),
    st.floats(0.0, 0.2),
    st.sampled_from(["entrywise", "trace"]),
)
def test_mesh_respects_eta_floor(N, eps, sigma, mode):
    dom = SpectralDomain(eps, 0.5, sigma=sigma, alpha=1.0, eta_exponent_mode=mode)
    factor = 2 if mode == "entrywise" else 1
    floor = N ** (-1 + eps + factor * sigma)
    if floor >= 1:
        return
    mesh = domain_mesh(dom, N, 5, 4)
    for z in mesh:
        assert abs(z.E) <= 1.5 + 1e-12
        assert floor * (1 - 1e-12) <= z.eta <= 1 + 1e-12
    assert mesh == domain_mesh(dom, N, 5, 4)


def test_pairs_in_band():
    assert pairs_in_band(3, 1) == [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)]
