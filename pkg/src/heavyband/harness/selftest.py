"""Deterministic invariant suite behind ``heavyband selftest``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core import SpectralParameter
from ..models import ClosedFormContext, laplacian_1d
from ..noise import NoiseSpec, build_noise
from ..oracles import dense_inverse, jacobi_eigenvalues
from ..resolvent import (
    eta_comparison_check,
    factorize,
    minor_trace,
    resolvent_identity_residual,
    ward_residual,
)
from ..rng import make_rng
from ..spectrum import eigenvalues, eigenvalues_bisection, reduce_to_tridiagonal, wegner_check

TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} (worst {self.worst:.3g})"


def random_instance(rng: np.random.Generator, n_max: int = 64, K_max: int = 3):
    """Laplacian plus banded Pareto noise of random size, with a random bulk z."""
    N = int(rng.integers(8, n_max + 1))
    K = int(rng.integers(0, K_max + 1))
    alpha = float(rng.uniform(0.5, 1.9))
    spec = NoiseSpec("pareto", alpha, K=K)
    H = laplacian_1d(N) + build_noise(N, spec, rng)
    z = SpectralParameter(float(rng.uniform(-1.5, 1.5)), float(10 ** rng.uniform(-2, 0)))
    return H, z


def check_ward(rng, instances=50) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        H, z = random_instance(rng)
        k = int(rng.integers(0, H.n))
        g = factorize(H, z).column(k)
        worst = max(worst, ward_residual(H, z, k) / (g[k].imag / z.eta))
    return CheckResult("ward identity", worst <= TOL, worst)


def check_resolvent_identity(rng, instances=50) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        H, z = random_instance(rng)
        L = laplacian_1d(H.n)
        A = H + L.scaled(-1.0)
        scale = max(np.max(np.abs(factorize(H, z).full())), 1.0)
        worst = max(worst, resolvent_identity_residual(L, A, z) / scale)
    return CheckResult("resolvent identity", worst <= TOL, worst)


def check_eta_comparison(rng, instances=50) -> CheckResult:
    worst = 0.0
    ok = True
    for _ in range(instances):
        H, z = random_instance(rng)
        eta_p = float(rng.uniform(0, 0.9)) * z.eta
        res = eta_comparison_check(H, z.E, z.eta, eta_p, tol=TOL)
        ok &= bool(res)
        worst = max(worst, -res.worst_entry_slack, -res.worst_ratio_slack)
    return CheckResult("eta comparison inequalities", ok, worst)


def check_minor_traces(rng, instances=50) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        H, z = random_instance(rng)
        N = H.n
        T = sorted(rng.choice(N, size=int(rng.integers(1, max(2, N // 4))), replace=False).tolist())
        m = minor_trace(H, [], z)
        mT = minor_trace(H, T, z)
        k = int(rng.choice(np.setdiff1d(np.arange(N), T)))
        mkT = minor_trace(H, T + [k], z)
        worst = max(worst, abs(m - mT) * N * z.eta / len(T) - 1, abs(mT - mkT) * N * z.eta - 1)
    return CheckResult("minor trace bounds", worst <= TOL, max(worst, 0.0))


def check_wegner(rng, instances=50) -> CheckResult:
    worst = 0.0
    ok = True
    for _ in range(instances):
        H, z = random_instance(rng)
        w = wegner_check(H, z)
        ok &= w.holds
        if w.bound > 0:
            worst = max(worst, w.count / w.bound)
    return CheckResult("wegner inequality", ok, worst)


def check_closed_form(Ns=(16, 64)) -> CheckResult:
    worst = 0.0
    for N in Ns:
        H = laplacian_1d(N)
        for z in (0.5 + 0.5j, -1.2 + 0.05j, 0.1 + 1.0j):
            G = factorize(H, z).full()
            C = ClosedFormContext(N, z)
            idx = np.arange(N)
            Gc = C.entries(idx[:, None], idx[None, :])
            worst = max(worst, float(np.max(np.abs(G - Gc) / np.maximum(np.abs(Gc), 1e-300))))
    return CheckResult("closed form vs banded LU", worst <= TOL, worst)


def check_oracles(rng, instances=10) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        H, z = random_instance(rng, n_max=48)
        M = H.to_dense()
        worst = max(worst, float(np.max(np.abs(eigenvalues(H) - jacobi_eigenvalues(M)))))
        tri = reduce_to_tridiagonal(H)
        worst = max(worst, float(np.max(np.abs(eigenvalues_bisection(tri) - jacobi_eigenvalues(M)))))
        G = factorize(H, z).full()
        worst = max(worst, float(np.max(np.abs(G - dense_inverse(M - z.z * np.eye(H.n))))))
    return CheckResult("eigensolver and LU vs dense oracles", worst <= TOL, worst)


def check_laplacian_spectrum(N=200) -> CheckResult:
    k = np.arange(1, N + 1)
    exact = np.sort(2 * np.cos(k * np.pi / (N + 1)))
    worst = float(np.max(np.abs(eigenvalues(laplacian_1d(N)) - exact)))
    return CheckResult("laplacian spectrum", worst <= 1e-10, worst)


def run_selftest(seed: int = 20240601, instances: int = 50, echo: Callable[[str], None] | None = None) -> list[CheckResult]:
    rng = make_rng(seed, 0, "selftest")
    checks = [
        lambda: check_closed_form(),
        lambda: check_ward(rng, instances),
        lambda: check_resolvent_identity(rng, instances),
        lambda: check_eta_comparison(rng, instances),
        lambda: check_minor_traces(rng, instances),
        lambda: check_wegner(rng, instances),
        lambda: check_oracles(rng),
        lambda: check_laplacian_spectrum(),
    ]
    out = []
    for c in checks:
        r = c()
        out.append(r)
        if echo:
            echo(r.line())
    return out
