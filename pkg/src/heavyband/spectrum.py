"""Eigenvalues, eigenvectors and spectral statistics of banded symmetric matrices."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np
from scipy.linalg import lapack

from .core import BandedSymmetricMatrix, RemovalSet, SpectralParameter
from .models import arcsine_cdf, arcsine_density, classical_locations

_EIG_TOL = 1e-11


@dataclass(frozen=True, eq=False)
class Tridiagonal:
    diag: np.ndarray
    offdiag: np.ndarray

    @property
    def n(self) -> int:
        return len(self.diag)

    def to_banded(self) -> BandedSymmetricMatrix:
        return BandedSymmetricMatrix(self.n, 1, (self.diag, self.offdiag))

    def gershgorin(self) -> tuple[float, float]:
        r = np.zeros(self.n)
        a = np.abs(self.offdiag)
        r[:-1] += a
        r[1:] += a
        return float(np.min(self.diag - r)), float(np.max(self.diag + r))


# --- band reduction -------------------------------------------------------


@numba.njit(cache=True)
def _bget(W, b, i, j):
    if i < j:
        i, j = j, i
    d = i - j
    if d > b:
        return 0.0
    return W[d, j]


@numba.njit(cache=True)
def _bset(W, b, i, j, v):
    if i < j:
        i, j = j, i
    W[i - j, j] = v


@numba.njit(cache=True)
def _rotate(W, b, n, p, c, s):
    # similarity by the Givens rotation acting on rows/cols p, p+1
    q = p + 1
    lo = max(0, q - b)
    hi = min(n - 1, p + b)
    for m in range(lo, hi + 1):
        if m == p or m == q:
            continue
        x = _bget(W, b, p, m)
        y = _bget(W, b, q, m)
        _bset(W, b, p, m, c * x + s * y)
        _bset(W, b, q, m, -s * x + c * y)
    app = W[0, p]
    aqq = W[0, q]
    apq = W[1, p]
    W[0, p] = c * c * app + 2 * c * s * apq + s * s * aqq
    W[0, q] = s * s * app - 2 * c * s * apq + c * c * aqq
    W[1, p] = c * s * (aqq - app) + (c * c - s * s) * apq


@numba.njit(cache=True)
def _givens(x, y):
    r = math.hypot(x, y)
    if r == 0.0:
        return 1.0, 0.0
    return x / r, y / r


@numba.njit(cache=True)
def _band_reduce(W, K, n):
    b = K + 1
    for j in range(n - 2):
        for d in range(K, 1, -1):
            i = j + d
            if i >= n:
                continue
            y = W[d, j]
            if y == 0.0:
                continue
            c, s = _givens(W[d - 1, j], y)
            _rotate(W, b, n, i - 1, c, s)
            W[d, j] = 0.0
            # chase the bulge created at (i - 1 + b, i - 1)
            col = i - 1
            row = col + b
            while row < n:
                y = W[b, col]
                if y == 0.0:
                    break
                c, s = _givens(W[b - 1, col], y)
                _rotate(W, b, n, row - 1, c, s)
                W[b, col] = 0.0
                col = row - 1
                row = col + b


def reduce_to_tridiagonal(H: BandedSymmetricMatrix) -> Tridiagonal:
    """Orthogonally similar tridiagonal matrix via Givens rotations with bulge chasing."""
    n, K = H.n, H.bandwidth
    if K == 0:
        return Tridiagonal(H.bands[0].copy(), np.zeros(max(n - 1, 0)))
    if K == 1:
        return Tridiagonal(H.bands[0].copy(), H.bands[1].copy())
    W = np.zeros((K + 2, n))
    for d in range(K + 1):
        W[d, : n - d] = H.bands[d]
    _band_reduce(W, K, n)
    return Tridiagonal(W[0].copy(), W[1, : n - 1].copy())


# --- Sturm sequences ------------------------------------------------------


@numba.njit(cache=True, error_model="numpy")
def _sturm_count(d, e2, x, pivmin):
    """Number of eigenvalues strictly below ``x``."""
    count = 0
    q = d[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0:
        count += 1
    for i in range(1, len(d)):
        q = d[i] - x - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0:
            count += 1
    return count


@numba.njit(cache=True, error_model="numpy")
def _sturm_newton(d, e2, x, pivmin):
    """Sturm count below ``x`` and the Newton correction ``det / det'`` at ``x``."""
    count = 0
    q = d[0] - x
    dq = -1.0
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0:
        count += 1
    s = dq / q
    for i in range(1, len(d)):
        qn = d[i] - x - e2[i - 1] / q
        dq = -1.0 + e2[i - 1] * dq / (q * q)
        q = qn
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0:
            count += 1
        s += dq / q
    step = 1.0 / s if s != 0.0 else np.inf
    return count, step


@numba.njit(cache=True, error_model="numpy")
def _bisect_all(d, e2, lo, hi, k0, k1, tol, pivmin):
    # Sturm bisection; counts at every probe refine the brackets of all
    # later eigenvalues, and a Newton step on the characteristic polynomial
    # is taken whenever it lands strictly inside the current bracket.
    n = k1 - k0
    out = np.empty(n)
    lb = np.full(n, lo)
    ub = np.full(n, hi)
    for k in range(k0, k1):
        # lb[j] / ub[j] hold probes whose count is exactly j / j + 1; any
        # probe recorded at j >= k bounds lambda_k from above
        a = lb[k - k0]
        if k > k0 and out[k - k0 - 1] > a:
            a = out[k - k0 - 1]
        b = hi
        for j in range(k - k0, n):
            if ub[j] < b:
                b = ub[j]
        x = 0.5 * (a + b)
        stalls = 0
        while b - a > tol:
            c, step = _sturm_newton(d, e2, x, pivmin)
            if k0 <= c - 1 < k1 and x < ub[c - 1 - k0]:
                ub[c - 1 - k0] = x
            if k0 <= c < k1 and x > lb[c - k0]:
                lb[c - k0] = x
            width = b - a
            if c > k:
                b = x
            else:
                a = x
            if b - a <= tol:
                break
            y = x - step
            if stalls < 4 and a < y < b:
                if abs(y - x) < 0.25 * tol:
                    # converged: close the bracket around y
                    ya = max(a, y - 0.5 * tol)
                    yb = min(b, y + 0.5 * tol)
                    if _sturm_count(d, e2, ya, pivmin) <= k and _sturm_count(d, e2, yb, pivmin) > k:
                        a, b = ya, yb
                        break
                    stalls += 1
                    x = 0.5 * (a + b)
                else:
                    if b - a > 0.5 * width:
                        stalls += 1
                    x = y
            else:
                x = 0.5 * (a + b)
        out[k - k0] = 0.5 * (a + b)
    return out


def _pivmin(tri: Tridiagonal) -> float:
    scale = max(1.0, float(np.max(np.abs(tri.offdiag), initial=0.0)) ** 2)
    return np.finfo(float).tiny * scale / np.finfo(float).eps


def sturm_count(tri: Tridiagonal, x: float) -> int:
    """How many eigenvalues are ``< x``."""
    return int(_sturm_count(tri.diag, tri.offdiag**2, float(x), _pivmin(tri)))


def eigen_count(tri: Tridiagonal, interval: tuple[float, float]) -> int:
    """Number of eigenvalues in the closed interval ``[a, b]``."""
    a, b = interval
    if b < a:
        return 0
    return sturm_count(tri, np.nextafter(b, np.inf)) - sturm_count(tri, a)


def eigenvalues_bisection(
    tri: Tridiagonal, interval: tuple[float, float] | None = None, tol: float = _EIG_TOL
) -> np.ndarray:
    """All eigenvalues (or those in ``[a, b]``), ascending, to absolute accuracy ``tol``."""
    lo, hi = tri.gershgorin()
    lo -= 2 * tol + 1e-14 * max(1.0, abs(lo))
    hi += 2 * tol + 1e-14 * max(1.0, abs(hi))
    k0, k1 = 0, tri.n
    if interval is not None:
        a, b = interval
        k0 = sturm_count(tri, a)
        k1 = sturm_count(tri, np.nextafter(b, np.inf))
        if k1 <= k0:
            return np.zeros(0)
    e2 = tri.offdiag**2
    return _bisect_all(tri.diag, e2, lo, hi, k0, k1, tol, _pivmin(tri))


def eigenvalues(H: BandedSymmetricMatrix, interval=None) -> np.ndarray:
    return eigenvalues_bisection(reduce_to_tridiagonal(H), interval)


# --- eigenvectors ---------------------------------------------------------


class EigenvectorError(RuntimeError):
    pass


_JITTER = 1e-12


def _real_band_lu(H: BandedSymmetricMatrix, shift: float):
    K, n = H.bandwidth, H.n
    ab = np.zeros((3 * K + 1, n))
    ab[2 * K, :] = H.bands[0] - shift
    for d in range(1, K + 1):
        b = H.bands[d]
        if len(b):
            ab[2 * K - d, d:] = b
            ab[2 * K + d, : n - d] = b
    lu, piv, info = lapack.dgbtrf(ab, K, K)
    if info < 0:
        raise ValueError("dgbtrf: illegal argument")
    # an exactly zero pivot is patched so the solve still amplifies the eigendirection
    diag = lu[2 * K, :]
    tiny = np.finfo(float).eps * max(H.norm_inf(), 1.0)
    diag[np.abs(diag) < tiny] = tiny
    return lu, piv


def _lu_solve(lu, piv, K, B):
    x, info = lapack.dgbtrs(lu, K, K, B, piv)
    if info != 0:
        raise ValueError("dgbtrs failed")
    return x


def eigenvector(
    H: BandedSymmetricMatrix,
    lam: float,
    rng: np.random.Generator | None = None,
    max_iter: int = 5,
    max_restarts: int = 3,
    tol: float = 1e-8,
) -> np.ndarray:
    """Unit eigenvector for an isolated eigenvalue ``lam`` by shifted inverse iteration."""
    return cluster_basis(H, [lam], rng=rng, max_iter=max_iter, max_restarts=max_restarts, tol=tol)[:, 0]


def cluster_basis(
    H: BandedSymmetricMatrix,
    lams: Sequence[float],
    rng: np.random.Generator | None = None,
    max_iter: int = 5,
    max_restarts: int = 3,
    tol: float = 1e-8,
) -> np.ndarray:
    """Orthonormal basis of the invariant subspace of a cluster of eigenvalues.

    Block inverse iteration at the cluster mean; a single eigenvalue is the
    one-column case.
    """
    rng = np.random.default_rng(0x5EED) if rng is None else rng
    lams = np.asarray(lams, dtype=float)
    m = len(lams)
    K, n = H.bandwidth, H.n
    shift = float(np.mean(lams)) + _JITTER
    lu, piv = _real_band_lu(H, shift)
    bound = tol * max(H.norm_inf(), 1.0)
    for _ in range(max_restarts + 1):
        V = rng.standard_normal((n, m))
        V, _r = np.linalg.qr(V)
        prev = np.inf
        for _it in range(max_iter):
            V = _lu_solve(lu, piv, K, V)
            V, _r = np.linalg.qr(V)
            R = np.stack([H.matvec(V[:, c]) for c in range(m)], axis=1)
            # residual against the Rayleigh-Ritz values of the block
            T = V.T @ R
            res = float(np.max(np.linalg.norm(R - V @ T, axis=0)))
            if res <= bound:
                if m > 1:
                    w, Q = np.linalg.eigh(T)
                    V = V @ Q
                return V
            if res >= prev:
                break  # stagnation: restart from a fresh vector
            prev = res
    raise EigenvectorError(f"inverse iteration did not converge near {shift:.6g}")


# --- decomposition container ------------------------------------------------


@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: dict = field(default_factory=dict)

    def __post_init__(self):
        self.eigenvalues = np.sort(np.asarray(self.eigenvalues, dtype=float))

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w") as fh:
            fh.write("index,eigenvalue\n")
            for k, v in enumerate(self.eigenvalues):
                fh.write(f"{k},{float(v)!r}\n")

    def write_vectors(self, path) -> list[int]:
        """Row-major float64 little-endian sidecar; returns the row order (eigen indices)."""
        order = sorted(self.eigenvectors)
        if order:
            M = np.stack([self.eigenvectors[k] for k in order]).astype("<f8")
        else:
            M = np.zeros((0, 0), dtype="<f8")
        Path(path).write_bytes(M.tobytes(order="C"))
        return order

    @staticmethod
    def read_csv(path) -> np.ndarray:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return data[:, 1] if data.size else np.zeros(0)

    @staticmethod
    def read_vectors(path, n: int) -> np.ndarray:
        raw = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
        return raw.reshape(-1, n) if raw.size else np.zeros((0, n))


def decompose(H: BandedSymmetricMatrix) -> SpectralDecomposition:
    return SpectralDecomposition(eigenvalues(H))


# --- statistics -----------------------------------------------------------


def _mean_trace(H: BandedSymmetricMatrix, z) -> complex:
    from .resolvent import stieltjes_trace

    return stieltjes_trace(H, z)


@dataclass
class WegnerCheck:
    count: int
    bound: float
    holds: bool


def wegner_check(H: BandedSymmetricMatrix, z, tri: Tridiagonal | None = None) -> WegnerCheck:
    """Eigenvalue count in ``[E - eta/2, E + eta/2]`` against ``(5/4) N eta Im m(z)``."""
    z = z if isinstance(z, SpectralParameter) else SpectralParameter.from_complex(complex(z))
    tri = reduce_to_tridiagonal(H) if tri is None else tri
    count = eigen_count(tri, (z.E - z.eta / 2, z.E + z.eta / 2))
    bound = 1.25 * H.n * z.eta * _mean_trace(H, z).imag
    return WegnerCheck(count, bound, count <= bound * (1 + 1e-12))


@dataclass
class RigidityReport:
    deviation: float
    n_nonnegative: int
    n_negative: int
    compared: int
    count_mismatch: bool

    def __float__(self):
        return self.deviation


def rigidity_report(eigs: Sequence[float], N: int, kappa: float) -> RigidityReport:
    """Sup of ``|lambda'_i - gamma_i|`` over bulk eigenvalues, both signs.

    The i-th smallest non-negative eigenvalue is paired with ``gamma_i``;
    negative eigenvalues are paired by absolute value the same way.
    """
    eigs = np.sort(np.asarray(eigs, dtype=float))
    gamma = classical_locations(N)
    pos = eigs[eigs >= 0]
    neg = np.sort(-eigs[eigs < 0])
    worst = 0.0
    compared = 0
    for side in (pos, neg):
        m = min(len(side), len(gamma))
        sel = side[:m] <= 2 - kappa
        if np.any(sel):
            worst = max(worst, float(np.max(np.abs(side[:m][sel] - gamma[:m][sel]))))
            compared += int(np.sum(sel))
    return RigidityReport(worst, len(pos), len(neg), compared, len(pos) != len(neg))


def _window_extremes(points, left_counts, right_counts, N, lo, hi):
    """Sup of ``|mu(I) - rho(I)|`` over intervals with endpoints in ``points`` (ascending)."""
    F = arcsine_cdf(points) - arcsine_cdf(lo)
    Pl = left_counts / N - F  # eigenvalues < x
    Pr = right_counts / N - F  # eigenvalues <= x
    # closed [a, b]: Pr(b) - Pl(a); open (a, b): Pl(b) - Pr(a); a <= b
    best = 0.0
    best = max(best, float(np.max(Pr - np.minimum.accumulate(Pl))))
    best = max(best, float(np.max(np.maximum.accumulate(Pr) - Pl)))
    return best


def empirical_vs_arcsine(eigs: Sequence[float], N: int, kappa: float, level: int = 10) -> float:
    """Sup over intervals in the bulk window with endpoints on a ``2**-level`` grid.

    Every pair of grid points is covered (via running extrema), which
    contains the dyadic family; the true sup exceeds it by at most twice
    the grid step times the maximal arcsine density on the window.
    """
    lo, hi = -2 + kappa, 2 - kappa
    eigs = np.sort(np.asarray(eigs, dtype=float))
    eigs = eigs[(eigs >= lo) & (eigs <= hi)]
    h = 2.0**-level
    grid = np.concatenate([lo + h * np.arange(int(math.floor((hi - lo) / h)) + 1), [hi]])
    grid = np.unique(grid)
    left = np.searchsorted(eigs, grid, side="left")
    right = np.searchsorted(eigs, grid, side="right")
    return _window_extremes(grid, left, right, N, lo, hi)


def empirical_vs_arcsine_exact(eigs: Sequence[float], N: int, kappa: float) -> float:
    """Exact sup over all intervals in the window, from the eigenvalue breakpoints."""
    lo, hi = -2 + kappa, 2 - kappa
    eigs = np.sort(np.asarray(eigs, dtype=float))
    eigs = eigs[(eigs >= lo) & (eigs <= hi)]
    pts = np.unique(np.concatenate([[lo, hi], eigs]))
    left = np.searchsorted(eigs, pts, side="left")
    right = np.searchsorted(eigs, pts, side="right")
    return _window_extremes(pts, left, right, N, lo, hi)


def dyadic_certificate(kappa: float, level: int = 10) -> float:
    """Upper bound on (exact sup) - (grid sup): two grid steps times the peak density."""
    return 2 * 2.0**-level * float(arcsine_density(np.array([2 - kappa]))[0])


@dataclass
class DelocalizationReport:
    max_sup_norm: float
    n_vectors: int
    sup_norms: dict
    green_check_violations: int
    green_checks: int
    failures: list

    @property
    def green_check_holds(self) -> bool:
        return self.green_check_violations == 0


def _clusters(eigs: np.ndarray, gap: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for k in range(len(eigs)):
        if groups and eigs[k] - eigs[groups[-1][-1]] < gap:
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def delocalization_report(
    H: BandedSymmetricMatrix,
    kappa: float,
    removal: RemovalSet | None = None,
    eta: float | None = None,
    n_check: int = 10,
    rng: np.random.Generator | None = None,
    eigs: np.ndarray | None = None,
    cluster_gap: float = 1e-10,
) -> DelocalizationReport:
    """Max sup-norm of unit eigenvectors with eigenvalues in the bulk window.

    With ``eta`` given, each vector is also checked against the Green-function
    bound ``|v(k)|^2 <= eta Im G_kk(lambda + i eta)`` at ``n_check`` random
    sites plus the site where ``|v|`` peaks.
    """
    from .resolvent import factorize

    rng = np.random.default_rng(0xDE10C) if rng is None else rng
    eigs = eigenvalues(H) if eigs is None else np.sort(np.asarray(eigs, dtype=float))
    lo, hi = -2 + kappa, 2 - kappa
    removal = removal if removal is not None else RemovalSet((), 0.0)
    sel = [k for k in range(len(eigs)) if lo <= eigs[k] <= hi and eigs[k] not in removal]
    groups = _clusters(eigs, cluster_gap)
    index_group = {k: g for g in groups for k in g}
    sup_norms: dict[int, float] = {}
    failures: list = []
    violations = checks = 0
    done: set[int] = set()
    for k in sel:
        if k in done:
            continue
        group = index_group[k]
        try:
            V = cluster_basis(H, eigs[group], rng=rng)
        except EigenvectorError as exc:
            failures.append((k, str(exc)))
            done.update(group)
            continue
        for c, kk in enumerate(group):
            done.add(kk)
            if kk not in sel:
                continue
            v = V[:, c]
            sup_norms[kk] = float(np.max(np.abs(v)))
            if eta is not None:
                fact = factorize(H, SpectralParameter(float(eigs[kk]), eta))
                sites = set(rng.choice(H.n, size=min(n_check, H.n), replace=False).tolist())
                sites.add(int(np.argmax(np.abs(v))))
                sites = sorted(sites)
                G = fact.columns(sites)
                for c2, site in enumerate(sites):
                    checks += 1
                    if v[site] ** 2 > eta * G[site, c2].imag * (1 + 1e-9) + 1e-15:
                        violations += 1
    best = max(sup_norms.values(), default=0.0)
    return DelocalizationReport(best, len(sup_norms), sup_norms, violations, checks, failures)
