"""Deterministic reference objects: lattice Laplacian, closed-form Green
functions, the arcsine and semicircle Stieltjes transforms."""

from __future__ import annotations

import cmath
import math

import numpy as np

from .core import BandedSymmetricMatrix, as_complex
from .rng import make_rng


def laplacian_1d(N: int) -> BandedSymmetricMatrix:
    if N < 1:
        raise ValueError("N must be positive")
    return BandedSymmetricMatrix(N, 1, (np.zeros(N), np.ones(N - 1)))


def beta_limit_matrix(N: int) -> BandedSymmetricMatrix:
    """Deterministic Jacobi matrix with off-diagonal ``2 sqrt((N - k) / N)``, k = 1..N-1."""
    if N < 1:
        raise ValueError("N must be positive")
    k = np.arange(1, N)
    return BandedSymmetricMatrix(N, 1, (np.zeros(N), 2.0 * np.sqrt((N - k) / N)))


def wigner(N: int, seed: int, diagonal_variance: str = "1/N") -> np.ndarray:
    """Dense symmetric Gaussian matrix with off-diagonal variance 1/N.

    ``diagonal_variance="2/N"`` gives the GOE convention.
    """
    if diagonal_variance not in ("1/N", "2/N"):
        raise ValueError("diagonal_variance must be '1/N' or '2/N'")
    rng = make_rng(seed, 0, "wigner")
    X = rng.standard_normal((N, N)) / math.sqrt(N)
    W = np.triu(X, 1)
    W = W + W.T
    d = np.diagonal(X).copy()
    if diagonal_variance == "2/N":
        d *= math.sqrt(2.0)
    W[np.diag_indices(N)] = d
    return W


def _lambda(z: complex) -> complex:
    """``arccos(z / 2)`` on the branch with ``Im lambda <= 0``."""
    lam = cmath.acos(z / 2)
    if lam.imag > 0:
        lam = -lam
    return lam


class ClosedFormContext:
    """Precomputed quantities for the Laplacian resolvent at one ``z``.

    With ``u = exp(-i lambda)`` (so ``|u| < 1`` for ``Im z > 0``) every
    ``cos(m lambda) / sin((N + 1) lambda)`` factor is rewritten as a ratio of
    powers of ``u`` that never exceed one in modulus.
    """

    def __init__(self, N: int, z):
        self.N = int(N)
        self.z = as_complex(z)
        if self.z.imag <= 0:
            raise ValueError("closed form requires Im z > 0")
        self.lam = _lambda(self.z)
        self.sin_lam = cmath.sin(self.lam)
        if abs(self.sin_lam) < 1e-14:
            raise ArithmeticError("z is numerically at a band edge (+-2)")
        self.u = cmath.exp(-1j * self.lam)
        self.log_u = -1j * self.lam
        self._den = 2.0 * self.sin_lam * (1.0 - self._pow(2 * self.N + 2))
        self._table: np.ndarray | None = None

    def _pow(self, m):
        # u**m through exp/log so arrays of exponents vectorise
        return np.exp(np.asarray(m, dtype=float) * self.log_u)

    def entries(self, i, j):
        """``G_ij`` for 0-based index arrays ``i`` and ``j``."""
        i = np.asarray(i) + 1
        j = np.asarray(j) + 1
        d = np.abs(i - j)
        s = i + j
        M = 2 * self.N + 2
        if np.any(i < 1) or np.any(i > self.N) or np.any(j < 1) or np.any(j > self.N):
            raise IndexError("index outside 0..N-1")
        if self._table is None:
            # every exponent below lies in [0, M]
            self._table = self._pow(np.arange(M + 1))
        t = self._table
        num = t[d] + t[M - d] - t[s] - t[M - s]
        return 1j * num / self._den

    def diagonal(self) -> np.ndarray:
        j = np.arange(self.N)
        return self.entries(j, j)

    def trace(self) -> complex:
        return complex(np.mean(self.diagonal()))


def green_closed_form(N: int, z, i: int, j: int) -> complex:
    """Exact ``[(L - z)^{-1}]_{ij}`` for the N-site Laplacian ``L`` (0-based i, j)."""
    if not (0 <= i < N and 0 <= j < N):
        raise IndexError((i, j))
    return complex(ClosedFormContext(N, z).entries(i, j))


def green_closed_form_matrix(N: int, z) -> np.ndarray:
    ctx = ClosedFormContext(N, z)
    idx = np.arange(N)
    return ctx.entries(idx[:, None], idx[None, :])


def green_closed_form_naive(N: int, z, i: int, j: int, lam: complex | None = None) -> complex:
    """Direct trigonometric evaluation; overflows once N * Im(lambda) is large.

    ``lam`` may be either root of ``2 cos(lam) = z``; kept for branch checks.
    """
    z = as_complex(z)
    lam = _lambda(z) if lam is None else lam
    a, b = i + 1, j + 1
    d, s = abs(a - b), a + b
    num = cmath.cos((N + 1 - d) * lam) - cmath.cos((N + 1 - s) * lam)
    return num / (2 * cmath.sin(lam) * cmath.sin((N + 1) * lam))


def laplacian_trace(N: int, z) -> complex:
    """Normalised trace of the Laplacian resolvent, averaged from exact diagonal entries."""
    return ClosedFormContext(N, z).trace()


def determinants_recursion(D: float, kmax: int) -> np.ndarray:
    """``M_k = det(L_k + D I)`` for k = 0..kmax by the three-term recursion."""
    M = np.empty(kmax + 1)
    M[0] = 1.0
    if kmax >= 1:
        M[1] = D
    for k in range(1, kmax):
        M[k + 1] = D * M[k] - M[k - 1]
    return M


def determinants_closed(D: float, kmax: int) -> np.ndarray:
    lam = math.acos(-D / 2)
    k = np.arange(kmax + 1)
    return (-1.0) ** k * np.sin((k + 1) * lam) / math.sin(lam)


def stieltjes_arcsine(z) -> complex:
    z = as_complex(z)
    if z.imag <= 0:
        raise ValueError("need Im z > 0")
    # product of principal roots behaves like z at infinity, so m ~ -1/z
    return -1.0 / (cmath.sqrt(z - 2) * cmath.sqrt(z + 2))


def stieltjes_semicircle(z) -> complex:
    z = as_complex(z)
    if z.imag <= 0:
        raise ValueError("need Im z > 0")
    # (-z + s) / 2 rewritten as -2 / (z + s) to avoid cancellation at large |z|
    return -2.0 / (z + cmath.sqrt(z - 2) * cmath.sqrt(z + 2))


def arcsine_density(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 2
    out[inside] = 1.0 / (2 * np.pi * np.sqrt(1 - x[inside] ** 2 / 4))
    return out


def arcsine_cdf(x):
    x = np.clip(np.asarray(x, dtype=float), -2.0, 2.0)
    return np.arcsin(x / 2) / np.pi + 0.5


def classical_locations(N: int, mirrored: bool = False) -> np.ndarray:
    """Arcsine quantiles ``gamma_i = 2 sin(pi (i - 1/2) / N)``, i = 1..N/2.

    With ``mirrored=True`` the negative side ``-gamma_i`` is prepended so the
    result is an ascending array of length N.
    """
    if N < 2 or N % 2:
        raise ValueError("classical locations are defined for even N")
    i = np.arange(1, N // 2 + 1)
    gamma = 2.0 * np.sin(np.pi * (i - 0.5) / N)
    if mirrored:
        return np.concatenate([-gamma[::-1], gamma])
    return gamma


def offdiag_imag_ratio(z, N: int, K: int) -> complex:
    """``cos((N + 1 - K) lam) / cos((N + 1) lam)``, the bulk value of ``G_{i,i+K} / G_{ii}``."""
    if K == 0:
        return 1.0 + 0j
    ctx = ClosedFormContext(N, z)
    m1, m2 = N + 1 - K, N + 1
    u = ctx._pow
    return complex(u(K) * (1 + u(2 * m1)) / (1 + u(2 * m2)))
