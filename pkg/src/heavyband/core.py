"""Banded symmetric matrices, spectral parameters and spectral domains.

Indices are 0-based throughout the package.  Formulas written with the
1-based site labels of the 1d lattice are translated at the call site.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class BandedSymmetricMatrix:
    """Real symmetric matrix stored as its ``K + 1`` upper diagonals.

    ``bands[d][i]`` holds ``M[i, i + d]``; the lower triangle is implied.
    """

    n: int
    bandwidth: int
    bands: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("matrix dimension must be positive")
        if self.bandwidth < 0:
            raise ValueError("bandwidth must be non-negative")
        bands = []
        for d in range(self.bandwidth + 1):
            length = max(self.n - d, 0)
            if d < len(self.bands):
                b = np.array(self.bands[d], dtype=float)
            else:
                b = np.zeros(length)
            if b.shape != (length,):
                raise ValueError(f"band {d} must have length {length}, got {b.shape}")
            b.setflags(write=False)
            bands.append(b)
        if len(self.bands) > self.bandwidth + 1:
            raise ValueError("more bands supplied than the bandwidth allows")
        object.__setattr__(self, "bands", tuple(bands))

    @classmethod
    def zeros(cls, n: int, bandwidth: int = 0) -> "BandedSymmetricMatrix":
        return cls(n, bandwidth, tuple(np.zeros(max(n - d, 0)) for d in range(bandwidth + 1)))

    @classmethod
    def from_dense(cls, M, bandwidth: int | None = None) -> "BandedSymmetricMatrix":
        M = np.asarray(M, dtype=float)
        n = M.shape[0]
        if M.shape != (n, n):
            raise ValueError("expected a square matrix")
        if not np.allclose(M, M.T, rtol=0, atol=0):
            raise ValueError("matrix is not symmetric")
        if bandwidth is None:
            nz = np.argwhere(M != 0)
            bandwidth = int(np.max(np.abs(nz[:, 0] - nz[:, 1]))) if len(nz) else 0
        else:
            i, j = np.nonzero(M)
            if len(i) and np.max(np.abs(i - j)) > bandwidth:
                raise ValueError("matrix has entries outside the requested bandwidth")
        return cls(n, bandwidth, tuple(np.diagonal(M, d).copy() for d in range(bandwidth + 1)))

    def get(self, i: int, j: int) -> float:
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError((i, j))
        i, j = min(i, j), max(i, j)
        d = j - i
        if d > self.bandwidth:
            return 0.0
        return float(self.bands[d][i])

    @property
    def diagonal(self) -> np.ndarray:
        return self.bands[0]

    def trace(self) -> float:
        return float(np.sum(self.bands[0]))

    def to_dense(self) -> np.ndarray:
        M = np.zeros((self.n, self.n))
        idx = np.arange(self.n)
        for d, b in enumerate(self.bands):
            if len(b):
                M[idx[: self.n - d], idx[d:]] = b
                M[idx[d:], idx[: self.n - d]] = b
        return M

    def with_bandwidth(self, bandwidth: int) -> "BandedSymmetricMatrix":
        """Same matrix, zero-padded (or trimmed, if the dropped bands vanish) to ``bandwidth``."""
        if bandwidth < self.bandwidth:
            for b in self.bands[bandwidth + 1 :]:
                if np.any(b != 0):
                    raise ValueError("cannot drop non-zero bands")
            return BandedSymmetricMatrix(self.n, bandwidth, self.bands[: bandwidth + 1])
        return BandedSymmetricMatrix(self.n, bandwidth, self.bands)

    def __add__(self, other: "BandedSymmetricMatrix") -> "BandedSymmetricMatrix":
        if not isinstance(other, BandedSymmetricMatrix):
            return NotImplemented
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        K = max(self.bandwidth, other.bandwidth)
        a, b = self.with_bandwidth(K), other.with_bandwidth(K)
        return BandedSymmetricMatrix(self.n, K, tuple(x + y for x, y in zip(a.bands, b.bands)))

    def scaled(self, c: float) -> "BandedSymmetricMatrix":
        return BandedSymmetricMatrix(self.n, self.bandwidth, tuple(c * b for b in self.bands))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        y = self.bands[0] * x
        for d in range(1, self.bandwidth + 1):
            b = self.bands[d]
            if len(b):
                y = y.astype(np.result_type(y, x, b), copy=False)
                y[:-d] += b * x[d:]
                y[d:] += b * x[:-d]
        return y

    def norm_inf(self) -> float:
        """Max absolute row sum (an upper bound for the spectral norm)."""
        s = np.abs(self.bands[0]).copy()
        for d in range(1, self.bandwidth + 1):
            b = np.abs(self.bands[d])
            s[:-d] += b
            s[d:] += b
        return float(np.max(s))

    def minor(self, removed: Iterable[int]) -> tuple["BandedSymmetricMatrix", np.ndarray]:
        """Delete the rows and columns in ``removed``.

        Returns the minor and the kept original indices.  Deleting rows of a
        band matrix never widens the band.
        """
        removed = set(int(k) for k in removed)
        keep = np.array([k for k in range(self.n) if k not in removed], dtype=int)
        if len(keep) == 0:
            raise ValueError("cannot remove every index")
        bands = [np.zeros(max(len(keep) - d, 0)) for d in range(self.bandwidth + 1)]
        for d in range(self.bandwidth + 1):
            # entries M[keep[p], keep[p + d]]
            if len(keep) > d:
                i = keep[: len(keep) - d]
                j = keep[d:]
                off = j - i
                vals = np.zeros(len(i))
                ok = off <= self.bandwidth
                for dd in np.unique(off[ok]):
                    sel = ok & (off == dd)
                    vals[sel] = self.bands[dd][i[sel]]
                bands[d] = vals
        return BandedSymmetricMatrix(len(keep), self.bandwidth, tuple(bands)), keep


@dataclass(frozen=True)
class SpectralParameter:
    E: float
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be strictly positive, got {self.eta}")

    @property
    def z(self) -> complex:
        return complex(self.E, self.eta)

    @classmethod
    def from_complex(cls, z: complex) -> "SpectralParameter":
        return cls(float(z.real), float(z.imag))


@dataclass(frozen=True)
class RemovalSet:
    points: tuple[float, ...]
    radius: float

    def __contains__(self, E: float) -> bool:
        return any(abs(E - c) <= self.radius for c in self.points)

    def intervals(self) -> list[tuple[float, float]]:
        """Removed intervals, merged where they overlap."""
        out: list[list[float]] = []
        for c in self.points:
            lo, hi = c - self.radius, c + self.radius
            if out and lo <= out[-1][1]:
                out[-1][1] = max(out[-1][1], hi)
            else:
                out.append([lo, hi])
        return [(lo, hi) for lo, hi in out]


def removal_set(K: int, p: int) -> RemovalSet:
    """Energies in (-2, 2) where ``sin(l * arccos(E / 2))`` vanishes for some 2 <= l <= K."""
    if K < 0 or p < 1:
        raise ValueError("need K >= 0 and p >= 1")
    pts: set[float] = set()
    for ell in range(2, K + 1):
        for m in range(1, ell):
            # snap to 15 digits so equal roots from different l coincide
            pts.add(round(2.0 * math.cos(m * math.pi / ell), 15) + 0.0)
    return RemovalSet(tuple(sorted(pts)), 10.0 ** (-p))


ETA_MODES = ("entrywise", "trace")


@dataclass(frozen=True)
class SpectralDomain:
    """A set ``{E + i eta : |E| <= 2 - kappa, eta_floor(N) <= eta <= 1}`` with optional removals.

    ``sigma = 0`` is the unscaled model, for which both eta modes give the
    floor ``N**(-1 + epsilon)``.
    """

    epsilon: float
    kappa: float
    sigma: float = 0.0
    alpha: float = 1.0
    K: int = 0
    p: int = 3
    eta_exponent_mode: str = "entrywise"
    remove: bool = True

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < self.kappa < 2:
            raise ValueError("kappa must lie in (0, 2)")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.eta_exponent_mode not in ETA_MODES:
            raise ValueError(f"eta_exponent_mode must be one of {ETA_MODES}")

    def eta_floor(self, N: int) -> float:
        factor = 2.0 if self.eta_exponent_mode == "entrywise" else 1.0
        return float(N) ** (-1.0 + self.epsilon + factor * self.sigma * self.alpha)

    def removal(self) -> RemovalSet:
        if not self.remove:
            return RemovalSet((), 10.0 ** (-self.p))
        return removal_set(self.K, self.p)


def _avoid_removed(E: np.ndarray, rs: RemovalSet, lo: float, hi: float) -> np.ndarray:
    out = []
    intervals = rs.intervals()
    for e in E:
        for a, b in intervals:
            if a < e < b:
                # ties go to the upper edge
                e = a if (e - a) < (b - e) else b
                break
        out.append(min(max(e, lo), hi))
    return np.array(out)


def domain_mesh(domain: SpectralDomain, N: int, nE: int, nEta: int) -> list[SpectralParameter]:
    if nE < 1 or nEta < 1:
        raise ValueError("mesh sizes must be at least 1")
    floor = domain.eta_floor(N)
    if floor >= 1:
        raise ValueError(f"eta floor {floor:.3g} >= 1: N={N} too small for this domain")
    lo, hi = -2.0 + domain.kappa, 2.0 - domain.kappa
    E = np.linspace(lo, hi, nE)
    E = _avoid_removed(E, domain.removal(), lo, hi)
    # dedupe while keeping order
    energies: list[float] = []
    for e in E:
        if not any(e == f for f in energies):
            energies.append(float(e))
    etas = np.geomspace(floor, 1.0, nEta) if nEta > 1 else np.array([floor])
    return [SpectralParameter(e, float(h)) for e in energies for h in etas]


def as_spectral_parameter(z) -> SpectralParameter:
    if isinstance(z, SpectralParameter):
        return z
    return SpectralParameter.from_complex(complex(z))


def as_complex(z) -> complex:
    return z.z if isinstance(z, SpectralParameter) else complex(z)


def pairs_in_band(n: int, K: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i, min(i + K + 1, n))]


def mesh_values(mesh: Sequence[SpectralParameter]) -> np.ndarray:
    return np.array([p.z for p in mesh])
