"""Heavy-tailed noise: samplers, banded noise matrices, labels and atypical-entry events.

Draws for a matrix are taken in row-major band order: for each row ``i``,
columns ``j = i .. i + K``.  The mirror entry ``(j, i)`` is never sampled.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache

import numpy as np

from .core import BandedSymmetricMatrix
from .rng import make_rng

FAMILIES = ("stable_cms", "pareto", "truncated", "heavier_moment", "zero")


@dataclass(frozen=True)
class NoiseSpec:
    """Law of the banded noise matrix.

    ``omega`` sets the truncation level ``q = N**(omega / (10 alpha))`` of
    the truncated family unless ``q`` is given explicitly; ``delta`` is the
    extra moment of the heavier_moment family, whose tail exponent is
    ``alpha + 2 delta``.
    """

    family: str = "pareto"
    alpha: float = 1.0
    sigma: float = 0.0
    K: int = 0
    delta: float = 0.5
    seed: int = 0
    omega: float = 0.4
    q: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; expected one of {FAMILIES}")
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if self.sigma < 0 or self.sigma >= 1 / self.alpha:
            raise ValueError("sigma must lie in [0, 1/alpha)")
        if self.K < 0:
            raise ValueError("K must be non-negative")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.q is not None and self.q < 1:
            raise ValueError("q must be at least 1")

    def truncation_q(self, N: int) -> float:
        if self.q is not None:
            return float(self.q)
        return float(N) ** (self.omega / (10 * self.alpha))

    def scale(self, N: int) -> float:
        return float(N) ** (self.sigma - 1 / self.alpha)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown noise keys: {sorted(extra)}")
        return cls(**d)


# --- scalar laws -----------------------------------------------------------


def sample_symmetric_stable(alpha: float, rng: np.random.Generator, size=None):
    """Standard symmetric alpha-stable draws (Chambers-Mallows-Stuck)."""
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    V = rng.uniform(-np.pi / 2, np.pi / 2, size)
    if alpha == 1:
        return np.tan(V)
    W = rng.standard_exponential(size)
    return (
        np.sin(alpha * V)
        / np.cos(V) ** (1 / alpha)
        * (np.cos((1 - alpha) * V) / W) ** ((1 - alpha) / alpha)
    )


def pareto_magnitude(U, alpha: float):
    """``|xi| = U**(-1/alpha)``, the inverse of ``P(|xi| >= x) = x**-alpha``."""
    return np.asarray(U, dtype=float) ** (-1.0 / alpha)


def sample_pareto_symmetric(alpha: float, rng: np.random.Generator, size=None):
    if not 0 < alpha:
        raise ValueError("alpha must be positive")
    U = 1.0 - rng.random(size)  # (0, 1]
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return sign * pareto_magnitude(U, alpha)


@lru_cache(maxsize=256)
def _stable_sf(alpha: float, x: float) -> float:
    from scipy.stats import levy_stable

    return float(levy_stable.sf(x, alpha, 0.0))


def tail_probability(family: str, alpha: float, x: float, delta: float = 0.5) -> float:
    """``P(|xi| >= x)`` for the unscaled variable of each family."""
    x = float(x)
    if family in ("pareto", "truncated"):
        return 1.0 if x <= 1 else x**-alpha
    if family == "heavier_moment":
        return 1.0 if x <= 1 else x ** -(alpha + 2 * delta)
    if family == "stable_cms":
        if x <= 0:
            return 1.0
        if alpha == 1:
            return 1.0 - 2.0 / math.pi * math.atan(x)
        return 2.0 * _stable_sf(float(alpha), x)
    if family == "zero":
        return 0.0 if x > 0 else 1.0
    raise ValueError(family)


def hill_estimator(samples, threshold: float) -> float:
    """Tail exponent from exceedances of ``|samples|`` over ``threshold``."""
    x = np.abs(np.asarray(samples, dtype=float))
    x = x[x > threshold]
    if len(x) == 0:
        raise ValueError("no exceedances above threshold")
    return float(len(x) / np.sum(np.log(x / threshold)))


def truncated_moment_bound(alpha: float, k: float, x: float) -> float:
    """Upper bound on ``E[|xi|^k 1{|xi| <= x}]`` for a tail ``P(|xi| >= t) <= t**-alpha``.

    ``k / (k - alpha) x**(k - alpha)`` when ``k > alpha``; for ``k < alpha`` the
    slowly varying factor is the constant ``alpha / (alpha - k)`` (the full
    k-th moment of the exact Pareto law).
    """
    if x < 1 or k < 1:
        raise ValueError("need x >= 1 and k >= 1")
    if k == alpha:
        raise ValueError("k == alpha is the boundary case and has no bound here")
    if k > alpha:
        return k / (k - alpha) * x ** (k - alpha)
    return max(1.0, alpha / (alpha - k))


def pareto_truncated_moment(alpha: float, k: float, x: float) -> float:
    """Exact ``E[|xi|^k 1{|xi| <= x}]`` for the symmetric Pareto law (support ``|xi| >= 1``)."""
    if x < 1:
        return 0.0
    if k == alpha:
        return alpha * math.log(x)
    return alpha / (k - alpha) * (x ** (k - alpha) - 1.0)


# --- matrices -------------------------------------------------------------


def band_entry_count(N: int, K: int) -> int:
    return sum(max(N - d, 0) for d in range(K + 1))


@lru_cache(maxsize=16)
def _band_order(N: int, K: int) -> tuple[np.ndarray, np.ndarray]:
    """(row, offset) of every in-band entry, in row-major band order."""
    rows, offs = [], []
    for d in range(K + 1):
        r = np.arange(N - d)
        rows.append(r)
        offs.append(np.full(len(r), d))
    rows = np.concatenate(rows)
    offs = np.concatenate(offs)
    order = np.lexsort((offs, rows))
    rows, offs = rows[order], offs[order]
    rows.flags.writeable = False
    offs.flags.writeable = False
    return rows, offs


def _scatter(N: int, K: int, values: np.ndarray, dtype=float) -> tuple[np.ndarray, ...]:
    rows, offs = _band_order(N, K)
    bands = [np.zeros(N - d, dtype=dtype) for d in range(K + 1)]
    for d in range(K + 1):
        sel = offs == d
        bands[d][rows[sel]] = values[sel]
    return tuple(bands)


def _gather(bands, N: int, K: int) -> np.ndarray:
    rows, offs = _band_order(N, K)
    out = np.empty(len(rows), dtype=bands[0].dtype)
    for d in range(K + 1):
        sel = offs == d
        out[sel] = bands[d][rows[sel]]
    return out


def _draw_unscaled(spec: NoiseSpec, N: int, n: int, rng: np.random.Generator) -> np.ndarray:
    fam = spec.family
    if fam == "zero":
        return np.zeros(n)
    if fam == "stable_cms":
        return sample_symmetric_stable(spec.alpha, rng, n)
    if fam == "pareto":
        return sample_pareto_symmetric(spec.alpha, rng, n)
    if fam == "heavier_moment":
        return sample_pareto_symmetric(spec.alpha + 2 * spec.delta, rng, n)
    if fam == "truncated":
        xi = sample_pareto_symmetric(spec.alpha, rng, n)
        cut = float(N) ** (1 / spec.alpha) / spec.truncation_q(N)
        xi[np.abs(xi) > cut] = 0.0
        return xi
    raise ValueError(fam)


def sample_entries(spec: NoiseSpec, N: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent scaled entries of the size-N model, without assembling a matrix."""
    return _draw_unscaled(spec, N, n, rng) * spec.scale(N)


def noise_rng(spec: NoiseSpec, N: int, trial: int = 0) -> np.random.Generator:
    return make_rng(spec.seed, (int(trial) << 32) | int(N), "noise")


def build_noise(
    N: int, spec: NoiseSpec, rng: np.random.Generator | None = None
) -> BandedSymmetricMatrix:
    """Banded noise matrix ``N**(sigma - 1/alpha) * xi``; seeded from ``spec.seed`` if no rng."""
    if N < 1:
        raise ValueError("N must be positive")
    if spec.family == "zero":
        return BandedSymmetricMatrix.zeros(N, spec.K)
    rng = noise_rng(spec, N) if rng is None else rng
    n = band_entry_count(N, spec.K)
    xi = _draw_unscaled(spec, N, n, rng)
    return BandedSymmetricMatrix(N, spec.K, _scatter(N, spec.K, xi * spec.scale(N)))


def band_values(A: BandedSymmetricMatrix) -> np.ndarray:
    """In-band entries of A in row-major band order."""
    return _gather(A.bands, A.n, A.bandwidth)


# --- labels ---------------------------------------------------------------


def label_cutoff(N: int, alpha: float, K: int, epsilon: float, sigma: float = 0.0) -> float:
    return (K + 1) ** (1 / alpha) * float(N) ** ((1 - epsilon / 10) / alpha) * float(N) ** (-sigma)


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    """T/F marks on the in-band pairs ``i <= j <= i + K``; ``F`` marks an atypically large draw."""

    N: int
    K: int
    F: tuple[np.ndarray, ...]  # F[d][i] is the label of pair (i, i + d)
    cutoff: float
    p_false: float

    def false_pairs(self) -> list[tuple[int, int]]:
        out = []
        for d, b in enumerate(self.F):
            out.extend((int(i), int(i) + d) for i in np.nonzero(b)[0])
        return sorted(out)

    def count_false(self) -> int:
        return int(sum(int(np.sum(b)) for b in self.F))

    def false_rows(self) -> np.ndarray:
        return np.array(sorted(i for i, _ in self.false_pairs()), dtype=int)

    def removal_indices(self) -> list[int]:
        """Sites touched by an F pair; deleting them leaves only T-labelled entries."""
        return sorted({k for pair in self.false_pairs() for k in pair})


def sample_labels(
    N: int, spec: NoiseSpec, epsilon: float, rng: np.random.Generator | None = None
) -> LabelMatrix:
    if spec.family not in ("pareto", "stable_cms"):
        raise ValueError("labels are defined for the pareto and stable_cms families")
    rng = make_rng(spec.seed, N, "labels") if rng is None else rng
    cutoff = label_cutoff(N, spec.alpha, spec.K, epsilon, spec.sigma)
    p_false = tail_probability(spec.family, spec.alpha, cutoff)
    n = band_entry_count(N, spec.K)
    flags = rng.random(n) < p_false
    return LabelMatrix(N, spec.K, _scatter(N, spec.K, flags, dtype=bool), cutoff, p_false)


def _conditional_draws(spec: NoiseSpec, n: int, cutoff: float, inside: bool, rng) -> np.ndarray:
    if n == 0:
        return np.zeros(0)
    if spec.family == "pareto":
        tail = cutoff**-spec.alpha if cutoff > 1 else 1.0
        if inside:
            U = rng.uniform(tail, 1.0, n)
            U[U <= 0] = 1.0
        else:
            U = tail * (1.0 - rng.random(n))  # (0, tail]
        mag = pareto_magnitude(U, spec.alpha)
        if not inside:
            mag = np.maximum(mag, cutoff)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return sign * mag
    # stable: batched rejection
    out = np.empty(0)
    p = tail_probability(spec.family, spec.alpha, cutoff)
    accept = (1 - p) if inside else p
    while len(out) < n:
        need = n - len(out)
        batch = int(min(max(2 * need / max(accept, 1e-12), 1024), 5_000_000))
        x = sample_symmetric_stable(spec.alpha, rng, batch)
        keep = np.abs(x) < cutoff if inside else np.abs(x) >= cutoff
        out = np.concatenate([out, x[keep][:need]])
    return out


def sample_from_labels(
    labels: LabelMatrix, spec: NoiseSpec, rng: np.random.Generator | None = None
) -> BandedSymmetricMatrix:
    """Noise matrix drawn conditionally on ``labels`` (T: below the cutoff, F: above)."""
    N, K = labels.N, labels.K
    rng = make_rng(spec.seed, N, "label-draws") if rng is None else rng
    flags = _gather(labels.F, N, K)
    xi = np.empty(len(flags))
    xi[~flags] = _conditional_draws(spec, int(np.sum(~flags)), labels.cutoff, True, rng)
    xi[flags] = _conditional_draws(spec, int(np.sum(flags)), labels.cutoff, False, rng)
    return BandedSymmetricMatrix(N, K, _scatter(N, K, xi * spec.scale(N)))


def separation_scale(N: int, epsilon: float, sigma_alpha: float = 0.0) -> float:
    return float(N) ** (1 - 2 * sigma_alpha - 0.5 * epsilon)


def admissible_count(N: int, K: int, epsilon: float, sigma_alpha: float = 0.0) -> float:
    return (K + 1) * float(N) ** (sigma_alpha + epsilon / 4)


def classify_label(L: LabelMatrix, N: int, epsilon: float, sigma_alpha: float = 0.0) -> str:
    """``separably_admissible``, ``admissible`` or ``neither``."""
    if L.count_false() > admissible_count(N, L.K, epsilon, sigma_alpha):
        return "neither"
    rows = L.false_rows() + 1  # 1-based site labels
    lsep = separation_scale(N, epsilon, sigma_alpha)
    if len(rows):
        if np.any(rows <= lsep) or np.any(rows >= N - lsep):
            return "admissible"
        if len(rows) > 1 and np.min(np.diff(rows)) <= lsep:
            return "admissible"
    return "separably_admissible"


def atypical_entries(A: BandedSymmetricMatrix, threshold: float) -> list[tuple[int, int]]:
    out = []
    for d, b in enumerate(A.bands):
        out.extend((int(i), int(i) + d) for i in np.nonzero(np.abs(b) > threshold)[0])
    return sorted(out)


def detect_DN(A: BandedSymmetricMatrix, q: float, L_scale: float) -> bool:
    """Atypical entries (``|A| > 1/q``) that are close to each other or to the boundary."""
    rows = np.array([i + 1 for i, _ in atypical_entries(A, 1.0 / q)])
    if len(rows) == 0:
        return False
    N = A.n
    if np.any(rows <= L_scale) or np.any(rows >= N - L_scale):
        return True
    return len(rows) > 1 and bool(np.min(np.diff(np.sort(rows))) <= 2 * L_scale)


def large_entry_count(
    A: BandedSymmetricMatrix, alpha: float, epsilon: float, sigma: float = 0.0
) -> tuple[int, float]:
    """Count of entries of ``N**sigma A`` above ``(K+1)^(1/alpha) N^(-eps/(10 alpha))``, and the cap
    ``2 (K+1) N^(sigma alpha + eps/4)`` that this count should stay below.

    Pass the matrix already carrying the ``N**sigma`` factor.
    """
    N, K = A.n, A.bandwidth
    thr = (K + 1) ** (1 / alpha) * float(N) ** (-epsilon / (10 * alpha))
    count = len(atypical_entries(A, thr))
    return count, 2 * (K + 1) * float(N) ** (sigma * alpha + epsilon / 4)
