"""Numerical Green functions of banded symmetric matrices.

``(H - z)`` is factorised once per spectral parameter with LAPACK's banded
LU with partial pivoting (``zgbtrf``); Green-function columns are then
obtained by banded triangular solves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import lapack

from .core import BandedSymmetricMatrix, SpectralParameter, as_complex, as_spectral_parameter

_CHUNK = 256


class SingularShiftError(np.linalg.LinAlgError):
    """A pivot of the shifted band LU underflowed."""


class ShiftedBandFactorization:
    """Banded LU factors of ``H - z``.

    Immutable once built; the column cache only memoises pure solves.
    """

    def __init__(self, H: BandedSymmetricMatrix, z):
        self.H = H
        self.param = as_spectral_parameter(z)
        self.z = self.param.z
        self.n = H.n
        self.K = H.bandwidth
        K, n = self.K, self.n
        # LAPACK general-band layout: A[i, j] -> ab[2K + i - j, j], K extra rows for fill
        ab = np.zeros((3 * K + 1, n), dtype=complex)
        ab[2 * K, :] = H.bands[0] - self.z
        for d in range(1, K + 1):
            b = H.bands[d]
            if len(b):
                ab[2 * K - d, d:] = b  # upper: A[i, i + d]
                ab[2 * K + d, : n - d] = b  # lower: A[i + d, i]
        lu, piv, info = lapack.zgbtrf(ab, K, K)
        if info < 0:
            raise ValueError(f"zgbtrf: illegal argument {-info}")
        pivots = np.abs(lu[2 * K, :])
        if info > 0 or np.min(pivots) < 1e-300:
            raise SingularShiftError(f"numerically singular shift at z={self.z}")
        self.lu = lu
        self.piv = piv
        self.effective_bandwidth = 2 * K
        self._cache: dict[int, np.ndarray] = {}

    def solve(self, B: np.ndarray) -> np.ndarray:
        B = np.asarray(B, dtype=complex)
        x, info = lapack.zgbtrs(self.lu, self.K, self.K, B, self.piv)
        if info != 0:
            raise ValueError(f"zgbtrs failed with info={info}")
        return x

    def columns(self, js: Sequence[int]) -> np.ndarray:
        """Green-function columns ``G[:, j]`` for each ``j`` in ``js`` (n x len(js))."""
        js = [int(j) for j in js]
        missing = [j for j in dict.fromkeys(js) if j not in self._cache]
        for start in range(0, len(missing), _CHUNK):
            block = missing[start : start + _CHUNK]
            E = np.zeros((self.n, len(block)), dtype=complex)
            E[block, np.arange(len(block))] = 1.0
            X = self.solve(E)
            for c, j in enumerate(block):
                self._cache[j] = X[:, c]
        if not js:
            return np.zeros((self.n, 0), dtype=complex)
        return np.stack([self._cache[j] for j in js], axis=1)

    def column(self, j: int) -> np.ndarray:
        return self.columns([j])[:, 0]

    def iter_column_blocks(self, chunk: int = _CHUNK):
        """Yield ``(js, G[:, js])`` over all columns without caching them."""
        for start in range(0, self.n, chunk):
            js = np.arange(start, min(start + chunk, self.n))
            E = np.zeros((self.n, len(js)), dtype=complex)
            E[js, np.arange(len(js))] = 1.0
            yield js, self.solve(E)

    def diagonal(self) -> np.ndarray:
        out = np.empty(self.n, dtype=complex)
        for js, X in self.iter_column_blocks():
            out[js] = X[js, np.arange(len(js))]
        return out

    def full(self) -> np.ndarray:
        return self.solve(np.eye(self.n, dtype=complex))

    def residual(self, js: Sequence[int]) -> float:
        """``max |(H - z) G[:, j] - e_j|`` over the requested columns."""
        X = self.columns(js)
        R = np.stack([self.H.matvec(X[:, c]) - self.z * X[:, c] for c in range(X.shape[1])], axis=1)
        R[list(js), np.arange(len(js))] -= 1.0
        return float(np.max(np.abs(R)))


def factorize(H: BandedSymmetricMatrix, z) -> ShiftedBandFactorization:
    return ShiftedBandFactorization(H, z)


def green_entries(fact: ShiftedBandFactorization, pairs: Iterable[tuple[int, int]]) -> dict:
    """``{(i, j): G_ij}``; each pair is read from whichever of columns i, j is already solved."""
    pairs = [(int(i), int(j)) for i, j in pairs]
    for i, j in pairs:
        if not (0 <= i < fact.n and 0 <= j < fact.n):
            raise IndexError((i, j))
    chosen: set[int] = set(fact._cache)
    plan = []
    for i, j in pairs:
        if j in chosen:
            plan.append((i, j, j, i))
        elif i in chosen:
            plan.append((i, j, i, j))
        else:
            chosen.add(j)
            plan.append((i, j, j, i))
    fact.columns(sorted({col for _, _, col, _ in plan}))
    return {(i, j): complex(fact._cache[col][row]) for i, j, col, row in plan}


def stieltjes_trace(H: BandedSymmetricMatrix, z) -> complex:
    """``(1/N) Tr (H - z)^{-1}`` from the exact diagonal of the inverse."""
    return complex(np.mean(factorize(H, z).diagonal()))


def stieltjes_from_eigenvalues(eigs: np.ndarray, z, N: int | None = None) -> complex:
    """Same quantity from a spectrum: ``(1/N) sum_k 1 / (lambda_k - z)``."""
    z = as_complex(z)
    eigs = np.asarray(eigs, dtype=float)
    N = len(eigs) if N is None else N
    return complex(np.sum(1.0 / (eigs - z)) / N)


def ward_residual(H: BandedSymmetricMatrix, z, k: int) -> float:
    fact = factorize(H, z)
    g = fact.column(k)
    eta = fact.param.eta
    return float(abs(np.sum(np.abs(g) ** 2) - g[k].imag / eta))


def resolvent_identity_residual(
    H_inf: BandedSymmetricMatrix,
    A: BandedSymmetricMatrix,
    z,
    full_limit: int = 512,
    samples: int = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """Max entry of ``(G - G_inf) + G A G_inf``; all entries for N <= full_limit."""
    H = H_inf + A
    F, F_inf = factorize(H, z), factorize(H_inf, z)
    n = H.n
    if n <= full_limit:
        G, G_inf = F.full(), F_inf.full()
        R = (G - G_inf) + G @ (A.to_dense() @ G_inf)
        return float(np.max(np.abs(R)))
    rng = np.random.default_rng(0) if rng is None else rng
    ii = rng.integers(0, n, samples)
    jj = rng.integers(0, n, samples)
    worst = 0.0
    for i, j in zip(ii, jj):
        gi = F.column(int(i))  # row i of G equals column i by symmetry
        g_inf_j = F_inf.column(int(j))
        val = (gi[j] - g_inf_j[i]) + gi @ A.matvec(g_inf_j)
        worst = max(worst, abs(val))
    return float(worst)


@dataclass
class EtaComparison:
    entry_bound_holds: bool
    diagonal_ratio_holds: bool
    worst_entry_slack: float
    worst_ratio_slack: float

    def __bool__(self):
        return self.entry_bound_holds and self.diagonal_ratio_holds


def eta_comparison_check(
    H: BandedSymmetricMatrix, E: float, eta: float, eta_prime: float, tol: float = 1e-9
) -> EtaComparison:
    """Check the two comparison inequalities between ``G(E + i eta)`` and ``G(E + i(eta + eta'))``.

    Slack is ``rhs - lhs`` (negative means violated); ``tol`` absorbs rounding.
    """
    if eta <= 0 or eta_prime < 0:
        raise ValueError("need eta > 0 and eta_prime >= 0")
    G = factorize(H, SpectralParameter(E, eta)).full()
    Gp = factorize(H, SpectralParameter(E, eta + eta_prime)).full()
    lhs = np.abs(G - Gp)
    rhs = eta_prime / (2 * eta) * (np.abs(np.diag(Gp).imag)[:, None] + np.abs(np.diag(G).imag)[None, :])
    entry_slack = float(np.min(rhs - lhs))
    a, b = np.abs(np.diag(Gp)), np.abs(np.diag(G))
    ratio = np.minimum(a, b) / np.maximum(a, b)
    ratio_slack = float(np.min(ratio - (1 - eta_prime / eta)))
    return EtaComparison(entry_slack >= -tol, ratio_slack >= -tol, entry_slack, ratio_slack)


def minor_trace(H: BandedSymmetricMatrix, T: Iterable[int], z) -> complex:
    """Trace of the resolvent of H with rows/columns in ``T`` deleted, divided by the full N."""
    T = sorted(set(int(t) for t in T))
    if len(T) >= H.n:
        raise ValueError("cannot remove every index")
    if not T:
        return stieltjes_trace(H, z)
    M, _ = H.minor(T)
    return complex(np.sum(factorize(M, z).diagonal()) / H.n)


def single_removal_difference(H: BandedSymmetricMatrix, k: int, z) -> complex:
    """``(1/N) [G^2]_kk / G_kk``, the trace change caused by deleting site ``k``."""
    fact = factorize(H, z)
    g = fact.column(k)
    return complex(np.sum(g * g) / g[k] / H.n)


@dataclass
class GreenReport:
    z: SpectralParameter
    entries: dict = field(default_factory=dict)
    trace: complex | None = None
    entry_deviations: dict = field(default_factory=dict)
    trace_deviation: float | None = None

    def to_dict(self) -> dict:
        def c(v):
            return [float(v.real), float(v.imag)]

        return {
            "z": c(self.z.z),
            "entries": [[i, j, c(v)] for (i, j), v in sorted(self.entries.items())],
            "trace": None if self.trace is None else c(self.trace),
            "entry_deviations": [[i, j, float(v)] for (i, j), v in sorted(self.entry_deviations.items())],
            "trace_deviation": self.trace_deviation,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GreenReport":
        def c(v):
            return complex(v[0], v[1])

        return cls(
            z=SpectralParameter.from_complex(c(d["z"])),
            entries={(i, j): c(v) for i, j, v in d["entries"]},
            trace=None if d.get("trace") is None else c(d["trace"]),
            entry_deviations={(i, j): float(v) for i, j, v in d.get("entry_deviations", [])},
            trace_deviation=d.get("trace_deviation"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False)


def green_report(
    H: BandedSymmetricMatrix,
    z,
    pairs: Iterable[tuple[int, int]] = (),
    reference=None,
    trace_reference: complex | None = None,
    with_trace: bool = True,
) -> GreenReport:
    """Entries and trace at one z, with deviations from ``reference(i, j)`` if given."""
    fact = factorize(H, z)
    entries = green_entries(fact, pairs)
    report = GreenReport(fact.param, entries)
    if with_trace:
        report.trace = complex(np.mean(fact.diagonal()))
        if trace_reference is not None:
            report.trace_deviation = float(abs(report.trace - trace_reference))
    if reference is not None:
        report.entry_deviations = {k: float(abs(v - reference(*k))) for k, v in entries.items()}
    return report
