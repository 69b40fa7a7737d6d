"""Monte Carlo experiments.

Each experiment turns ``(config, N, trial seed)`` into one TrialRecord and
knows which statistics it gates, how to calibrate their thresholds from a
pilot run, and how to turn aggregates into verdicts.
"""

from __future__ import annotations

import math
import time

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ..core import BandedSymmetricMatrix, SpectralDomain, SpectralParameter, domain_mesh
from ..models import (
    ClosedFormContext,
    beta_limit_matrix,
    laplacian_1d,
    laplacian_trace,
    stieltjes_arcsine,
    stieltjes_semicircle,
    wigner,
)
from ..noise import (
    NoiseSpec,
    build_noise,
    classify_label,
    sample_from_labels,
    sample_entries,
    sample_labels,
    tail_probability,
)
from ..resolvent import factorize
from ..rng import make_rng
from ..spectrum import (
    delocalization_report,
    eigenvalues,
    empirical_vs_arcsine,
    rigidity_report,
)
from .config import ConfigError, ExperimentConfig
from .records import Gate, TrialRecord

_CHUNK = 256
_HEAVY = ("pareto", "stable_cms")


# --- operators ------------------------------------------------------------


class Operator:
    """A banded matrix or, for the Wigner model, a dense one."""

    def __init__(self, H):
        self.H = H
        self.dense = isinstance(H, np.ndarray)
        self.n = H.shape[0] if self.dense else H.n

    def __add__(self, A: BandedSymmetricMatrix) -> "Operator":
        if self.dense:
            return Operator(self.H + A.to_dense())
        return Operator(self.H + A)

    def eigenvalues(self) -> np.ndarray:
        if self.dense:
            return np.linalg.eigvalsh(self.H)
        return eigenvalues(self.H)

    def solver(self, z):
        if self.dense:
            fac = lu_factor(self.H - z * np.eye(self.n))
            return lambda js: lu_solve(fac, _unit_block(self.n, js))
        fact = factorize(self.H, z)
        return lambda js: fact.solve(_unit_block(self.n, js))

    def minor(self, T) -> "Operator":
        if self.dense:
            keep = np.setdiff1d(np.arange(self.n), T)
            return Operator(self.H[np.ix_(keep, keep)])
        return Operator(self.H.minor(T)[0])


def _unit_block(n, js):
    E = np.zeros((n, len(js)), dtype=complex)
    E[js, np.arange(len(js))] = 1.0
    return E


def base_operator(cfg: ExperimentConfig, N: int, seed: int) -> Operator:
    if cfg.model == "laplacian":
        return Operator(laplacian_1d(N))
    if cfg.model == "beta_limit":
        return Operator(beta_limit_matrix(N))
    return Operator(wigner(N, seed, cfg.params.get("wigner_diagonal", "1/N")))


def reference_columns(cfg: ExperimentConfig, base: Operator, z, js):
    """Noiseless Green-function columns: closed form for the Laplacian, solves otherwise."""
    if cfg.model == "laplacian":
        ctx = ClosedFormContext(base.n, z)
        return lambda cols: ctx.entries(np.arange(base.n)[:, None], np.asarray(cols)[None, :])
    return base.solver(z)


def entry_columns(cfg: ExperimentConfig, A: BandedSymmetricMatrix, rng) -> np.ndarray:
    """All columns, or R random ones plus the sites of the four largest noise entries."""
    N = A.n
    R = cfg.entry_samples
    if R is None or R >= N:
        return np.arange(N)
    cols = set(rng.choice(N, size=R, replace=False).tolist())
    vals = []
    for d, b in enumerate(A.bands):
        for i in np.argsort(-np.abs(b))[:4]:
            vals.append((abs(b[i]), int(i), int(i) + d))
    for _, i, j in sorted(vals, reverse=True)[:4]:
        cols.update((i, j))
    return np.array(sorted(cols))


def mesh_for(cfg: ExperimentConfig, N: int, mode: str, remove: bool = True) -> list[SpectralParameter]:
    s = cfg.noise
    dom = SpectralDomain(cfg.epsilon, cfg.kappa, s.sigma, s.alpha, s.K, cfg.p, mode, remove)
    return domain_mesh(dom, N, *cfg.mesh)


def _floor_points(mesh):
    floor = min(z.eta for z in mesh)
    return [z for z in mesh if z.eta == floor]


def _rec(cfg, N, index, seed) -> TrialRecord:
    return TrialRecord(cfg.experiment, "eval", N, index, seed)


# --- experiment base --------------------------------------------------------


class Experiment:
    name = ""
    summary = ""
    families: tuple = ("stable_cms", "pareto", "truncated", "heavier_moment", "zero")
    models: tuple = ("laplacian", "beta_limit", "wigner")
    defaults: dict = {}
    gated: dict = {}  # statistic -> "le" | "ge"

    def params(self, cfg: ExperimentConfig) -> dict:
        out = dict(self.defaults)
        out.update(cfg.params)
        return out

    def validate(self, cfg: ExperimentConfig) -> None:
        if cfg.noise.family not in self.families:
            raise ConfigError(f"{self.name}: noise family must be one of {self.families}")
        if cfg.model not in self.models:
            raise ConfigError(f"{self.name}: model must be one of {self.models}")
        extra = set(cfg.params) - set(self.defaults) - {"wigner_diagonal"}
        if extra:
            raise ConfigError(f"{self.name}: unknown params {sorted(extra)}")
        unknown = set(cfg.thresholds) - set(self.gated)
        if unknown:
            raise ConfigError(f"{self.name}: no gate for {sorted(unknown)}")

    def trial(self, cfg: ExperimentConfig, N: int, index: int, seed: int) -> TrialRecord:
        raise NotImplementedError

    def calibrate(self, cfg: ExperimentConfig, statistic: str, pilot: list[TrialRecord]) -> float:
        xs = [r.values[statistic] for r in pilot if statistic in r.values]
        if not xs:
            return math.inf if self.gated[statistic] == "le" else 0.0
        return float(cfg.pilot_factor * np.median(xs))

    def verdicts(self, cfg, aggregates, records, gates) -> tuple[dict, dict]:
        return {}, {}


def _median(aggregates, N, stat):
    return aggregates[N][stat]["q50"]


def _decreasing(aggregates, Ns, stat) -> bool:
    meds = [_median(aggregates, N, stat) for N in Ns]
    return all(b <= a for a, b in zip(meds, meds[1:]))


def _pass_fractions_at_least(aggregates, stat, level) -> bool:
    return all(a[stat]["pass_fraction"] is not None and a[stat]["pass_fraction"] >= level
               for a in aggregates.values() if stat in a)


# --- local law ------------------------------------------------------------


class LocalLaw(Experiment):
    name = "local_law"
    summary = "entrywise |G - G_inf| over the mesh (truncated / heavier-moment noise)"
    families = ("truncated", "heavier_moment", "zero")
    defaults = {"min_pass_fraction": 0.99}
    gated = {"sup_dev_floor": "le"}

    def trial(self, cfg, N, index, seed):
        rec = _rec(cfg, N, index, seed)
        base = base_operator(cfg, N, seed)
        A = build_noise(N, cfg.noise, make_rng(seed, 0, "noise"))
        cols = entry_columns(cfg, A, make_rng(seed, 0, "columns"))
        mesh = mesh_for(cfg, N, "entrywise")
        floor = min(z.eta for z in mesh)
        H = base + A
        sup = sup_floor = 0.0
        for z in mesh:
            dev = 0.0
            if cfg.noise.family != "zero":  # A = 0 gives G = G_inf exactly
                solve, ref = H.solver(z.z), reference_columns(cfg, base, z.z, cols)
                for s in range(0, len(cols), _CHUNK):
                    js = cols[s : s + _CHUNK]
                    dev = max(dev, float(np.max(np.abs(solve(js) - ref(js)))))
            rec.per_z.append(((z.E, z.eta), dev))
            sup = max(sup, dev)
            if z.eta == floor:
                sup_floor = max(sup_floor, dev)
        rec.values = {"sup_dev": sup, "sup_dev_floor": sup_floor}
        return rec

    def verdicts(self, cfg, aggregates, records, gates):
        Ns = sorted(aggregates)
        level = self.params(cfg)["min_pass_fraction"]
        return {
            "pass_fraction": _pass_fractions_at_least(aggregates, "sup_dev_floor", level),
            "median_decreasing_in_N": _decreasing(aggregates, Ns, "sup_dev_floor"),
        }, {}


# --- trace law ------------------------------------------------------------


class TraceLaw(Experiment):
    name = "trace_law"
    summary = "sup over the mesh of |m - m_ref| under full heavy tails, with label classes"
    families = _HEAVY + ("zero",)
    models = ("laplacian", "wigner")
    defaults = {"min_pass_fraction": 0.9}
    gated = {"sup_trace_dev": "le"}

    def validate(self, cfg):
        super().validate(cfg)
        s = cfg.noise
        cap = 1 / (2 * s.alpha) if cfg.model == "laplacian" else 1 / s.alpha
        if s.sigma >= cap:
            raise ConfigError(f"trace_law: sigma must be below {cap:g} for model {cfg.model}")

    def trial(self, cfg, N, index, seed):
        rec = _rec(cfg, N, index, seed)
        s = cfg.noise
        base = base_operator(cfg, N, seed)
        mesh = mesh_for(cfg, N, "trace")
        zs = np.array([z.z for z in mesh])
        ref = stieltjes_arcsine if cfg.model == "laplacian" else stieltjes_semicircle
        m_ref = np.array([ref(z) for z in zs])
        if s.family == "zero":
            A = BandedSymmetricMatrix.zeros(N, s.K)
            T: list[int] = []
        else:
            labels = sample_labels(N, s, cfg.epsilon, make_rng(seed, 0, "labels"))
            A = sample_from_labels(labels, s, make_rng(seed, 0, "label-draws"))
            rec.label_class = classify_label(labels, N, cfg.epsilon, s.sigma * s.alpha)
            T = labels.removal_indices()
            rec.values["F_count"] = float(labels.count_false())
        H = base + A
        eigs = H.eigenvalues()
        m = np.array([np.sum(1.0 / (eigs - z)) / N for z in zs])
        dev = np.abs(m - m_ref)
        rec.per_z = [((z.E, z.eta), float(d)) for z, d in zip(mesh, dev)]
        floor = min(z.eta for z in mesh)
        at_floor = np.array([z.eta == floor for z in mesh])
        rec.values["sup_trace_dev"] = float(np.max(dev))
        rec.values["sup_trace_dev_floor"] = float(np.max(dev[at_floor]))
        if cfg.model == "laplacian":
            m_inf = np.array([laplacian_trace(N, z) for z in zs])
            rec.values["sup_dev_vs_finite_N"] = float(np.max(np.abs(m - m_inf)))
        if T and len(T) < N:
            mT_eigs = H.minor(T).eigenvalues()
            worst = 0.0
            for z in np.array(zs)[at_floor]:
                mT = np.sum(1.0 / (mT_eigs - z)) / N
                gap = abs(complex(np.sum(1.0 / (eigs - z)) / N) - mT)
                worst = max(worst, gap * N * z.imag / len(T))
            rec.values["minor_gap_ratio"] = float(worst)
            rec.flags["minor_bound_holds"] = worst <= 1 + 1e-9
        elif s.family != "zero":
            rec.values["minor_gap_ratio"] = 0.0
            rec.flags["minor_bound_holds"] = True
        return rec

    def verdicts(self, cfg, aggregates, records, gates):
        Ns = sorted(aggregates)
        level = self.params(cfg)["min_pass_fraction"]
        ev = [r for r in records if r.phase == "eval"]
        classes: dict = {}
        for N in Ns:
            g = gates.get(N, {}).get("sup_trace_dev")
            for cls in ("separably_admissible", "admissible", "neither"):
                xs = [r.values["sup_trace_dev"] for r in ev if r.N == N and r.label_class == cls]
                if xs:
                    classes.setdefault(N, {})[cls] = {
                        "count": len(xs),
                        "median_sup_trace_dev": float(np.median(xs)),
                        "pass_fraction": None if g is None else float(np.mean([g.passes(x) for x in xs])),
                    }
        v = {
            "pass_fraction": _pass_fractions_at_least(aggregates, "sup_trace_dev", level),
            "median_largest_N_le_smallest_N": _median(aggregates, Ns[-1], "sup_trace_dev")
            <= _median(aggregates, Ns[0], "sup_trace_dev"),
            "minor_trace_bound": all(r.flags.get("minor_bound_holds", True) for r in ev),
        }
        return v, {"label_classes": classes}


# --- entry-wise failure -----------------------------------------------------


class EntrywiseFailure(Experiment):
    name = "entrywise_failure"
    summary = "frequency of a large band entry of G - G_inf at one bulk z (full heavy tails)"
    families = _HEAVY + ("zero",)
    models = ("laplacian",)
    defaults = {"E": 0.5, "min_failure_frequency": 0.25, "mechanism_tolerance": 0.05}
    gated = {"sup_band_dev": "ge"}

    def trial(self, cfg, N, index, seed):
        rec = _rec(cfg, N, index, seed)
        s = cfg.noise
        E = float(self.params(cfg)["E"])
        z = complex(E, float(N) ** (-1 + cfg.epsilon))
        A = build_noise(N, s, make_rng(seed, 0, "noise"))
        big = float(np.max(np.abs(A.bands[0])))
        dev = 0.0
        if s.family != "zero":
            K = max(s.K, 1)
            H = laplacian_1d(N) + A
            fact = factorize(H, z)
            ctx = ClosedFormContext(N, z)
            for js, X in fact.iter_column_blocks():
                for d in range(-K, K + 1):
                    r = js + d
                    ok = (r >= 0) & (r < N)
                    g = X[r[ok], np.nonzero(ok)[0]]
                    dev = max(dev, float(np.max(np.abs(g - ctx.entries(r[ok], js[ok])), initial=0.0)))
        rec.per_z = [((z.real, z.imag), dev)]
        rec.values = {"sup_band_dev": dev, "max_abs_diag_noise": big}
        rec.flags = {"big_diagonal_entry": big > 1}
        return rec

    def calibrate(self, cfg, statistic, pilot):
        xs = [r.values[statistic] for r in pilot if r.flags.get("big_diagonal_entry")]
        if not xs:
            return math.inf
        return float(0.5 * np.median(xs))

    def verdicts(self, cfg, aggregates, records, gates):
        prm = self.params(cfg)
        s = cfg.noise
        ev = [r for r in records if r.phase == "eval"]
        details, ok_fail, ok_mech = {}, True, True
        for N in sorted(aggregates):
            recs = [r for r in ev if r.N == N]
            g = gates[N]["sup_band_dev"]
            fail = np.array([g.passes(r.values["sup_band_dev"]) for r in recs])
            big = np.array([r.flags["big_diagonal_entry"] for r in recs])
            p1 = tail_probability(s.family, s.alpha, float(N) ** (1 / s.alpha - s.sigma), s.delta)
            exact = 1 - (1 - p1) ** N if s.family != "zero" else 0.0
            details[N] = {
                "C0": g.value,
                "failure_frequency": float(np.mean(fail)),
                "big_entry_frequency": float(np.mean(big)),
                "big_entry_exact": exact,
                "joint": {
                    "fail_and_big": int(np.sum(fail & big)),
                    "fail_not_big": int(np.sum(fail & ~big)),
                    "ok_and_big": int(np.sum(~fail & big)),
                    "ok_not_big": int(np.sum(~fail & ~big)),
                },
            }
            ok_fail &= float(np.mean(fail)) >= prm["min_failure_frequency"]
            ok_mech &= abs(float(np.mean(big)) - exact) <= prm["mechanism_tolerance"]
        return {"failure_frequency": bool(ok_fail), "mechanism_frequency": bool(ok_mech)}, details


# --- boundedness ------------------------------------------------------------


class Boundedness(Experiment):
    name = "boundedness"
    summary = "sup |G_ij| over the entrywise mesh; removal sets applied when K >= 2"
    models = ("laplacian",)
    defaults = {"compare_E0": False, "trend_tolerance": 0.05}
    gated = {"sup_abs_G": "le"}

    def trial(self, cfg, N, index, seed):
        rec = _rec(cfg, N, index, seed)
        base = base_operator(cfg, N, seed)
        A = build_noise(N, cfg.noise, make_rng(seed, 0, "noise"))
        cols = entry_columns(cfg, A, make_rng(seed, 0, "columns"))
        H = base + A
        zero = cfg.noise.family == "zero"

        def sup_over(mesh):
            best = 0.0
            for z in mesh:
                solve = reference_columns(cfg, base, z.z, cols) if zero else H.solver(z.z)
                v = 0.0
                for s in range(0, len(cols), _CHUNK):
                    v = max(v, float(np.max(np.abs(solve(cols[s : s + _CHUNK])))))
                rec.per_z.append(((z.E, z.eta), v))
                best = max(best, v)
            return best

        rec.values["sup_abs_G"] = sup_over(mesh_for(cfg, N, "entrywise"))
        if self.params(cfg)["compare_E0"]:
            etas = sorted({z.eta for z in mesh_for(cfg, N, "entrywise", remove=False)})
            per_z = list(rec.per_z)
            rec.values["sup_abs_G_E0_unremoved"] = sup_over([SpectralParameter(0.0, h) for h in etas])
            rec.per_z = per_z
        return rec

    def verdicts(self, cfg, aggregates, records, gates):
        Ns = sorted(aggregates)
        tol = self.params(cfg)["trend_tolerance"]
        first = aggregates[Ns[0]]["sup_abs_G"]["pass_fraction"]
        last = aggregates[Ns[-1]]["sup_abs_G"]["pass_fraction"]
        return {"pass_frequency_trend": last >= first - tol}, {}


# --- spectral statistics ----------------------------------------------------


class SpectralStatistics(Experiment):
    name = "spectral_statistics"
    summary = "Wegner ratio, arcsine distance, rigidity and eigenvector sup norms"
    models = ("laplacian",)
    defaults = {"delocalization": True, "min_pass_fraction": 0.95, "grid_level": 10}
    gated = {"arcsine_dev": "le", "rigidity_dev": "le", "deloc_q95": "le"}

    def validate(self, cfg):
        super().validate(cfg)
        if any(N % 2 for N in cfg.N_list):
            raise ConfigError("spectral_statistics: classical locations need even N")

    def trial(self, cfg, N, index, seed):
        rec = _rec(cfg, N, index, seed)
        prm = self.params(cfg)
        A = build_noise(N, cfg.noise, make_rng(seed, 0, "noise"))
        H = laplacian_1d(N) + A
        eigs = eigenvalues(H)
        mesh = mesh_for(cfg, N, "trace")
        ratio = bound_ratio = 0.0
        for z in mesh:
            a, b = z.E - z.eta / 2, z.E + z.eta / 2
            count = int(np.searchsorted(eigs, b, "right") - np.searchsorted(eigs, a, "left"))
            im_m = float(np.sum(z.eta / ((eigs - z.E) ** 2 + z.eta**2)) / N)
            ratio = max(ratio, count / (z.eta * N))
            bound_ratio = max(bound_ratio, count / (1.25 * N * z.eta * im_m))
        rec.values["wegner_ratio"] = ratio
        rec.values["wegner_bound_ratio"] = bound_ratio
        rec.flags["wegner_bound_holds"] = bound_ratio <= 1 + 1e-9
        rec.values["arcsine_dev"] = empirical_vs_arcsine(eigs, N, cfg.kappa, prm["grid_level"])
        rec.values["rigidity_dev"] = rigidity_report(eigs, N, cfg.kappa).deviation
        if prm["delocalization"]:
            s = cfg.noise
            dom = SpectralDomain(cfg.epsilon, cfg.kappa, s.sigma, s.alpha, s.K, cfg.p)
            rep = delocalization_report(H, cfg.kappa, dom.removal(), eigs=eigs, rng=make_rng(seed, 0, "deloc"))
            norms = np.array(list(rep.sup_norms.values())) if rep.sup_norms else np.zeros(1)
            scale = float(N) ** (0.5 - cfg.epsilon)
            rec.values["max_sup_norm"] = float(np.max(norms))
            rec.values["deloc_max"] = float(np.max(norms)) * scale
            rec.values["deloc_q95"] = float(np.quantile(norms, 0.95)) * scale
            rec.values["eigvec_failures"] = float(len(rep.failures))
        return rec

    def verdicts(self, cfg, aggregates, records, gates):
        Ns = sorted(aggregates)
        level = self.params(cfg)["min_pass_fraction"]
        v = {
            "arcsine_median_decreasing": _decreasing(aggregates, Ns, "arcsine_dev"),
            "rigidity_median_decreasing": _decreasing(aggregates, Ns, "rigidity_dev"),
            "wegner_bound": all(r.flags.get("wegner_bound_holds", True) for r in records if r.phase == "eval"),
        }
        if self.params(cfg)["delocalization"]:
            v["delocalization_pass_fraction"] = _pass_fractions_at_least(aggregates, "deloc_q95", level)
        return v, {}


# --- concentration ----------------------------------------------------------


def concentration_rhs(psi: np.ndarray, N: int, q: float, alpha: float, xi: float) -> float:
    """Large-deviation level for ``sum psi_i a_i`` when ``E|a|^p <= C / (N q^(p - alpha))``."""
    L = math.log(N) ** xi
    return L * (np.max(np.abs(psi)) / q + math.sqrt(np.sum(np.abs(psi) ** 2) / (N * q ** (2 - alpha))))


class Concentration(Experiment):
    name = "concentration"
    summary = "tail of weighted sums of truncated heavy-tailed variables (no matrices)"
    families = ("truncated", "zero")
    defaults = {"xi": [2, 3], "replications": 1000, "psi": "ones", "psi_scale": 1.0, "nu": 0.05, "q_exponent": 0.05}
    gated = {}

    def _weights(self, prm, N):
        if prm["psi"] == "ones":
            psi = np.ones(N)
        elif prm["psi"] == "linear":
            psi = np.arange(1, N + 1) / N
        else:
            raise ConfigError("psi must be 'ones' or 'linear'")
        return float(prm["psi_scale"]) * psi

    def validate(self, cfg):
        super().validate(cfg)
        prm = self.params(cfg)
        self._weights(prm, 2)
        if int(prm["replications"]) < 1:
            raise ConfigError("replications must be positive")

    def trial(self, cfg, N, index, seed):
        rec = _rec(cfg, N, index, seed)
        prm = self.params(cfg)
        psi = self._weights(prm, N)
        q = float(N) ** prm["q_exponent"]
        alpha = cfg.noise.alpha
        spec = NoiseSpec("truncated", alpha, 0.0, 0, seed=cfg.noise.seed, q=q) if cfg.noise.family != "zero" else None
        rng = make_rng(seed, 0, "concentration")
        reps = int(prm["replications"])
        sums = np.zeros(reps)
        block = max(1, 2_000_000 // N)
        for s in range(0, reps, block):
            b = min(block, reps - s)
            if spec is None:
                continue
            a = sample_entries(spec, N, b * N, rng).reshape(b, N)
            sums[s : s + b] = a @ psi
        for xi in prm["xi"]:
            rhs = concentration_rhs(psi, N, q, alpha, xi)
            rec.values[f"exceed_xi{xi}"] = float(np.sum(np.abs(sums) >= rhs))
            rec.values[f"max_ratio_xi{xi}"] = float(np.max(np.abs(sums)) / rhs)
        rec.values["replications"] = float(reps)
        return rec

    def verdicts(self, cfg, aggregates, records, gates):
        prm = self.params(cfg)
        ev = [r for r in records if r.phase == "eval"]
        v, details = {}, {}
        for N in sorted(aggregates):
            recs = [r for r in ev if r.N == N]
            total = sum(r.values["replications"] for r in recs)
            for xi in prm["xi"]:
                freq = sum(r.values[f"exceed_xi{xi}"] for r in recs) / total
                bound = math.exp(-prm["nu"] * math.log(N) ** xi)
                details.setdefault(N, {})[f"xi{xi}"] = {"frequency": freq, "bound": bound, "replications": total}
                v[f"N{N}_xi{xi}"] = freq <= bound
        return v, details


REGISTRY: dict[str, Experiment] = {
    e.name: e
    for e in (LocalLaw(), TraceLaw(), EntrywiseFailure(), Boundedness(), SpectralStatistics(), Concentration())
}


def get_experiment(name: str) -> Experiment:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown experiment {name!r}; known: {sorted(REGISTRY)}") from None


def run_trial(cfg: ExperimentConfig, N: int, index: int, seed: int, phase: str) -> TrialRecord:
    t0 = time.perf_counter()
    rec = get_experiment(cfg.experiment).trial(cfg, N, index, seed)
    rec.phase = phase
    rec.wall_time = time.perf_counter() - t0
    rec.validate()
    return rec
