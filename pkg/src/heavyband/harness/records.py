"""Trial records, aggregation and reports.

Trial records are the source of truth: a report is always recomputed from
them.  Wall-clock times vary between runs, so they go to a separate timing
file and the trial JSONL stays byte-identical for a fixed config.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SUMMARY_COLUMNS = (
    "experiment", "model", "family", "alpha", "sigma", "K", "N",
    "statistic", "q05", "q50", "q95", "pass_fraction",
)


class RecordError(ValueError):
    """A trial produced a value that cannot be recorded."""


def cjson(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


@dataclass
class TrialRecord:
    experiment: str
    phase: str  # "pilot" or "eval"
    N: int
    trial: int
    seed: int
    values: dict = field(default_factory=dict)  # statistic -> finite, nonnegative float
    flags: dict = field(default_factory=dict)
    label_class: str | None = None
    per_z: list = field(default_factory=list)  # [[re, im], value]
    wall_time: float = 0.0

    def validate(self) -> None:
        for k, v in self.values.items():
            if not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise RecordError(f"trial {self.trial}: statistic {k}={v!r} is not finite and nonnegative")
        for zz, v in self.per_z:
            if not all(math.isfinite(x) for x in zz) or not math.isfinite(v):
                raise RecordError(f"trial {self.trial}: non-finite per-z entry")

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "phase": self.phase,
            "N": self.N,
            "trial": self.trial,
            "seed": self.seed,
            "values": {k: float(v) for k, v in self.values.items()},
            "flags": {k: bool(v) for k, v in self.flags.items()},
            "label_class": self.label_class,
            "per_z": [[[float(a), float(b)], float(v)] for (a, b), v in self.per_z],
        }

    def to_json(self) -> str:
        self.validate()
        try:
            return json.dumps(self.to_dict(), sort_keys=True, allow_nan=False, separators=(",", ":"))
        except ValueError as exc:
            raise RecordError(str(exc)) from exc

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        return cls(
            experiment=d["experiment"],
            phase=d["phase"],
            N=int(d["N"]),
            trial=int(d["trial"]),
            seed=int(d["seed"]),
            values=dict(d.get("values", {})),
            flags=dict(d.get("flags", {})),
            label_class=d.get("label_class"),
            per_z=[(tuple(zz), v) for zz, v in d.get("per_z", [])],
        )


def read_records(path) -> list[TrialRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(TrialRecord.from_dict(json.loads(line)))
    return out


@dataclass(frozen=True)
class Gate:
    """``statistic <= value`` (op "le") or ``statistic >= value`` (op "ge")."""

    statistic: str
    op: str
    value: float

    def passes(self, x: float) -> bool:
        return x <= self.value if self.op == "le" else x >= self.value

    def to_dict(self) -> dict:
        v = self.value
        return {"statistic": self.statistic, "op": self.op, "value": v if math.isfinite(v) else None}

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        v = d["value"]
        return cls(d["statistic"], d["op"], math.inf if v is None else float(v))


def quantiles(x) -> tuple[float, float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return (math.nan,) * 3
    q = np.quantile(x, [0.05, 0.5, 0.95])
    return float(q[0]), float(q[1]), float(q[2])


def aggregate(records: list[TrialRecord], gates: dict) -> dict:
    """``{N: {statistic: {q05, q50, q95, n, pass_fraction}}}`` over eval records.

    ``gates`` maps ``N -> {statistic: Gate}``.
    """
    by_N: dict[int, list[TrialRecord]] = {}
    for r in sorted(records, key=lambda r: (r.N, r.trial)):
        if r.phase == "eval":
            by_N.setdefault(r.N, []).append(r)
    out: dict = {}
    for N, recs in by_N.items():
        stats = sorted({k for r in recs for k in r.values})
        out[N] = {}
        for s in stats:
            xs = [r.values[s] for r in recs if s in r.values]
            q05, q50, q95 = quantiles(xs)
            gate = gates.get(N, {}).get(s)
            frac = None if gate is None else float(np.mean([gate.passes(x) for x in xs]))
            out[N][s] = {"q05": q05, "q50": q50, "q95": q95, "n": len(xs), "pass_fraction": frac}
    return out


def _finite_or_none(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _finite_or_none(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class ExperimentReport:
    config: dict
    gates: dict  # N -> {statistic: Gate}
    aggregates: dict
    verdicts: dict
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return _clean({
            "config": self.config,
            "gates": {N: {s: g.to_dict() for s, g in gs.items()} for N, gs in self.gates.items()},
            "aggregates": self.aggregates,
            "verdicts": self.verdicts,
            "details": self.details,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False)

    def summary_rows(self) -> list[dict]:
        cfg = self.config
        noise = cfg["noise"]
        rows = []
        for N in sorted(self.aggregates, key=int):
            for s, a in sorted(self.aggregates[N].items()):
                rows.append({
                    "experiment": cfg["experiment"],
                    "model": cfg["model"],
                    "family": noise["family"],
                    "alpha": noise["alpha"],
                    "sigma": noise["sigma"],
                    "K": noise["K"],
                    "N": int(N),
                    "statistic": s,
                    "q05": a["q05"],
                    "q50": a["q50"],
                    "q95": a["q95"],
                    "pass_fraction": "" if a["pass_fraction"] is None else a["pass_fraction"],
                })
        return rows

    def write_summary(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
            w.writeheader()
            for row in self.summary_rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def output_paths(output_dir, name: str) -> dict[str, Path]:
    base = Path(output_dir)
    return {
        "trials": base / f"{name}.trials.jsonl",
        "pilot": base / f"{name}.pilot.jsonl",
        "report": base / f"{name}.report.json",
        "summary": base / f"{name}.summary.csv",
        "timings": base / f"{name}.timings.jsonl",
    }
