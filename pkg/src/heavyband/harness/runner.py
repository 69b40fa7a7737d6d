"""Experiment driver: pilot calibration, trial execution, persistence."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable

from ..rng import derive_seed
from .config import ConfigError, ExperimentConfig
from .experiments import get_experiment, run_trial
from .records import ExperimentReport, Gate, TrialRecord, aggregate, output_paths, read_records

WORKERS_ENV = "HEAVYBAND_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be at least 1")
    return n


def trial_seed(cfg: ExperimentConfig, N: int, index: int, phase: str) -> int:
    # pilot and eval streams differ by tag, so pilot seeds never coincide with eval seeds
    return derive_seed(cfg.master_seed, index, f"{cfg.experiment}/{phase}/N={N}")


def _task(args) -> TrialRecord:
    cfg_dict, N, index, seed, phase = args
    return run_trial(ExperimentConfig.from_dict(cfg_dict), N, index, seed, phase)


def _execute(cfg: ExperimentConfig, tasks: list, workers: int, sink: Callable[[TrialRecord], None]):
    """Run tasks; records reach ``sink`` in task order regardless of worker count."""
    payload = [(cfg.to_dict(), N, i, s, ph) for N, i, s, ph in tasks]
    if workers <= 1 or len(payload) <= 1:
        for p in payload:
            sink(_task(p))
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for rec in pool.map(_task, payload, chunksize=1):
            sink(rec)


class _Sink:
    def __init__(self, path: Path | None, timings: Path | None):
        self.records: list[TrialRecord] = []
        self.fh = open(path, "w") if path else None
        self.th = open(timings, "w") if timings else None

    def __call__(self, rec: TrialRecord):
        line = rec.to_json()
        self.records.append(rec)
        if self.fh:
            self.fh.write(line + "\n")
            self.fh.flush()
        if self.th:
            self.th.write(json.dumps({"phase": rec.phase, "N": rec.N, "trial": rec.trial,
                                      "wall_time": round(rec.wall_time, 6)}) + "\n")
            self.th.flush()

    def close(self):
        for f in (self.fh, self.th):
            if f:
                f.close()


def build_report(cfg: ExperimentConfig, records: list[TrialRecord], gates: dict) -> ExperimentReport:
    exp = get_experiment(cfg.experiment)
    records = sorted(records, key=lambda r: (r.phase, r.N, r.trial))
    agg = aggregate(records, gates)
    verdicts, details = exp.verdicts(cfg, agg, records, gates)
    return ExperimentReport(cfg.to_dict(), gates, agg, {k: bool(v) for k, v in verdicts.items()}, details)


def calibrate_gates(cfg: ExperimentConfig, pilot: list[TrialRecord]) -> dict:
    exp = get_experiment(cfg.experiment)
    gates: dict = {}
    for N in cfg.N_list:
        gates[N] = {}
        for stat, op in exp.gated.items():
            if stat in cfg.thresholds:
                value = float(cfg.thresholds[stat])
            else:
                value = exp.calibrate(cfg, stat, [r for r in pilot if r.N == N])
            gates[N][stat] = Gate(stat, op, value)
    return gates


def run_experiment(cfg: ExperimentConfig, write: bool = True, workers: int | None = None) -> ExperimentReport:
    exp = get_experiment(cfg.experiment)
    exp.validate(cfg)
    workers = worker_count() if workers is None else workers
    paths = output_paths(cfg.output_dir, cfg.experiment)
    if write:
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)

    need_pilot = any(s not in cfg.thresholds for s in exp.gated) and cfg.pilot_trials > 0
    pilot_sink = _Sink(paths["pilot"] if write else None, None)
    try:
        if need_pilot:
            tasks = [(N, i, trial_seed(cfg, N, i, "pilot"), "pilot")
                     for N in cfg.N_list for i in range(cfg.pilot_trials)]
            _execute(cfg, tasks, workers, pilot_sink)
    finally:
        pilot_sink.close()
    gates = calibrate_gates(cfg, pilot_sink.records)

    sink = _Sink(paths["trials"] if write else None, paths["timings"] if write else None)
    try:
        tasks = [(N, i, trial_seed(cfg, N, i, "eval"), "eval")
                 for N in cfg.N_list for i in range(cfg.trials)]
        _execute(cfg, tasks, workers, sink)
    finally:
        sink.close()

    report = build_report(cfg, sink.records, gates)
    if write:
        paths["report"].write_text(report.to_json() + "\n")
        report.write_summary(paths["summary"])
    return report


def report_from_files(cfg: ExperimentConfig) -> ExperimentReport:
    """Rebuild the report from the trial JSONL and the gates recorded in the report JSON."""
    paths = output_paths(cfg.output_dir, cfg.experiment)
    records = read_records(paths["trials"])
    saved = json.loads(paths["report"].read_text())
    gates = {int(N): {s: Gate.from_dict(g) for s, g in gs.items()} for N, gs in saved["gates"].items()}
    return build_report(cfg, records, gates)
