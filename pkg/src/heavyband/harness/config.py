"""Experiment configuration (JSON, strict keys)."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..noise import NoiseSpec

MODELS = ("laplacian", "beta_limit", "wigner")

_SAMPLED = re.compile(r"^sampled\((\d+)\)$")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run.

    ``thresholds`` pins gate values by statistic name; any gated statistic
    without a pinned value is calibrated from a pilot run of ``pilot_trials``
    trials (``pilot_factor`` times the pilot median, or the experiment's own
    rule).  ``params`` holds experiment-specific knobs, validated by the
    experiment itself.
    """

    experiment: str
    model: str = "laplacian"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    N_list: tuple[int, ...] = (1000, 2000, 4000)
    epsilon: float = 0.4
    kappa: float = 0.5
    p: int = 3
    mesh: tuple[int, int] = (9, 6)
    trials: int = 100
    entry_policy: str = "sampled(32)"
    master_seed: int = 0
    output_dir: str = "out"
    pilot_trials: int = 20
    pilot_factor: float = 3.0
    thresholds: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if not self.N_list:
            raise ConfigError("N_list must be nonempty")
        if any(int(n) < 2 for n in self.N_list):
            raise ConfigError("every N must be at least 2")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.pilot_trials < 0:
            raise ConfigError("pilot_trials must be non-negative")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must lie in (0, 1)")
        if not 0 < self.kappa < 2:
            raise ConfigError("kappa must lie in (0, 2)")
        if len(self.mesh) != 2 or min(self.mesh) < 1:
            raise ConfigError("mesh must be [nE, nEta] with positive entries")
        self.entry_samples  # validates the policy string
        for k, v in self.thresholds.items():
            if not isinstance(v, (int, float)) or v != v:
                raise ConfigError(f"threshold {k!r} must be a finite number")

    @property
    def entry_samples(self) -> int | None:
        """Number of sampled Green-function columns, or None for all of them."""
        if self.entry_policy == "full":
            return None
        m = _SAMPLED.match(self.entry_policy)
        if not m or int(m.group(1)) < 1:
            raise ConfigError("entry_policy must be 'full' or 'sampled(R)' with R >= 1")
        return int(m.group(1))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["noise"] = self.noise.to_dict()
        d["N_list"] = list(self.N_list)
        d["mesh"] = list(self.mesh)
        d["thresholds"] = dict(self.thresholds)
        d["params"] = dict(self.params)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "experiment" not in d:
            raise ConfigError("missing required key 'experiment'")
        d = dict(d)
        try:
            if "noise" in d:
                d["noise"] = NoiseSpec.from_dict(d["noise"])
            if "N_list" in d:
                d["N_list"] = tuple(int(n) for n in d["N_list"])
            if "mesh" in d:
                d["mesh"] = tuple(int(n) for n in d["mesh"])
            for key, typ in (("trials", int), ("pilot_trials", int), ("p", int), ("master_seed", int)):
                if key in d and (isinstance(d[key], bool) or not isinstance(d[key], int)):
                    raise ConfigError(f"{key} must be an integer")
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)
