"""Run configuration: a JSON document whose sections map onto the dataclass configs.

Unknown keys anywhere are rejected. The key set is listed in the README.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .agent import SacConfig
from .dynamics import EnsembleConfig
from .errors import ConfigError, SumoError
from .estimators import SumoConfig
from .eval import ProbeConfig
from .pipelines import PipelineConfig

PIPELINE_KEYS = ("horizon", "lam", "alpha", "eta", "epochs", "rollouts_per_epoch",
                 "updates_per_epoch", "batch_size", "buffer_capacity", "penalty_scope",
                 "estimator", "eval_episodes")
TUPLE_FIELDS = {"hidden", "logvar_bounds"}


@dataclass(frozen=True)
class DataConfig:
    policy: str = "medium"
    episodes: int = 200
    region: str = "all"

    def __post_init__(self):
        if self.policy not in ("random", "medium", "expert"):
            raise ConfigError(f"unknown behaviour policy {self.policy!r}")
        if self.region not in ("all", "left"):
            raise ConfigError("region must be 'all' or 'left'")
        if self.episodes < 1:
            raise ConfigError("episodes must be at least 1")


@dataclass(frozen=True)
class RunConfig:
    env: str = "pointmass"
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    sumo: SumoConfig = field(default_factory=SumoConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    agent: SacConfig = field(default_factory=SacConfig)
    pipeline: dict = field(default_factory=dict)
    probe: ProbeConfig = field(default_factory=ProbeConfig)

    def __post_init__(self):
        if self.env != "pointmass":
            raise ConfigError(f"unknown environment {self.env!r}")
        unknown = set(self.pipeline) - set(PIPELINE_KEYS)
        if unknown:
            raise ConfigError(f"unknown pipeline keys: {sorted(unknown)}")
        defaults = PipelineConfig()
        full = {k: getattr(defaults, k) for k in PIPELINE_KEYS}
        object.__setattr__(self, "pipeline", {**full, **self.pipeline})

    def pipeline_config(self, variant):
        try:
            return PipelineConfig(variant=variant, seed=self.seed, sumo=self.sumo,
                                  ensemble=self.ensemble, agent=self.agent, **self.pipeline)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return {
            "env": self.env, "seed": self.seed,
            "data": dataclasses.asdict(self.data), "sumo": self.sumo.to_dict(),
            "ensemble": self.ensemble.to_dict(), "agent": self.agent.to_dict(),
            "pipeline": dict(self.pipeline),
            "probe": dataclasses.asdict(self.probe),
        }


def _section(cls, values, name):
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    values = {k: tuple(v) if k in TUPLE_FIELDS and isinstance(v, list) else v
              for k, v in values.items()}
    try:
        return cls(**values)
    except (TypeError, ValueError, SumoError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from None


SECTIONS = {"data": DataConfig, "sumo": SumoConfig, "ensemble": EnsembleConfig,
            "agent": SacConfig, "probe": ProbeConfig}


def from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    top = {"env", "seed", "pipeline", *SECTIONS}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs = {k: _section(cls, raw[k], k) for k, cls in SECTIONS.items() if k in raw}
    for key in ("env", "seed"):
        if key in raw:
            kwargs[key] = raw[key]
    if "pipeline" in raw:
        if not isinstance(raw["pipeline"], dict):
            raise ConfigError("section 'pipeline' must be an object")
        kwargs["pipeline"] = dict(raw["pipeline"])
    cfg = RunConfig(**kwargs)
    if not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    cfg.pipeline_config("mopo")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(raw)
