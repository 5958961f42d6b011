"""Run configuration: one JSON document reproduces a whole run.

Schema (defaults in parentheses):

{
  "seed": int (0),
  "out_dir": str ("run"),
  "dataset": {
      "kind": "synthetic" | "cifar",
      # synthetic:
      "spec": {"kind": ..., "size": [h, w], "count": int, "seed": int},
      # cifar:
      "path": str, "crop": [h, w] | null
  },
  "schedule": [[h0, w0], [h1, w1], ...]   # finest first
  "class_conditional": bool (false),
  "model": {"noise_dim": 100, "conv_maps": 64, "final_g_units": 1200,
            "final_d_units": 600, "dropout": 0.5},
  "train": {"epochs": 1, "batch_size": 128, "max_iterations": null,
            "g_mode": "nonsaturating", "d_per_iter": 1, "g_per_iter": 1,
            "presentation": "coin-flip", "sgd": {}, "checkpoint_every": null},
  "split": [0.8, 0.1, 0.1],
  "eval": {"estimator": "multiscale", "n_model_samples": 2000, "seed": 0}
}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import SyntheticSpec
from .pyramid import SizeSchedule, SizeScheduleError


class ConfigError(ValueError):
    pass


_MODEL_DEFAULTS = {
    "noise_dim": 100,
    "conv_maps": 64,
    "final_g_units": 1200,
    "final_d_units": 600,
    "dropout": 0.5,
}

_TRAIN_DEFAULTS = {
    "epochs": 1,
    "batch_size": 128,
    "max_iterations": None,
    "g_mode": "nonsaturating",
    "d_per_iter": 1,
    "g_per_iter": 1,
    "presentation": "coin-flip",
    "sgd": {},
    "checkpoint_every": None,
}

_EVAL_DEFAULTS = {"estimator": "multiscale", "n_model_samples": 2000, "seed": 0}


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "run"
    dataset: dict = field(default_factory=lambda: {"kind": "synthetic", "spec": {"kind": "multiscale-texture"}})
    schedule: list = field(default_factory=lambda: [[16, 16], [8, 8], [4, 4]])
    class_conditional: bool = False
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    split: list = field(default_factory=lambda: [0.8, 0.1, 0.1])
    eval: dict = field(default_factory=dict)

    def __post_init__(self):
        self.model = {**_MODEL_DEFAULTS, **self.model}
        self.train = {**_TRAIN_DEFAULTS, **self.train}
        self.eval = {**_EVAL_DEFAULTS, **self.eval}
        self.validate()

    def validate(self):
        try:
            self.size_schedule()
        except (SizeScheduleError, TypeError) as exc:
            raise ConfigError(f"bad schedule: {exc}") from exc
        kind = self.dataset.get("kind")
        if kind == "synthetic":
            try:
                self.synthetic_spec()
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad synthetic dataset spec: {exc}") from exc
        elif kind == "cifar":
            if "path" not in self.dataset:
                raise ConfigError("cifar dataset needs a path")
        else:
            raise ConfigError(f"unknown dataset kind {kind!r}")
        if self.train["g_mode"] not in ("nonsaturating", "minimax"):
            raise ConfigError(f"unknown g_mode {self.train['g_mode']!r}")
        if self.train["presentation"] not in ("coin-flip", "both-sides"):
            raise ConfigError(f"unknown presentation {self.train['presentation']!r}")
        if self.eval["estimator"] not in ("multiscale", "flat"):
            raise ConfigError(f"unknown estimator {self.eval['estimator']!r}")
        if not self.split or any(f <= 0 for f in self.split) or sum(self.split) > 1 + 1e-9:
            raise ConfigError(f"bad split fractions {self.split}")
        for key, lower in (("epochs", 1), ("batch_size", 1), ("d_per_iter", 1), ("g_per_iter", 1)):
            if int(self.train[key]) < lower:
                raise ConfigError(f"train.{key} must be >= {lower}")

    def size_schedule(self) -> SizeSchedule:
        return SizeSchedule(tuple((int(h), int(w)) for h, w in self.schedule))

    def synthetic_spec(self) -> SyntheticSpec:
        s = dict(self.dataset["spec"])
        if "size" in s:
            s["size"] = tuple(s["size"])
        return SyntheticSpec(**s)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "dataset": self.dataset,
            "schedule": self.schedule,
            "class_conditional": self.class_conditional,
            "model": self.model,
            "train": self.train,
            "split": self.split,
            "eval": self.eval,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: config must be a JSON object")
    return RunConfig.from_dict(doc)


def save_config(path, config: RunConfig) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
