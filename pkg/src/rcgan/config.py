"""Experiment configuration: one JSON document for every CLI command.

Layout::

    {"seed": 0, "out": "runs/demo",
     "dataset": {...}, "train": {...}, "weights": {...},
     "diagnostics": {...}, "equilibrium": {...}}

Every section is optional and merged over the defaults. Unknown keys are
rejected by name. ``seed`` drives both data generation and training.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .losses import LossWeights
from .synthdata import DatasetConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DiagnosticsConfig:
    grid_min: float = -0.2
    grid_max: float = 1.2
    grid_points: int = 71
    eval_batch: int = 256
    n_probe: int = 200
    n_transfer: int = 500
    oracle_steps: int = 1000

    def __post_init__(self):
        if self.grid_points < 1 or (self.grid_points > 1 and not self.grid_max > self.grid_min):
            raise ConfigError("path-angle grid needs grid_points >= 1 and grid_max > grid_min")
        if self.eval_batch < 1 or self.n_probe < 2 or self.n_transfer < 1 or self.oracle_steps < 1:
            raise ConfigError("eval_batch, n_transfer, oracle_steps must be >= 1 and n_probe >= 2")

    def grid(self) -> list[float]:
        if self.grid_points == 1:
            return [float(self.grid_min)]
        step = (self.grid_max - self.grid_min) / (self.grid_points - 1)
        return [self.grid_min + i * step for i in range(self.grid_points)]


@dataclass
class EquilibriumConfig:
    n_random: int = 100
    support_x: int = 6
    k: int = 4

    def __post_init__(self):
        if self.n_random < 1:
            raise ConfigError(f"n_random must be >= 1, got {self.n_random}")
        if self.support_x < 1 or self.k < 1:
            raise ConfigError("support_x and k must be >= 1")


# keys of TrainConfig that live elsewhere in the document
_TRAIN_EXCLUDED = {"weights", "seed"}
_DATA_EXCLUDED = {"seed"}


def _names(cls, excluded=frozenset()) -> set[str]:
    return {f.name for f in fields(cls)} - set(excluded)


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    dataset: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    equilibrium: dict = field(default_factory=dict)

    def __post_init__(self):
        # validate every section eagerly so a bad file fails on load
        self.dataset_config()
        self.train_config()
        self.diagnostics_config()
        self.equilibrium_config()

    # typed views ---------------------------------------------------------

    def dataset_config(self) -> DatasetConfig:
        d = dict(self.dataset)
        if "shift" in d:
            d["shift"] = tuple(d["shift"])
        return _build(DatasetConfig, {**d, "seed": self.seed}, "dataset")

    def loss_weights(self) -> LossWeights:
        return _build(LossWeights, self.weights, "weights")

    def train_config(self, **override) -> TrainConfig:
        return _build(TrainConfig, {**self.train, **override, "weights": self.loss_weights(), "seed": self.seed},
                      "train")

    def diagnostics_config(self) -> DiagnosticsConfig:
        return _build(DiagnosticsConfig, self.diagnostics, "diagnostics")

    def equilibrium_config(self) -> EquilibriumConfig:
        return _build(EquilibriumConfig, self.equilibrium, "equilibrium")

    # serialisation -------------------------------------------------------

    def effective(self) -> dict:
        """Fully merged document; loading it reproduces this config."""
        data = self.dataset_config().to_dict()
        data.pop("seed")
        tr = self.train_config().to_dict()
        for k in _TRAIN_EXCLUDED:
            tr.pop(k, None)
        return {
            "seed": self.seed,
            "out": self.out,
            "dataset": data,
            "train": tr,
            "weights": self.loss_weights().to_dict(),
            "diagnostics": asdict(self.diagnostics_config()),
            "equilibrium": asdict(self.equilibrium_config()),
        }

    def to_json(self) -> str:
        return json.dumps(self.effective(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        top = _names(cls)
        for key in d:
            if key not in top:
                raise ConfigError(f"unknown config key {key!r}")
        sections = {
            "dataset": _names(DatasetConfig, _DATA_EXCLUDED),
            "train": _names(TrainConfig, _TRAIN_EXCLUDED),
            "weights": _names(LossWeights),
            "diagnostics": _names(DiagnosticsConfig),
            "equilibrium": _names(EquilibriumConfig),
        }
        for sec, allowed in sections.items():
            body = d.get(sec, {})
            if not isinstance(body, dict):
                raise ConfigError(f"config section {sec!r} must be an object")
            for key in body:
                if key not in allowed:
                    raise ConfigError(f"unknown config key {sec}.{key!r}")
        seed = d.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        return cls(**{k: (dict(v) if isinstance(v, dict) else v) for k, v in d.items()})

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(d)


def _build(cls, values: dict, section: str):
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section} config: {exc}") from exc
