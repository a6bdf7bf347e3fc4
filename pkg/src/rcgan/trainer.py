"""Alternating optimisation of the three-player game."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import nn
from .losses import VARIANTS, X_DIM, Batch, LossWeights, classifier_loss, total_loss
from .nn import Mlp, NonFiniteLossError, ParamVector
from .synthdata import SsdaDataset

NET_NAMES = ("g_st", "g_ts", "d_t", "d_s", "c")
DISCRIMINATORS = ("d_t", "d_s")
GENERATORS = ("g_st", "g_ts")


class TrainingError(RuntimeError):
    def __init__(self, step: int, player: str, cause: Exception):
        super().__init__(f"non-finite {player} objective at step {step}: {cause}")
        self.step = step
        self.player = player


@dataclass
class TrainConfig:
    variant: str = "relaxed"
    steps: int = 2000
    batch_size: int = 64
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    d_steps_per_g_step: int = 1
    snapshot_every: int = 500
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    hidden: int = 32
    # train C on transferred source pairs; off for the target-only ENT baseline
    classifier_on_generated: bool = True
    generator_loss: str = "nonsaturating"

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.steps <= 0:
            raise ValueError(f"steps must be positive, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.d_steps_per_g_step < 1 or self.snapshot_every < 1:
            raise ValueError("d_steps_per_g_step and snapshot_every must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    final_nets: dict[str, Mlp]
    snapshots: list[tuple[int, dict[str, ParamVector]]]
    loss_curves: dict[str, list[float]]
    seed: int
    config: TrainConfig | None = None

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        (out / "nets").mkdir(parents=True, exist_ok=True)
        for name, net in self.final_nets.items():
            (out / "nets" / f"{name}.json").write_text(net.to_json())
        with (out / "curves.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            cols = ["step", "for_d", "for_g", "for_c", "target_acc"]
            w.writerow(cols)
            for row in zip(*(self.loss_curves[c] for c in cols)):
                w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
        names = sorted(self.snapshots[0][1])
        header = {
            "dtype": "<f8",
            "nets": {n: self.snapshots[0][1][n].layout.to_dict() for n in names},
            "order": names,
            "steps": [s for s, _ in self.snapshots],
        }
        blob = np.concatenate([snap[n].values for _, snap in self.snapshots for n in names])
        blob.astype("<f8").tofile(out / "snapshots.bin")
        (out / "snapshots.json").write_text(json.dumps(header, indent=2))
        meta = {"seed": self.seed}
        if self.config is not None:
            meta["config"] = self.config.to_dict()
        (out / "result.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, out_dir: str | Path) -> "TrainResult":
        out = Path(out_dir)
        meta = json.loads((out / "result.json").read_text())
        nets = {p.stem: Mlp.from_json(p.read_text()) for p in sorted((out / "nets").glob("*.json"))}
        curves: dict[str, list[float]] = {}
        with (out / "curves.csv").open(newline="") as fh:
            for row in csv.DictReader(fh):
                for k, v in row.items():
                    curves.setdefault(k, []).append(float(v))
        curves["step"] = [int(s) for s in curves.get("step", [])]
        header = json.loads((out / "snapshots.json").read_text())
        layouts = {n: nn.Layout.from_dict(d) for n, d in header["nets"].items()}
        blob = np.fromfile(out / "snapshots.bin", dtype=header["dtype"]).astype(np.float64)
        snaps, pos = [], 0
        for step in header["steps"]:
            snap = {}
            for n in header["order"]:
                size = layouts[n].size
                snap[n] = ParamVector(blob[pos:pos + size].copy(), layouts[n])
                pos += size
            snaps.append((int(step), snap))
        cfg = TrainConfig(**meta["config"]) if "config" in meta else None
        return cls(nets, snaps, curves, int(meta["seed"]), cfg)


# optimisers ----------------------------------------------------------------


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return params - self.lr * grad


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    return Sgd(cfg.learning_rate)


def apply_update(net: Mlp, opt, g: ParamVector, ascend: bool = False) -> None:
    pv = nn.flatten(net)
    new = opt.step(pv.values, -g.values if ascend else g.values)
    fresh = nn.unflatten(ParamVector(new, pv.layout), like=net)
    net.weights, net.biases = fresh.weights, fresh.biases


# networks ------------------------------------------------------------------


def build_nets(variant: str, k: int, hidden: int, seed: int | np.random.Generator) -> dict[str, Mlp]:
    """Two-hidden-layer nets for both generators, both discriminators and C.

    Discriminators are spectrally normalised and take a ``K + 1`` wide label;
    preliminary generators take ``x`` plus a ``K`` wide label.
    """
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    g_in = X_DIM + (k if variant == "preliminary" else 0)
    h = hidden
    return {
        "g_st": nn.init_mlp([g_in, h, h, X_DIM], ["relu", "relu", "identity"], rng),
        "g_ts": nn.init_mlp([g_in, h, h, X_DIM], ["relu", "relu", "identity"], rng),
        "d_t": nn.init_mlp([X_DIM + k + 1, h, h, 1], ["relu", "relu", "sigmoid"], rng, spectral=True),
        "d_s": nn.init_mlp([X_DIM, h, h, 1], ["relu", "relu", "sigmoid"], rng, spectral=True),
        "c": nn.init_mlp([X_DIM, h, h, k], ["relu", "relu", "softmax"], rng),
    }


# data ----------------------------------------------------------------------


def _take(pool_n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    if pool_n <= size:
        return np.arange(pool_n)
    return rng.choice(pool_n, size=size, replace=False)


def sample_batch(ds: SsdaDataset, size: int, rng: np.random.Generator) -> Batch:
    s = _take(len(ds.source_x), size, rng)
    t = _take(len(ds.target_labeled_x), size, rng)
    u = _take(len(ds.target_unlabeled_x), size, rng)
    return Batch(ds.k, ds.source_x[s], ds.source_y[s], ds.target_labeled_x[t], ds.target_labeled_y[t],
                 ds.target_unlabeled_x[u])


def pseudo_batch(ds: SsdaDataset, size: int, rng: np.random.Generator) -> Batch:
    u = _take(len(ds.target_unlabeled_x), max(size // 2, 1), rng)
    return Batch(ds.k, np.zeros((0, X_DIM)), [], np.zeros((0, X_DIM)), [], ds.target_unlabeled_x[u])


# training ------------------------------------------------------------------


def evaluate_accuracy(c: Mlp, points_x, points_y) -> float:
    """Fraction with ``argmax C(x) == y``; argmax ties go to the lowest index."""
    x = np.asarray(points_x, dtype=np.float64).reshape(-1, X_DIM)
    y = np.asarray(points_y).reshape(-1)
    if not len(x):
        raise ValueError("cannot score an empty point set")
    pred = np.argmax(c(x).data, axis=1)
    return float(np.mean(pred == y))


def _player_step(nets, names, objective, ascend, opts, step, player):
    try:
        value, g = nn.grads({n: nets[n] for n in names}, lambda **tracked: objective({**nets, **tracked}))
    except NonFiniteLossError as exc:
        raise TrainingError(step, player, exc) from exc
    for n in names:
        apply_update(nets[n], opts[n], g[n], ascend=ascend)
    return value


def train(
    ds: SsdaDataset,
    cfg: TrainConfig,
    callback: Callable[[int, dict[str, Mlp]], None] | None = None,
) -> TrainResult:
    """Run ``cfg.steps`` rounds of: D ascent (x ``d_steps_per_g_step``), G
    descent, C descent.  Fully deterministic under ``cfg.seed``."""
    init_seq, data_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    nets = build_nets(cfg.variant, ds.k, cfg.hidden, np.random.default_rng(init_seq))
    rng = np.random.default_rng(data_seq)
    opts = {n: make_optimizer(cfg) for n in NET_NAMES}
    w = cfg.weights
    variant = cfg.variant

    snapshots = [(0, {n: nn.flatten(nets[n]) for n in NET_NAMES})]
    curves: dict[str, list] = {k: [] for k in ("step", "for_d", "for_g", "for_c", "target_acc")}

    for step in range(1, cfg.steps + 1):
        for _ in range(cfg.d_steps_per_g_step):
            batch = sample_batch(ds, cfg.batch_size, rng)
            pb = pseudo_batch(ds, cfg.batch_size, rng)
            vd = _player_step(
                nets, DISCRIMINATORS,
                lambda all_nets: total_loss(all_nets, batch, w, variant, pb, cfg.classifier_on_generated,
                                            players=("for_d",), generator_loss=cfg.generator_loss)["for_d"],
                True, opts, step, "for_d")
            for n in DISCRIMINATORS:
                nn.spectral_step(nets[n])
        vg = _player_step(
            nets, GENERATORS,
            lambda all_nets: total_loss(all_nets, batch, w, variant, pb, cfg.classifier_on_generated,
                                        players=("for_g",), generator_loss=cfg.generator_loss)["for_g"],
            False, opts, step, "for_g")
        vc = _player_step(
            nets, ("c",),
            lambda all_nets: total_loss(all_nets, batch, w, variant, pb, cfg.classifier_on_generated,
                                        players=("for_c",), generator_loss=cfg.generator_loss)["for_c"],
            False, opts, step, "for_c")
        curves["step"].append(step)
        curves["for_d"].append(vd)
        curves["for_g"].append(vg)
        curves["for_c"].append(vc)
        curves["target_acc"].append(evaluate_accuracy(nets["c"], ds.target_unlabeled_x, ds.target_unlabeled_y))
        if step % cfg.snapshot_every == 0 or step == cfg.steps:
            snapshots.append((step, {n: nn.flatten(nets[n]) for n in NET_NAMES}))
        if callback is not None:
            callback(step, nets)

    return TrainResult(nets, snapshots, curves, cfg.seed, cfg)


def fit_classifier(
    x: np.ndarray, y: np.ndarray, k: int, steps: int = 500, hidden: int | None = 32, lr: float = 1e-2,
    seed: int = 0, batch_size: int = 128,
) -> Mlp:
    """Plain supervised softmax classifier (``hidden=None`` gives a linear one)."""
    rng = np.random.default_rng(seed)
    if hidden is None:
        c = nn.init_mlp([X_DIM, k], ["softmax"], rng)
    else:
        c = nn.init_mlp([X_DIM, hidden, hidden, k], ["relu", "relu", "softmax"], rng)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    opt = Adam(lr)
    for _ in range(steps):
        idx = _take(len(x), batch_size, rng)
        b = Batch(k, np.zeros((0, X_DIM)), [], x[idx], y[idx], np.zeros((0, X_DIM)))
        _, g = nn.grads({"c": c}, lambda c: classifier_loss(c, None, b))
        apply_update(c, opt, g["c"])
    return c
