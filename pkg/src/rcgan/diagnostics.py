"""Convergence and generator-quality diagnostics.

* Path angle: cosine between the game vector field and the straight line from
  the initial to the final parameters, sampled along that line.
* Label domination: how far a generator's output moves when its label input
  changes compared with when its data input changes.
* Transfer quality: distance to the ground-truth map and label consistency
  judged by an oracle classifier.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import nn
from .losses import X_DIM, LossWeights, is_conditional, onehot, total_loss
from .nn import Mlp
from .synthdata import SsdaDataset, ideal_transfer
from .trainer import (
    DISCRIMINATORS,
    GENERATORS,
    NET_NAMES,
    TrainResult,
    fit_classifier,
    pseudo_batch,
    sample_batch,
)

DEFAULT_GRID = tuple(float(t) for t in np.linspace(-0.2, 1.2, 71))
EVAL_BATCH = 256
RATIO_FLOOR = 1e-12
# cosine is reported as 0 when the field norm is at or below this
ZERO_FIELD = 1e-300


@dataclass
class PathAngleTrace:
    ts: list[float]
    cosines: list[float]
    grad_norms: list[float]
    path_direction_norm: float

    def __post_init__(self):
        if not (len(self.ts) == len(self.cosines) == len(self.grad_norms)):
            raise ValueError("ts, cosines and grad_norms must have equal length")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "cosine", "grad_norm"])
        for row in zip(self.ts, self.cosines, self.grad_norms):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PathAngleTrace":
        return cls(list(d["ts"]), list(d["cosines"]), list(d["grad_norms"]), float(d["path_direction_norm"]))


def path_angle_field(
    field_fn: Callable[[np.ndarray], np.ndarray],
    theta_init: np.ndarray,
    theta_final: np.ndarray,
    grid: Sequence[float] = DEFAULT_GRID,
) -> PathAngleTrace:
    """Path angle of an arbitrary vector field along ``init -> final``."""
    a = np.asarray(theta_init, dtype=np.float64).ravel()
    b = np.asarray(theta_final, dtype=np.float64).ravel()
    ts = [float(t) for t in grid]
    if not ts:
        raise ValueError("grid must be nonempty")
    if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
        raise ValueError("grid must be strictly increasing")
    direction = b - a
    dn = float(np.linalg.norm(direction))
    if dn == 0.0:
        raise ValueError("initial and final parameters coincide; the path has no direction")
    cosines, norms = [], []
    for t in ts:
        v = np.asarray(field_fn((1.0 - t) * a + t * b), dtype=np.float64).ravel()
        vn = float(np.linalg.norm(v))
        cos = 0.0 if vn <= ZERO_FIELD else float(np.dot(v, direction) / (vn * dn))
        cosines.append(float(np.clip(cos, -1.0, 1.0)))
        norms.append(vn)
    return PathAngleTrace(ts, cosines, norms, dn)


# game vector field over all five networks -----------------------------------


def _join(pvs: dict[str, nn.ParamVector]) -> np.ndarray:
    return np.concatenate([pvs[n].values for n in NET_NAMES])


def _split(theta: np.ndarray, like: dict[str, nn.ParamVector]) -> dict[str, nn.ParamVector]:
    out, lo = {}, 0
    for n in NET_NAMES:
        size = like[n].layout.size
        out[n] = nn.ParamVector(theta[lo:lo + size], like[n].layout)
        lo += size
    return out


def game_field(
    nets: dict[str, Mlp],
    batch,
    pb,
    weights: LossWeights,
    variant: str,
    use_generated: bool = True,
    generator_loss: str = "nonsaturating",
) -> np.ndarray:
    """Each player's improvement direction, concatenated in ``NET_NAMES`` order.

    D ascends ``for_d``; G and C descend ``for_g`` / ``for_c``.
    """

    def player(names, key):
        _, g = nn.grads(
            {n: nets[n] for n in names},
            lambda **tracked: total_loss({**nets, **tracked}, batch, weights, variant, pb, use_generated,
                                         players=(key,), generator_loss=generator_loss)[key],
        )
        return g

    parts = {}
    parts.update(player(DISCRIMINATORS, "for_d"))
    for n, g in player(GENERATORS, "for_g").items():
        parts[n] = nn.ParamVector(-g.values, g.layout)
    g = player(("c",), "for_c")["c"]
    parts["c"] = nn.ParamVector(-g.values, g.layout)
    return _join(parts)


def path_angle(
    result: TrainResult,
    ds: SsdaDataset,
    weights: LossWeights | None = None,
    variant: str | None = None,
    grid: Sequence[float] = DEFAULT_GRID,
    eval_batch: int = EVAL_BATCH,
    seed: int = 0,
) -> PathAngleTrace:
    """Path angle of the trained game between the first and last snapshots.

    Interpolated discriminators reuse the final power-iteration vectors.
    """
    if len(result.snapshots) < 2:
        raise ValueError("need initial and final snapshots")
    cfg = result.config
    weights = cfg.weights if weights is None else weights
    variant = cfg.variant if variant is None else variant
    init, final = result.snapshots[0][1], result.snapshots[-1][1]
    rng = np.random.default_rng(seed)
    batch = sample_batch(ds, eval_batch, rng)
    pb = pseudo_batch(ds, eval_batch, rng)

    def field_fn(theta):
        pvs = _split(theta, init)
        nets = {n: nn.unflatten(pvs[n], like=result.final_nets[n]) for n in NET_NAMES}
        return game_field(nets, batch, pb, weights, variant, cfg.classifier_on_generated, cfg.generator_loss)

    return path_angle_field(field_fn, _join(init), _join(final), grid)


# label domination -------------------------------------------------------------


@dataclass
class DominationReport:
    label_sensitivity: float
    input_sensitivity: float
    domination_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_pairwise(points: np.ndarray) -> float:
    """Mean L2 distance over unordered pairs of rows."""
    n = len(points)
    if n < 2:
        return 0.0
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    iu = np.triu_indices(n, 1)
    return float(dist[iu].mean())


def _probe(ds: SsdaDataset, n_probe: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n_probe < 2:
        raise ValueError(f"n_probe must be >= 2, got {n_probe}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(ds.source_x), size=min(n_probe, len(ds.source_x)), replace=False)
    return ds.source_x[idx], ds.source_y[idx]


def _report(label_s: float, input_s: float) -> DominationReport:
    return DominationReport(label_s, input_s, label_s / max(input_s, RATIO_FLOOR))


def domination_score(gen: Mlp, conditional: bool, ds: SsdaDataset, n_probe: int = 200,
                     seed: int = 0) -> DominationReport:
    """Label vs input sensitivity of a generator on seeded source probes.

    Unconditional generators have label sensitivity 0 by definition.
    """
    x, _ = _probe(ds, n_probe, seed)
    k = ds.k
    if conditional != is_conditional(gen, k):
        raise ValueError(f"generator with input width {gen.in_dim} does not match conditional={conditional}")
    if not conditional:
        return _report(0.0, _mean_pairwise(nn.forward(gen, x)))
    n = len(x)
    outs = np.stack([nn.forward(gen, np.concatenate([x, onehot(np.full(n, j), k)], axis=1)) for j in range(k)])
    # outs[j, i] = G(x_i, j)
    label_s = float(np.mean([_mean_pairwise(outs[:, i]) for i in range(n)]))
    input_s = float(np.mean([_mean_pairwise(outs[j]) for j in range(k)]))
    return _report(label_s, input_s)


def ratio_equivalent(gen: Mlp, ds: SsdaDataset, n_probe: int = 200, seed: int = 0) -> DominationReport:
    """Domination ratio of an unconditional generator under a counterfactual label.

    "Changing the label" of a source point moves it to the same offset around
    another class mean, ``x - mu_y + mu_j``; the input side is the spread of
    ``G(x_i)`` over the probes. A generator that follows the data scores near
    the ratio of class-mean spread to point spread in the target.
    """
    if is_conditional(gen, ds.k):
        raise ValueError("ratio_equivalent is for unconditional generators")
    x, y = _probe(ds, n_probe, seed)
    means = ds.source_means
    offsets = x - means[y]
    outs = np.stack([nn.forward(gen, offsets + means[j]) for j in range(ds.k)])
    label_s = float(np.mean([_mean_pairwise(outs[:, i]) for i in range(len(x))]))
    return _report(label_s, _mean_pairwise(nn.forward(gen, x)))


# transfer quality -------------------------------------------------------------


@dataclass
class TransferQuality:
    mean_map_error: float
    label_consistency: float

    def to_dict(self) -> dict:
        return asdict(self)


def oracle_classifier(ds: SsdaDataset, seed: int = 0, steps: int = 1000) -> Mlp:
    """Classifier fitted on every target point with its hidden label.

    Evaluation only: no adaptation method may see these labels.
    """
    x = np.concatenate([ds.target_labeled_x, ds.target_unlabeled_x])
    y = np.concatenate([ds.target_labeled_y, ds.target_unlabeled_y])
    return fit_classifier(x, y, ds.k, steps=steps, seed=seed)


def transfer_quality(gen: Mlp, ds: SsdaDataset, c_oracle: Mlp, n: int = 500, seed: int = 0) -> TransferQuality:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(ds.source_x), size=n, replace=n > len(ds.source_x))
    x, y = ds.source_x[idx], ds.source_y[idx]
    inp = np.concatenate([x, onehot(y, ds.k)], axis=1) if is_conditional(gen, ds.k) else x
    out = nn.forward(gen, inp)
    err = float(np.linalg.norm(out - ideal_transfer(ds, x), axis=1).mean())
    pred = np.argmax(nn.forward(c_oracle, out), axis=1)
    return TransferQuality(err, float(np.mean(pred == y)))


def linear_generator(matrix, shift) -> Mlp:
    """One identity layer computing ``x -> matrix @ x + shift``."""
    m = np.asarray(matrix, dtype=np.float64).reshape(X_DIM, X_DIM)
    b = np.asarray(shift, dtype=np.float64).reshape(X_DIM)
    return Mlp([X_DIM, X_DIM], ["identity"], [m.copy()], [b.copy()], [False])


# output -------------------------------------------------------------------------


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@dataclass
class Series:
    name: str
    xs: list[float]
    ys: list[float]
    color: str = "#1f77b4"


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    width: int = 640
    height: int = 400


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def svg_line_chart(chart: Chart) -> str:
    """Standalone SVG with one polyline per series, axes and a legend."""
    left, right, top, bottom = 70, 20, 40, 50
    w, h = chart.width, chart.height
    pw, ph = w - left - right, h - top - bottom
    xs = [x for s in chart.series for x in s.xs if np.isfinite(x)]
    ys = [y for s in chart.series for y in s.ys if np.isfinite(y)]
    if not xs or not ys:
        raise ValueError("nothing to plot")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">'
        f"{_esc(chart.title)}</text>",
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{top + ph}" x2="{px(t):.2f}" y2="{top + ph + 5}" stroke="#444"/>')
        out.append(f'<text x="{px(t):.2f}" y="{top + ph + 18}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{left - 5}" y1="{py(t):.2f}" x2="{left}" y2="{py(t):.2f}" stroke="#444"/>')
        out.append(f'<text x="{left - 8}" y="{py(t) + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{t:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{h - 12}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="12">{_esc(chart.xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{_esc(chart.ylabel)}</text>')
    for i, s in enumerate(chart.series):
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s.xs, s.ys) if np.isfinite(x) and np.isfinite(y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{s.color}" stroke-width="1.5"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw - 120}" y1="{ly}" x2="{left + pw - 100}" y2="{ly}" stroke="{s.color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 95}" y="{ly + 4}" font-family="sans-serif" font-size="11">'
                   f"{_esc(s.name)}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def path_angle_charts(trace: PathAngleTrace, title: str = "path angle") -> tuple[str, str]:
    """Cosine and gradient-norm charts for one trace."""
    cos = Chart(f"{title}: cosine", "t", "cosine", [Series("cosine", trace.ts, trace.cosines)])
    norm = Chart(f"{title}: gradient norm", "t", "norm", [Series("grad norm", trace.ts, trace.grad_norms,
                                                                  "#d62728")])
    return svg_line_chart(cos), svg_line_chart(norm)
