"""Dense networks with reverse-mode gradients and spectral normalisation.

Weights are stored ``(out, in)``; a layer computes ``act(x @ W_eff.T + b)``
where ``W_eff = W / sigma_hat`` on spectral-normalised layers and
``sigma_hat = u^T W v`` uses the stored power-iteration vectors, which are
held constant for differentiation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .autodiff import Tensor, as_tensor

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity", "softmax")
SIGMA_FLOOR = 1e-12
WARMUP_POWER_ITERS = 5


class NonFiniteLossError(FloatingPointError):
    """Raised when a loss evaluates to NaN or inf."""

    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


@dataclass
class Mlp:
    layer_dims: list[int]
    activations: list[str]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    spectral: list[bool]
    # left / right singular-vector estimates, one pair per layer
    u: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        n = len(self.layer_dims) - 1
        if n < 1 or any(d < 1 for d in self.layer_dims):
            raise ValueError(f"layer_dims must hold >= 2 positive ints, got {self.layer_dims}")
        for name, seq in (("activations", self.activations), ("weights", self.weights),
                          ("biases", self.biases), ("spectral", self.spectral)):
            if len(seq) != n:
                raise ValueError(f"{name} has {len(seq)} entries for {n} layers")
        for i, act in enumerate(self.activations):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r} at layer {i}")
            if act == "softmax" and i != n - 1:
                raise ValueError("softmax is only allowed as the final activation")
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[i + 1], self.layer_dims[i])
            if w.shape != want or b.shape != (want[0],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape}, expected {want}")
        self.spectral = [bool(s) for s in self.spectral]
        if not self.u:
            self.u = [_normalize(np.ones(w.shape[0])) for w in self.weights]
        if not self.v:
            self.v = [_normalize(np.ones(w.shape[1])) for w in self.weights]
        self.u = [np.array(x, dtype=np.float64) for x in self.u]
        self.v = [np.array(x, dtype=np.float64) for x in self.v]

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_dims), list(self.activations),
            [w.copy() for w in self.weights], [b.copy() for b in self.biases],
            list(self.spectral), [x.copy() for x in self.u], [x.copy() for x in self.v],
        )

    def sigma_hat(self, i: int) -> float:
        s = float(self.u[i] @ self.weights[i] @ self.v[i])
        return max(s, SIGMA_FLOOR)

    def effective_weight(self, i: int) -> np.ndarray:
        if not self.spectral[i]:
            return self.weights[i]
        return self.weights[i] / self.sigma_hat(i)

    def __call__(self, x) -> Tensor:
        """Evaluate with the stored parameters held constant."""
        return _run(self, [Tensor(w) for w in self.weights], [Tensor(b) for b in self.biases], x)

    def to_dict(self) -> dict:
        return {
            "layer_dims": self.layer_dims,
            "activations": self.activations,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "spectral": self.spectral,
            "u": [x.tolist() for x in self.u],
            "v": [x.tolist() for x in self.v],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Mlp":
        return cls(d["layer_dims"], d["activations"], d["weights"], d["biases"],
                   d["spectral"], d.get("u") or [], d.get("v") or [])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Mlp":
        return cls.from_dict(json.loads(text))


def _apply_act(z: Tensor, act: str) -> Tensor:
    if act == "relu":
        return z.relu()
    if act == "tanh":
        return z.tanh()
    if act == "sigmoid":
        return z.sigmoid()
    if act == "softmax":
        return z.softmax()
    return z


def _run(net: Mlp, ws: Sequence[Tensor], bs: Sequence[Tensor], x) -> Tensor:
    h = as_tensor(x)
    squeeze = h.data.ndim == 1
    if h.data.shape[-1] != net.in_dim:
        raise ValueError(f"input width {h.data.shape[-1]} does not match layer_dims[0] = {net.in_dim}")
    if squeeze:
        h = h[None, :]
    for i in range(net.n_layers):
        w = ws[i]
        if net.spectral[i]:
            s = net.u[i] @ w.data @ net.v[i]
            if s > SIGMA_FLOOR:
                # d sigma / dW = u v^T with u, v held fixed
                w = w / _sigma_tensor(w, net.u[i], net.v[i])
            else:
                w = w * (1.0 / SIGMA_FLOOR)
        h = _apply_act(h @ w.T + bs[i], net.activations[i])
    return h[0] if squeeze else h


def _sigma_tensor(w: Tensor, u: np.ndarray, v: np.ndarray) -> Tensor:
    return (w * np.outer(u, v)).sum()


class Tracked:
    """An Mlp view whose parameters are graph leaves."""

    def __init__(self, net: Mlp):
        self.net = net
        self.weights = [Tensor(w, requires_grad=True) for w in net.weights]
        self.biases = [Tensor(b, requires_grad=True) for b in net.biases]

    @property
    def layer_dims(self):
        return self.net.layer_dims

    @property
    def in_dim(self) -> int:
        return self.net.in_dim

    @property
    def out_dim(self) -> int:
        return self.net.out_dim

    def __call__(self, x) -> Tensor:
        return _run(self.net, self.weights, self.biases, x)

    def collect(self) -> "ParamVector":
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append((w.grad if w.grad is not None else np.zeros_like(w.data)).ravel())
            parts.append((b.grad if b.grad is not None else np.zeros_like(b.data)).ravel())
        return ParamVector(np.concatenate(parts), layout_of(self.net))


def forward(net: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.in_dim:
        raise ValueError(f"input width {x.shape[-1]} does not match layer_dims[0] = {net.in_dim}")
    return net(x).data


# parameter vectors -------------------------------------------------------


@dataclass(frozen=True)
class Layout:
    layer_dims: tuple[int, ...]
    activations: tuple[str, ...]
    spectral: tuple[bool, ...]

    @property
    def entries(self) -> list[tuple[int, str, tuple[int, ...], int, int]]:
        """``(layer, 'W' | 'b', shape, start, stop)`` for each block."""
        out, pos = [], 0
        for i in range(len(self.layer_dims) - 1):
            shape = (self.layer_dims[i + 1], self.layer_dims[i])
            n = shape[0] * shape[1]
            out.append((i, "W", shape, pos, pos + n))
            pos += n
            out.append((i, "b", (shape[0],), pos, pos + shape[0]))
            pos += shape[0]
        return out

    @property
    def size(self) -> int:
        return self.entries[-1][-1]

    def locate(self, index: int) -> tuple[int, str, tuple[int, ...]]:
        for layer, kind, shape, lo, hi in self.entries:
            if lo <= index < hi:
                return layer, kind, tuple(int(i) for i in np.unravel_index(index - lo, shape))
        raise IndexError(index)

    def to_dict(self) -> dict:
        return {"layer_dims": list(self.layer_dims), "activations": list(self.activations),
                "spectral": list(self.spectral)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Layout":
        return cls(tuple(d["layer_dims"]), tuple(d["activations"]), tuple(bool(s) for s in d["spectral"]))


def layout_of(net: Mlp) -> Layout:
    return Layout(tuple(net.layer_dims), tuple(net.activations), tuple(net.spectral))


@dataclass
class ParamVector:
    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.layout.size,):
            raise ValueError(f"{self.values.shape[0]} values for a layout of size {self.layout.size}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(), "layout": self.layout.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParamVector":
        return cls(np.asarray(d["values"], dtype=np.float64), Layout.from_dict(d["layout"]))


def flatten(net: Mlp) -> ParamVector:
    parts = []
    for w, b in zip(net.weights, net.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return ParamVector(np.concatenate(parts), layout_of(net))


def unflatten(pv: ParamVector, like: Mlp | None = None) -> Mlp:
    """Rebuild an Mlp; power-iteration state is copied from ``like`` if given."""
    lay = pv.layout
    ws, bs = [], []
    for layer, kind, shape, lo, hi in lay.entries:
        block = pv.values[lo:hi].reshape(shape).copy()
        (ws if kind == "W" else bs).append(block)
    if like is not None:
        if layout_of(like) != lay:
            raise ValueError("template network has a different layout")
        return Mlp(list(lay.layer_dims), list(lay.activations), ws, bs, list(lay.spectral),
                   [x.copy() for x in like.u], [x.copy() for x in like.v])
    return Mlp(list(lay.layer_dims), list(lay.activations), ws, bs, list(lay.spectral))


def lerp(a: ParamVector, b: ParamVector, t: float) -> ParamVector:
    if a.layout != b.layout:
        raise ValueError("cannot interpolate between different layouts")
    return ParamVector((1.0 - t) * a.values + t * b.values, a.layout)


# construction ------------------------------------------------------------


def init_mlp(
    layer_dims: Sequence[int],
    activations: Sequence[str],
    rng: np.random.Generator | int,
    spectral: bool | Sequence[bool] = False,
) -> Mlp:
    """Glorot-uniform weights, zero biases; spectral layers get warm-up iterations."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n = len(layer_dims) - 1
    flags = [spectral] * n if isinstance(spectral, bool) else list(spectral)
    ws, bs = [], []
    for i in range(n):
        fan_in, fan_out = layer_dims[i], layer_dims[i + 1]
        s = math.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    us = [_normalize(rng.standard_normal(layer_dims[i + 1])) for i in range(n)]
    vs = [_normalize(rng.standard_normal(layer_dims[i])) for i in range(n)]
    net = Mlp(list(layer_dims), list(activations), ws, bs, flags, us, vs)
    for _ in range(WARMUP_POWER_ITERS):
        spectral_step(net)
    return net


def spectral_step(net: Mlp) -> Mlp:
    """One power iteration on every flagged layer, in place."""
    for i, flagged in enumerate(net.spectral):
        if flagged:
            w = net.weights[i]
            net.v[i] = _normalize(w.T @ net.u[i])
            net.u[i] = _normalize(w @ net.v[i])
    return net


def power_iterate(w: np.ndarray, steps: int, rng: np.random.Generator | int = 0) -> float:
    """Estimate the top singular value of a bare matrix by power iteration."""
    w = np.asarray(w, dtype=np.float64)
    net = Mlp([w.shape[1], w.shape[0]], ["identity"], [w], [np.zeros(w.shape[0])], [True])
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    net.u = [_normalize(rng.standard_normal(w.shape[0]))]
    for _ in range(steps):
        spectral_step(net)
    return net.sigma_hat(0) if np.any(w) else SIGMA_FLOOR


# gradients ---------------------------------------------------------------


def _reduce_loss(out) -> Tensor:
    out = as_tensor(out)
    if out.data.ndim == 0:
        if not np.isfinite(out.data):
            raise NonFiniteLossError(f"loss is {out.data}")
        return out
    bad = np.flatnonzero(~np.isfinite(out.data.ravel()))
    if bad.size:
        raise NonFiniteLossError(f"non-finite loss at batch index {bad[0]}", int(bad[0]))
    return out.mean()


def grads(nets: Mapping[str, Mlp], loss_fn: Callable[..., Tensor]) -> tuple[float, dict[str, ParamVector]]:
    """Value and per-network gradients of ``loss_fn(**tracked_nets)``.

    ``loss_fn`` may return a scalar or a per-sample vector (which is averaged);
    non-finite values raise :class:`NonFiniteLossError` with the sample index.
    """
    tracked = {k: Tracked(n) for k, n in nets.items()}
    loss = _reduce_loss(loss_fn(**tracked))
    if loss.requires_grad:
        loss.backward()
    return float(loss.data), {k: t.collect() for k, t in tracked.items()}


def grad(net: Mlp, loss_fn: Callable[[Tracked], Tensor]) -> ParamVector:
    _, g = grads({"net": net}, lambda net: loss_fn(net))
    return g["net"]
