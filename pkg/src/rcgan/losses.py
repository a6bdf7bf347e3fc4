"""Training objectives for the preliminary and relaxed games.

Every loss takes network-like callables (an :class:`~rcgan.nn.Mlp` or a
:class:`~rcgan.nn.Tracked` view of one) and returns a scalar
:class:`~rcgan.autodiff.Tensor`; ``float()`` it for the value.

Discriminators see ``[x, label_vector]`` concatenated. Their label width is
``K + 1``: the first ``K`` channels carry the class and the last one is the
marginal "any real target sample" channel. Conditional (preliminary)
generators see ``[x, onehot_K(y)]``; relaxed generators see ``x`` only.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Mapping

import numpy as np

from .autodiff import Tensor, concat

LOG_CLAMP = 1e-7
# label block gain at the discriminator input; a spectrally normalised D is
# ~1-Lipschitz, so a unit one-hot could barely move its output next to x
LABEL_SCALE = 4.0
X_DIM = 2
VARIANTS = ("relaxed", "preliminary")
PLAYERS = ("for_d", "for_g", "for_c")
GENERATOR_LOSSES = ("minimax", "nonsaturating")


@dataclass
class LossWeights:
    lambda_gan: float = 1.0
    lambda_cycle: float = 0.01
    lambda_c: float = 1.0
    lambda_marg: float = 1.0
    lambda_pseudo: float = 0.5
    lambda_ent: float = 0.1
    alpha: float = 0.5
    # source-side discriminator D_S vs G_{T->S}; not part of the analysed game
    lambda_gan_reverse: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v < 0:
                raise ValueError(f"{f.name} must be non-negative, got {v}")
        if self.alpha > 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Batch:
    """One draw from the three data pools; ``k`` is the class count."""

    k: int
    source_x: np.ndarray
    source_y: np.ndarray
    target_x: np.ndarray
    target_y: np.ndarray
    target_unlabeled: np.ndarray

    def __post_init__(self):
        self.source_x = np.asarray(self.source_x, dtype=np.float64).reshape(-1, X_DIM)
        self.target_x = np.asarray(self.target_x, dtype=np.float64).reshape(-1, X_DIM)
        self.target_unlabeled = np.asarray(self.target_unlabeled, dtype=np.float64).reshape(-1, X_DIM)
        self.source_y = np.asarray(self.source_y, dtype=np.int64).reshape(-1)
        self.target_y = np.asarray(self.target_y, dtype=np.int64).reshape(-1)
        if len(self.source_y) != len(self.source_x) or len(self.target_y) != len(self.target_x):
            raise ValueError("labels and points differ in length")
        for name, ys in (("source", self.source_y), ("target", self.target_y)):
            if ys.size and (ys.min() < 0 or ys.max() >= self.k):
                raise ValueError(f"{name} labels must lie in [0, {self.k})")
        if not (len(self.source_x) or len(self.target_x) or len(self.target_unlabeled)):
            raise ValueError("batch is empty")

    @classmethod
    def from_lists(cls, k: int, source_xy=(), target_xy=(), target_unlabeled=()) -> "Batch":
        sx = [x for x, _ in source_xy]
        sy = [y for _, y in source_xy]
        tx = [x for x, _ in target_xy]
        ty = [y for _, y in target_xy]
        return cls(k, np.array(sx, dtype=np.float64).reshape(-1, X_DIM), sy,
                   np.array(tx, dtype=np.float64).reshape(-1, X_DIM), ty,
                   np.array(list(target_unlabeled), dtype=np.float64).reshape(-1, X_DIM))


def onehot(y: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((len(y), width))
    out[np.arange(len(y)), y] = 1.0
    return out


def marginal_code(n: int, k: int) -> np.ndarray:
    out = np.zeros((n, k + 1))
    out[:, k] = 1.0
    return out


def label_width(d) -> int:
    return d.in_dim - X_DIM


def is_conditional(g, k: int) -> bool:
    if g.in_dim == X_DIM:
        return False
    if g.in_dim == X_DIM + k:
        return True
    raise ValueError(f"generator input width {g.in_dim} fits neither x ({X_DIM}) nor x+label ({X_DIM + k})")


def _pad(labels, width: int):
    """Pad a K-wide label block (array or Tensor) with zeros up to ``width``."""
    k = labels.shape[1]
    if k == width:
        return labels
    return concat([labels, np.zeros((labels.shape[0], width - k))], axis=1)


def _log(p: Tensor) -> Tensor:
    return p.clip(LOG_CLAMP, 1.0 - LOG_CLAMP).log()


def _log1m(p: Tensor) -> Tensor:
    return (1.0 - p.clip(LOG_CLAMP, 1.0 - LOG_CLAMP)).log()


def _fake(p: Tensor, nonsaturating: bool) -> Tensor:
    """Per-sample fake-side term: ``log(1 - D)``, or ``-log D`` when non-saturating."""
    return -_log(p) if nonsaturating else _log1m(p)


def _d(d, x, labels) -> Tensor:
    return d(concat([x, _pad(labels, label_width(d)) * LABEL_SCALE], axis=1))


def transfer(g, x, y, k: int):
    """Apply a generator; labels are fed only to conditional generators."""
    if is_conditional(g, k):
        return g(concat([x, onehot(y, k)], axis=1))
    return g(x)


def _zero() -> Tensor:
    return Tensor(0.0)


# individual terms ----------------------------------------------------------


def real_term(d, batch: Batch) -> Tensor:
    if not len(batch.target_x):
        raise ValueError("the real-pair term needs labeled target data")
    return _log(_d(d, batch.target_x, onehot(batch.target_y, batch.k))).mean()


def generator_term(d, g_st, batch: Batch, nonsaturating: bool = False) -> Tensor:
    """``mean log(1 - D(G(x), y))`` over the source pool."""
    if not len(batch.source_x):
        return _zero()
    fake = transfer(g_st, batch.source_x, batch.source_y, batch.k)
    return _fake(_d(d, fake, onehot(batch.source_y, batch.k)), nonsaturating).mean()


def classifier_term(d, c, batch: Batch, nonsaturating: bool = False) -> Tensor:
    """``mean log(1 - D(x, C(x)))`` over unlabeled target; C(x) is fed soft."""
    if not len(batch.target_unlabeled):
        return _zero()
    probs = c(batch.target_unlabeled)
    return _fake(_d(d, batch.target_unlabeled, probs), nonsaturating).mean()


def gan_loss_relaxed(d, g_st, c, batch: Batch, alpha: float) -> Tensor:
    out = real_term(d, batch) + alpha * generator_term(d, g_st, batch)
    if alpha < 1.0:
        out = out + (1.0 - alpha) * classifier_term(d, c, batch)
    return out


def gan_loss_preliminary(d, g_st, batch: Batch) -> Tensor:
    if not len(batch.source_x):
        raise ValueError("the preliminary GAN loss needs source data")
    if not is_conditional(g_st, batch.k):
        raise ValueError("the preliminary GAN loss needs a conditional generator")
    return real_term(d, batch) + generator_term(d, g_st, batch)


def _l1(a, b: np.ndarray) -> Tensor:
    return (a - b).abs().sum(axis=1).mean()


def cycle_loss(g_st, g_ts, batch: Batch, variant: str) -> Tensor:
    """Mean per-sample L1 reconstruction error, source pool plus labeled target."""
    k = batch.k
    want = variant == "preliminary"
    for g in (g_st, g_ts):
        if is_conditional(g, k) != want:
            raise ValueError(f"{variant} cycle loss got a generator of input width {g.in_dim}")
    out = _zero()
    if len(batch.source_x):
        y = batch.source_y
        out = out + _l1(transfer(g_ts, transfer(g_st, batch.source_x, y, k), y, k), batch.source_x)
    if len(batch.target_x):
        y = batch.target_y
        out = out + _l1(transfer(g_st, transfer(g_ts, batch.target_x, y, k), y, k), batch.target_x)
    return out


def _xent(probs: Tensor, y: np.ndarray) -> Tensor:
    return -(probs[np.arange(len(y)), y].clip(LOG_CLAMP, 1.0).log()).mean()


def classifier_loss(c, g_st, batch: Batch, use_generated: bool = True) -> Tensor:
    """Cross-entropy on transferred source pairs plus labeled target pairs."""
    if not (len(batch.source_x) or len(batch.target_x)):
        raise ValueError("classifier loss needs source or labeled target data")
    out = _zero()
    if use_generated and len(batch.source_x):
        fake = transfer(g_st, batch.source_x, batch.source_y, batch.k)
        out = out + _xent(c(fake), batch.source_y)
    if len(batch.target_x):
        out = out + _xent(c(batch.target_x), batch.target_y)
    return out


def marginal_loss(d, g_st, batch: Batch) -> Tensor:
    k = batch.k
    if label_width(d) != k + 1:
        raise ValueError(f"marginal loss needs a discriminator label width of {k + 1}, got {label_width(d)}")
    out = _zero()
    for pool in (batch.target_x, batch.target_unlabeled):
        if len(pool):
            out = out + _log(_d(d, pool, marginal_code(len(pool), k))).mean()
    out = out + marginal_generator_term(d, g_st, batch)
    return out


def marginal_generator_term(d, g_st, batch: Batch, nonsaturating: bool = False) -> Tensor:
    if not len(batch.source_x):
        return _zero()
    fake = transfer(g_st, batch.source_x, batch.source_y, batch.k)
    return _fake(_d(d, fake, marginal_code(len(fake), batch.k)), nonsaturating).mean()


def pseudo_labels(c, x: np.ndarray) -> np.ndarray:
    """Hard argmax of the classifier, ties to the lowest class index."""
    probs = c(x).data
    return np.argmax(probs, axis=1)


def pseudo_loss(d, c, batch: Batch) -> Tensor:
    if not len(batch.target_unlabeled):
        raise ValueError("pseudo loss needs unlabeled target data")
    y = pseudo_labels(c, batch.target_unlabeled)
    return _log(_d(d, batch.target_unlabeled, onehot(y, batch.k))).mean()


def entropy_loss(c, batch: Batch) -> Tensor:
    if not len(batch.target_unlabeled):
        raise ValueError("entropy loss needs unlabeled target data")
    p = c(batch.target_unlabeled)
    return -(p * p.clip(LOG_CLAMP, 1.0).log()).sum(axis=1).mean()


def reverse_gan_loss(d_s, g_ts, batch: Batch) -> Tensor:
    """Unconditional source-side game: ``log D_S(x_s) + log(1 - D_S(G_{T->S}(x_t)))``.

    Conditional reverse generators only see the labeled target pool.
    """
    out = _zero()
    if len(batch.source_x):
        out = out + _log(d_s(batch.source_x)).mean()
    return out + reverse_generator_term(d_s, g_ts, batch)


def reverse_generator_term(d_s, g_ts, batch: Batch, nonsaturating: bool = False) -> Tensor:
    k = batch.k
    if is_conditional(g_ts, k):
        pool, y = batch.target_x, batch.target_y
    else:
        pool = np.concatenate([batch.target_x, batch.target_unlabeled])
        y = np.zeros(len(pool), dtype=np.int64)
    if not len(pool):
        return _zero()
    return _fake(d_s(transfer(g_ts, pool, y, k)), nonsaturating).mean()


# composition ---------------------------------------------------------------


def total_loss(
    nets: Mapping,
    batch: Batch,
    weights: LossWeights,
    variant: str,
    pseudo_batch: Batch | None = None,
    use_generated: bool = True,
    players: tuple[str, ...] = PLAYERS,
    generator_loss: str = "minimax",
) -> dict[str, Tensor]:
    """Per-player objectives of the game.

    ``for_d`` is maximised by the discriminators (D_T, D_S). ``for_g`` and
    ``for_c`` are minimised by the generators and the classifier.  The
    adversarial parts of ``for_g`` and ``for_c`` are exactly the terms of
    ``for_d`` that depend on that player, so the adversarial part is zero-sum:
    the generators and the classifier minimise ``log(1 - D(.))`` on their own
    pairs while D maximises it.

    ``nets`` holds ``d_t, d_s, g_st, g_ts, c``; ``pseudo_batch`` supplies the
    unlabeled pool for the pseudo term (defaults to ``batch``).  Only the
    objectives named in ``players`` are built.

    ``generator_loss="nonsaturating"`` swaps every ``log(1 - D(fake))`` that a
    generator or the classifier minimises for ``-log D(fake)``; ``for_d`` is
    unchanged.
    """
    if generator_loss not in GENERATOR_LOSSES:
        raise ValueError(f"generator_loss must be one of {GENERATOR_LOSSES}, got {generator_loss!r}")
    ns = generator_loss == "nonsaturating"
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    w = weights
    d, d_s, g_st, g_ts, c = (nets[n] for n in ("d_t", "d_s", "g_st", "g_ts", "c"))
    pb = batch if pseudo_batch is None else pseudo_batch
    relaxed = variant == "relaxed"
    alpha = w.alpha if relaxed else 1.0
    need_d, need_g, need_c = (p in players for p in PLAYERS)
    k = batch.k

    for_d = _zero()
    for_g = _zero()
    for_c = _zero()

    if w.lambda_gan:
        if not relaxed:
            if not len(batch.source_x):
                raise ValueError("the preliminary GAN loss needs source data")
            if not is_conditional(g_st, k):
                raise ValueError("the preliminary GAN loss needs a conditional generator")
        cls_on = relaxed and alpha < 1.0
        if need_d:
            out = real_term(d, batch) + alpha * generator_term(d, g_st, batch)
            if cls_on:
                out = out + (1.0 - alpha) * classifier_term(d, c, batch)
            for_d = for_d + w.lambda_gan * out
        if need_g:
            for_g = for_g + (w.lambda_gan * alpha) * generator_term(d, g_st, batch, ns)
        if need_c and cls_on:
            for_c = for_c + (w.lambda_gan * (1.0 - alpha)) * classifier_term(d, c, batch, ns)
    if w.lambda_gan_reverse:
        if need_d:
            src = _log(d_s(batch.source_x)).mean() if len(batch.source_x) else _zero()
            for_d = for_d + w.lambda_gan_reverse * (src + reverse_generator_term(d_s, g_ts, batch))
        if need_g:
            for_g = for_g + w.lambda_gan_reverse * reverse_generator_term(d_s, g_ts, batch, ns)
    if w.lambda_marg and (need_d or need_g):
        if label_width(d) != k + 1:
            raise ValueError(f"marginal loss needs a discriminator label width of {k + 1}, got {label_width(d)}")
        if need_d:
            for_d = for_d + w.lambda_marg * marginal_loss(d, g_st, batch)
        if need_g:
            for_g = for_g + w.lambda_marg * marginal_generator_term(d, g_st, batch, ns)
    if w.lambda_pseudo and need_d:
        for_d = for_d + w.lambda_pseudo * pseudo_loss(d, c, pb)
    if w.lambda_cycle and need_g:
        for_g = for_g + w.lambda_cycle * cycle_loss(g_st, g_ts, batch, variant)
    if w.lambda_c and need_c:
        for_c = for_c + w.lambda_c * classifier_loss(c, g_st, batch, use_generated)
    if w.lambda_ent and need_c:
        for_c = for_c + w.lambda_ent * entropy_loss(c, batch)
    out = {"for_d": for_d, "for_g": for_g, "for_c": for_c}
    return {p: out[p] for p in players}
