"""Exact finite-support version of the three-player game.

Every distribution here is a joint table over ``support_x`` atoms times
``support_y`` classes, so the optimal discriminator, the value function and
all divergences can be evaluated in closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NORM_TOL = 1e-12
D_CLAMP = 1e-12
DEFAULT_TOL = 1e-9
LOG4 = math.log(4.0)


@dataclass(frozen=True)
class DiscreteJoint:
    """Probability table ``probs[x, y]`` over a finite product space."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"probs must be a non-empty 2D table, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            i, j = np.argwhere(~np.isfinite(p))[0]
            raise ValueError(f"non-finite probability at entry ({i}, {j}): {p[i, j]}")
        if np.any(p < 0):
            i, j = np.argwhere(p < 0)[0]
            raise ValueError(f"negative probability at entry ({i}, {j}): {p[i, j]}")
        total = p.sum()
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1 within {NORM_TOL}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def support_x(self) -> int:
        return self.probs.shape[0]

    @property
    def support_y(self) -> int:
        return self.probs.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def marginal_x(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def conditional_y_given_x(self) -> np.ndarray:
        """Rows of ``p(y|x)``; rows with zero x-mass are NaN (undefined)."""
        px = self.marginal_x()
        out = np.full_like(self.probs, np.nan)
        ok = px > 0
        out[ok] = self.probs[ok] / px[ok, None]
        return out

    @classmethod
    def from_unnormalized(cls, weights) -> "DiscreteJoint":
        w = np.asarray(weights, dtype=np.float64)
        p = w / w.sum()
        # renormalise once more so the sum is 1 to the last ulp we can get
        p = p / p.sum()
        return cls(p)

    @classmethod
    def from_marginal_and_conditional(cls, px, cond) -> "DiscreteJoint":
        px = np.asarray(px, dtype=np.float64)
        cond = np.asarray(cond, dtype=np.float64)
        return cls.from_unnormalized(px[:, None] * cond)

    @classmethod
    def point_mass(cls, support_x: int, support_y: int, x: int, y: int) -> "DiscreteJoint":
        p = np.zeros((support_x, support_y))
        p[x, y] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, support_x: int, support_y: int) -> "DiscreteJoint":
        return cls(np.full((support_x, support_y), 1.0 / (support_x * support_y)))

    @classmethod
    def random(cls, support_x: int, support_y: int, rng: np.random.Generator) -> "DiscreteJoint":
        return cls.from_unnormalized(rng.dirichlet(np.ones(support_x * support_y)).reshape(support_x, support_y))

    def to_dict(self) -> dict:
        return {
            "support_x": self.support_x,
            "support_y": self.support_y,
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteJoint":
        probs = np.asarray(d["probs"], dtype=np.float64)
        if probs.shape != (d["support_x"], d["support_y"]):
            raise ValueError(
                f"probs has shape {probs.shape}, header says ({d['support_x']}, {d['support_y']})"
            )
        return cls(probs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DiscreteJoint":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DiscriminatorTable:
    values: np.ndarray

    def __post_init__(self):
        v = np.clip(np.array(self.values, dtype=np.float64), D_CLAMP, 1.0 - D_CLAMP)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def constant(cls, shape: tuple[int, int], value: float) -> "DiscriminatorTable":
        return cls(np.full(shape, value))


@dataclass(frozen=True)
class MixtureSpec:
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def _check_shapes(*tables) -> None:
    shapes = [t.shape for t in tables]
    if len(set(shapes)) != 1:
        raise ValueError("dimension mismatch: " + " vs ".join(str(s) for s in shapes))


def mix(p_g: DiscreteJoint, p_c: DiscreteJoint, spec: MixtureSpec) -> DiscreteJoint:
    _check_shapes(p_g, p_c)
    a = spec.alpha
    if a == 1.0:
        return p_g
    if a == 0.0:
        return p_c
    return DiscreteJoint.from_unnormalized(a * p_g.probs + (1.0 - a) * p_c.probs)


def optimal_discriminator(p_t: DiscreteJoint, p_m: DiscreteJoint) -> DiscriminatorTable:
    _check_shapes(p_t, p_m)
    num = p_t.probs
    den = p_t.probs + p_m.probs
    d = np.full(num.shape, 0.5)
    ok = den > 0
    d[ok] = num[ok] / den[ok]
    return DiscriminatorTable(d)


def gan_value(p_t: DiscreteJoint, p_m: DiscreteJoint, d: DiscriminatorTable) -> float:
    """``sum p_t log d + p_m log(1 - d)`` in nats."""
    _check_shapes(p_t, p_m, d)
    v = d.values
    return float(np.sum(p_t.probs * np.log(v)) + np.sum(p_m.probs * np.log1p(-v)))


def _xlogy_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    pos = p > 0
    with np.errstate(divide="ignore", over="ignore"):
        out[pos] = p[pos] * np.log(p[pos] / q[pos])
    return out


def kl(p: DiscreteJoint, q: DiscreteJoint) -> float:
    """KL(p || q) in nats; ``math.inf`` when p has mass outside the support of q."""
    _check_shapes(p, q)
    if np.any((p.probs > 0) & (q.probs == 0)):
        return math.inf
    return float(max(np.sum(_xlogy_ratio(p.probs, q.probs)), 0.0))


def jsd(p: DiscreteJoint, q: DiscreteJoint) -> float:
    _check_shapes(p, q)
    m = 0.5 * (p.probs + q.probs)
    val = 0.5 * np.sum(_xlogy_ratio(p.probs, m)) + 0.5 * np.sum(_xlogy_ratio(q.probs, m))
    return float(min(max(val, 0.0), math.log(2.0)))


def classifier_loss_exact(p_t: DiscreteJoint, p_c_conditional: DiscreteJoint) -> tuple[float, float, float]:
    """Cross-entropy of a classifier against ``p_t`` and its KL + entropy split.

    ``p_c_conditional`` is the classifier joint ``p_t(x) p_c(y|x)``; it must
    carry the same x-marginal as ``p_t``.

    Returns ``(total, kl_part, entropy_part)``.
    """
    _check_shapes(p_t, p_c_conditional)
    px = p_t.marginal_x()
    gap = np.max(np.abs(px - p_c_conditional.marginal_x()))
    if gap > 1e-9:
        raise ValueError(f"x-marginals differ by {gap:.3g} (> 1e-9)")
    pt = p_t.probs
    pc = p_c_conditional.probs
    live = px > 0
    cond_c = np.zeros_like(pc)
    cond_c[live] = pc[live] / px[live, None]
    cond_t = np.zeros_like(pt)
    cond_t[live] = pt[live] / px[live, None]

    pos = pt > 0
    if np.any(pos & (cond_c == 0)):
        total = math.inf
    else:
        total = float(-np.sum(pt[pos] * np.log(cond_c[pos])))
    entropy_part = float(-np.sum(pt[pos] * np.log(cond_t[pos])))
    return total, kl(p_t, p_c_conditional), entropy_part


@dataclass
class EquilibriumReport:
    is_equilibrium: bool
    jsd_t_m: float
    kl_t_c: float
    jsd_t_g: float = field(default=math.nan)
    # only set for equilibria with 0 < alpha < 1
    jsd_t_g_bound: float = field(default=math.nan)


def equilibrium_check(
    p_t: DiscreteJoint,
    p_g: DiscreteJoint,
    p_c: DiscreteJoint,
    spec: MixtureSpec,
    tol: float = DEFAULT_TOL,
) -> EquilibriumReport:
    _check_shapes(p_t, p_g, p_c)
    p_m = mix(p_g, p_c, spec)
    jtm = jsd(p_t, p_m)
    ktc = kl(p_t, p_c)
    ok = jtm <= tol and ktc <= tol
    report = EquilibriumReport(is_equilibrium=ok, jsd_t_m=jtm, kl_t_c=ktc, jsd_t_g=jsd(p_t, p_g))
    if ok and 0.0 < spec.alpha < 1.0:
        # p_g = (p_m - (1-a) p_c) / a, so TV(p_t, p_g) is bounded by the mixture
        # and classifier gaps; TV <= sqrt(2 JSD), TV <= sqrt(KL / 2), JSD <= TV log 2.
        tv = (math.sqrt(2.0 * jtm) + (1.0 - spec.alpha) * math.sqrt(ktc / 2.0)) / spec.alpha
        report.jsd_t_g_bound = min(tv, 1.0) * math.log(2.0) + 1e-15
    return report


def _augmented_objective(
    p_t: DiscreteJoint, p_g: DiscreteJoint, p_c: DiscreteJoint, spec: MixtureSpec, weight: float
) -> float:
    p_m = mix(p_g, p_c, spec)
    value = gan_value(p_t, p_m, optimal_discriminator(p_t, p_m)) + kl(p_t, p_c)
    if weight:
        pairs = [(p_t, p_g), (p_g, p_t), (p_t, p_c), (p_c, p_t), (p_g, p_c), (p_c, p_g)]
        value += weight * sum(kl(a, b) for a, b in pairs)
    return value


def augmented_objective(
    p_t: DiscreteJoint,
    p_g: DiscreteJoint,
    p_c: DiscreteJoint,
    spec: MixtureSpec,
    weight: float,
) -> float:
    """Value at the optimal discriminator, plus the classifier KL, plus
    ``weight`` times the sum of pairwise KLs (both directions) among the three
    joints."""
    _check_shapes(p_t, p_g, p_c)
    if weight < 0:
        raise ValueError(f"regulariser weight must be non-negative, got {weight}")
    return _augmented_objective(p_t, p_g, p_c, spec, weight)


def perturb(p: DiscreteJoint, tv: float, rng: np.random.Generator) -> DiscreteJoint:
    """Move ``p`` by exactly total-variation ``tv`` towards a random direction.

    Mass is shifted between entries so the result stays a valid joint.
    """
    target = rng.dirichlet(np.ones(p.probs.size)).reshape(p.shape)
    full_tv = 0.5 * np.abs(target - p.probs).sum()
    if full_tv <= NORM_TOL:
        # rounding noise only (e.g. a single-atom table): nothing to move
        return p
    lam = min(tv / full_tv, 1.0)
    return DiscreteJoint.from_unnormalized((1 - lam) * p.probs + lam * target)


def corollary_check(
    p_t: DiscreteJoint,
    p_g: DiscreteJoint,
    p_c: DiscreteJoint,
    spec: MixtureSpec,
    extra_divergence_weight: float,
    n_perturb: int = 100,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
) -> bool:
    """True iff the augmented objective is minimised at ``p_t = p_g = p_c``.

    At the given triple the added divergences must vanish (so the augmented and
    plain objectives agree), the triple must be an equilibrium, and every one of
    ``n_perturb`` seeded perturbations of ``(p_g, p_c)`` must score strictly
    higher (perturbations that cannot move a one-atom table are skipped).
    """
    if extra_divergence_weight < 0:
        raise ValueError(f"regulariser weight must be non-negative, got {extra_divergence_weight}")
    report = equilibrium_check(p_t, p_g, p_c, spec, tol)
    if extra_divergence_weight == 0:
        return report.is_equilibrium
    if not report.is_equilibrium:
        return False
    base = augmented_objective(p_t, p_g, p_c, spec, 0.0)
    here = augmented_objective(p_t, p_g, p_c, spec, extra_divergence_weight)
    if abs(here - base) > 1e-12:
        return False
    rng = np.random.default_rng(seed)
    for _ in range(n_perturb):
        g2 = perturb(p_g, rng.uniform(0.01, 0.2), rng)
        c2 = perturb(p_c, rng.uniform(0.01, 0.2), rng)
        if g2 is p_g and c2 is p_c:
            # a single-atom table has nowhere to move
            continue
        if not augmented_objective(p_t, g2, c2, spec, extra_divergence_weight) > here:
            return False
    return True


def random_triple(
    support_x: int, support_y: int, rng: np.random.Generator
) -> tuple[DiscreteJoint, DiscreteJoint, DiscreteJoint]:
    """Random ``(p_t, p_g, p_c)`` with ``p_c`` sharing the x-marginal of ``p_t``."""
    p_t = DiscreteJoint.random(support_x, support_y, rng)
    p_g = DiscreteJoint.random(support_x, support_y, rng)
    cond = rng.dirichlet(np.ones(support_y), size=support_x)
    p_c = DiscreteJoint.from_marginal_and_conditional(p_t.marginal_x(), cond)
    return p_t, p_g, p_c


def grid_best_value(p_t: DiscreteJoint, p_m: DiscreteJoint, grid: Sequence[float] | None = None) -> float:
    """Best value over discriminators whose entries all lie on ``grid``.

    The objective separates per entry, so the maximum over the full product
    grid is the sum of per-entry maxima.
    """
    _check_shapes(p_t, p_m)
    g = np.linspace(0.025, 0.975, 21) if grid is None else np.asarray(grid, dtype=np.float64)
    per = p_t.probs[..., None] * np.log(g) + p_m.probs[..., None] * np.log1p(-g)
    return float(per.max(axis=-1).sum())
