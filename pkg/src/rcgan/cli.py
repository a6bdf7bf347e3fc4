"""``rcgan`` command line.

Exit codes: 0 success, 1 a check failed (or training diverged), 2 bad
config or unreadable input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import discrete as dc
from . import experiments as ex
from .config import ConfigError, ExperimentConfig
from .synthdata import SsdaDataset, make_from_config
from .trainer import TrainingError, TrainResult, evaluate_accuracy, train

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2
KL_WEIGHTS = (0.1, 1.0, 10.0)
IDENTITY_TOL = 1e-10
INVARIANCE_TOL = 1e-12


class _Quiet:
    enabled = False


def log(msg: str) -> None:
    if not _Quiet.enabled:
        print(msg, file=sys.stderr)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text)
    return p


def _dump(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _echo_config(cfg: ExperimentConfig, out: Path) -> None:
    _write(out, "config.json", cfg.to_json())


# verify-equilibrium ---------------------------------------------------------


def _coincide(*ps: dc.DiscreteJoint) -> bool:
    return all(np.max(np.abs(p.probs - ps[0].probs)) <= 1e-15 for p in ps[1:])


def verify_equilibrium(n_random: int, support_x: int, k: int, seed: int,
                       extra: tuple | None = None) -> dict:
    """Run the discrete-game checks on seeded triples; returns the report."""
    rng = np.random.default_rng(seed)
    spec = dc.MixtureSpec(0.5)
    dev_identity = dev_lc = dev_invariance = 0.0
    grid_violations = eq_violations = corollary_violations = 0
    triples = [dc.random_triple(support_x, k, rng) for _ in range(n_random)]
    if extra is not None:
        triples.append(extra)
    for p_t, p_g, p_c in triples:
        p_m = dc.mix(p_g, p_c, spec)
        d_star = dc.optimal_discriminator(p_t, p_m)
        v = dc.gan_value(p_t, p_m, d_star)
        dev_identity = max(dev_identity, abs(v - (-dc.LOG4 + 2.0 * dc.jsd(p_t, p_m))))
        if dc.grid_best_value(p_t, p_m) > v:
            grid_violations += 1
        cond = dc.DiscreteJoint.from_marginal_and_conditional(p_t.marginal_x(), _safe_conditional(p_c))
        total, kl_part, ent = dc.classifier_loss_exact(p_t, cond)
        if math.isfinite(total):
            dev_lc = max(dev_lc, abs(total - (kl_part + ent)))
        # equilibrium holds on the coincident triple and fails off it
        if not dc.equilibrium_check(p_t, p_t, p_t, spec).is_equilibrium:
            eq_violations += 1
        if dc.equilibrium_check(p_t, p_g, p_c, spec).is_equilibrium != _coincide(p_t, p_g, p_c):
            eq_violations += 1
        base = dc.augmented_objective(p_t, p_t, p_t, spec, 0.0)
        for w in KL_WEIGHTS:
            dev_invariance = max(dev_invariance, abs(dc.augmented_objective(p_t, p_t, p_t, spec, w) - base))
            if not dc.corollary_check(p_t, p_t, p_t, spec, w, n_perturb=10, seed=int(rng.integers(2**31))):
                corollary_violations += 1
    checks = {
        "gan_value_identity": dev_identity < IDENTITY_TOL,
        "optimal_beats_grid": grid_violations == 0,
        "classifier_decomposition": dev_lc < IDENTITY_TOL,
        "equilibrium_iff_coincident": eq_violations == 0,
        "kl_invariance": dev_invariance < INVARIANCE_TOL,
        "corollary_perturbations": corollary_violations == 0,
    }
    return {
        "n_triples": len(triples),
        "support_x": support_x,
        "k": k,
        "seed": seed,
        "max_abs_identity_deviation": dev_identity,
        "max_abs_classifier_decomposition_deviation": dev_lc,
        "max_abs_kl_invariance_deviation": dev_invariance,
        "grid_violations": grid_violations,
        "equilibrium_violations": eq_violations,
        "corollary_violations": corollary_violations,
        "checks": checks,
        "passed": all(checks.values()),
    }


def _safe_conditional(p: dc.DiscreteJoint) -> np.ndarray:
    cond = p.conditional_y_given_x()
    bad = np.isnan(cond).any(axis=1)
    cond[bad] = 1.0 / p.support_y
    return cond


def _load_triple(path: str) -> tuple:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read triple {path}: {exc}") from exc
    try:
        return tuple(dc.DiscreteJoint.from_dict(d[name]) for name in ("p_t", "p_g", "p_c"))
    except KeyError as exc:
        raise ConfigError(f"triple file needs p_t, p_g and p_c; missing {exc}") from exc


def cmd_verify_equilibrium(args, cfg: ExperimentConfig) -> int:
    eq = cfg.equilibrium_config()
    n = args.n_random if args.n_random is not None else eq.n_random
    sx = args.support_x if args.support_x is not None else eq.support_x
    k = args.k if args.k is not None else eq.k
    if n < 1 or sx < 1 or k < 1:
        raise ConfigError("n-random, support-x and k must be >= 1")
    extra = _load_triple(args.triple) if args.triple else None
    report = verify_equilibrium(n, sx, k, cfg.seed, extra)
    out = Path(cfg.out)
    _echo_config(cfg, out)
    _write(out, "equilibrium.json", _dump(report))
    for name, ok in report["checks"].items():
        log(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if report["passed"] else EXIT_CHECK


# data and training --------------------------------------------------------------


def _dataset(cfg: ExperimentConfig) -> SsdaDataset:
    return make_from_config(cfg.dataset_config())


def cmd_make_data(args, cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    _echo_config(cfg, out)
    ds = _dataset(cfg)
    ds.to_csv(out / "data.csv")
    log(f"wrote {out / 'data.csv'}")
    return EXIT_OK


def _train(ds, tcfg, label: str):
    log(f"training {label}: {tcfg.variant}, {tcfg.steps} steps, seed {tcfg.seed}")
    return train(ds, tcfg)


def cmd_train(args, cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    _echo_config(cfg, out)
    ds = _dataset(cfg)
    res = _train(ds, cfg.train_config(), "model")
    res.save(out / "result")
    acc = res.loss_curves["target_acc"][-1]
    _write(out, "summary.json", _dump({"final_target_accuracy": acc, "steps": res.config.steps}))
    log(f"final target accuracy {acc:.4f}")
    return EXIT_OK


def _load_result(path: str | None, cfg: ExperimentConfig) -> TrainResult:
    p = Path(path) if path else Path(cfg.out) / "result"
    try:
        return TrainResult.load(p)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load training result from {p}: {exc}") from exc


def cmd_eval(args, cfg: ExperimentConfig) -> int:
    res = _load_result(args.result, cfg)
    ds = _dataset(cfg)
    c = res.final_nets["c"]
    report = {
        "target_unlabeled_accuracy": evaluate_accuracy(c, ds.target_unlabeled_x, ds.target_unlabeled_y),
        "target_labeled_accuracy": evaluate_accuracy(c, ds.target_labeled_x, ds.target_labeled_y),
    }
    out = Path(cfg.out)
    _echo_config(cfg, out)
    _write(out, "eval.json", _dump(report))
    log(f"target accuracy {report['target_unlabeled_accuracy']:.4f}")
    return EXIT_OK


def cmd_path_angle(args, cfg: ExperimentConfig) -> int:
    res = _load_result(args.result, cfg)
    ds = _dataset(cfg)
    dcfg = cfg.diagnostics_config()
    trace = dg.path_angle(res, ds, grid=dcfg.grid(), eval_batch=dcfg.eval_batch, seed=cfg.seed)
    out = Path(cfg.out)
    _echo_config(cfg, out)
    _write(out, "path_angle.csv", trace.to_csv())
    _write(out, "path_angle.json", _dump(trace.to_dict()))
    cos_svg, norm_svg = dg.path_angle_charts(trace, res.config.variant if res.config else "path angle")
    _write(out, "path_angle_cosine.svg", cos_svg)
    _write(out, "path_angle_norm.svg", norm_svg)
    log(f"path angle over {len(trace.ts)} points written to {out}")
    return EXIT_OK


def cmd_transfer_quality(args, cfg: ExperimentConfig) -> int:
    res = _load_result(args.result, cfg)
    ds = _dataset(cfg)
    dcfg = cfg.diagnostics_config()
    oracle = dg.oracle_classifier(ds, seed=cfg.seed, steps=dcfg.oracle_steps)
    q = dg.transfer_quality(res.final_nets["g_st"], ds, oracle, n=dcfg.n_transfer, seed=cfg.seed)
    out = Path(cfg.out)
    _echo_config(cfg, out)
    _write(out, "transfer_quality.json", _dump(q.to_dict()))
    log(f"map error {q.mean_map_error:.4f}, label consistency {q.label_consistency:.4f}")
    return EXIT_OK


def domination_study(cfg: ExperimentConfig) -> dict:
    """Preliminary vs relaxed on one dataset and seed, plus the two wrong-label probes."""
    ds = _dataset(cfg)
    dcfg = cfg.diagnostics_config()
    base = cfg.train_config()
    rel = _train(ds, ex.preset_config("relaxed", base), "relaxed")
    pre_cfg = ex.preset_config("preliminary", base)
    runs = {probe: _train(ex.probe_dataset(ds, probe, cfg.seed), pre_cfg, f"preliminary, {probe} labels")
            for probe in ex.PROBES}

    pre_rep = dg.domination_score(runs["correct"].final_nets["g_st"], True, ds, dcfg.n_probe, cfg.seed)
    rel_rep = dg.ratio_equivalent(rel.final_nets["g_st"], ds, dcfg.n_probe, cfg.seed)
    # every probe is scored on the true target labels
    probes = {probe: ex.target_accuracy(r, ds) for probe, r in runs.items()}
    return {
        "seed": cfg.seed,
        "steps": base.steps,
        "preliminary": pre_rep.to_dict(),
        "relaxed_equivalent": rel_rep.to_dict(),
        "ratio_multiple": pre_rep.domination_ratio / max(rel_rep.domination_ratio, dg.RATIO_FLOOR),
        "relaxed_accuracy": ex.target_accuracy(rel, ds),
        "preliminary_probe_accuracy": probes,
        "probe_spread": max(probes.values()) - min(probes.values()),
    }


def cmd_domination_study(args, cfg: ExperimentConfig) -> int:
    report = domination_study(cfg)
    out = Path(cfg.out)
    _echo_config(cfg, out)
    _write(out, "domination.json", _dump(report))
    log(f"ratio preliminary {report['preliminary']['domination_ratio']:.3f}, "
        f"relaxed equivalent {report['relaxed_equivalent']['domination_ratio']:.3f}, "
        f"probe spread {report['probe_spread']:.4f}")
    return EXIT_OK


# entry point -------------------------------------------------------------------


COMMANDS = {
    "verify-equilibrium": cmd_verify_equilibrium,
    "make-data": cmd_make_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "path-angle": cmd_path_angle,
    "domination-study": cmd_domination_study,
    "transfer-quality": cmd_transfer_quality,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="no progress output")
    common.add_argument("--steps", type=int, help="overrides train.steps")

    p = argparse.ArgumentParser(prog="rcgan", description="Relaxed conditional GAN toy experiments",
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify-equilibrium", parents=[common], help="check the discrete-game identities")
    v.add_argument("--n-random", type=int)
    v.add_argument("--support-x", type=int)
    v.add_argument("--k", type=int)
    v.add_argument("--triple", help="JSON file with p_t, p_g, p_c tables to check as well")
    sub.add_parser("make-data", parents=[common], help="write the synthetic dataset as CSV")
    t = sub.add_parser("train", parents=[common], help="train one model")
    t.add_argument("--variant", choices=("relaxed", "preliminary"))
    for name, helptext in (("eval", "classifier accuracy of a trained result"),
                           ("path-angle", "path-angle trace of a trained result"),
                           ("transfer-quality", "generator map error and label consistency")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--result", help="result directory (default OUT/result)")
    sub.add_parser("domination-study", parents=[common], help="preliminary vs relaxed label domination")
    return p


def _effective_config(args) -> ExperimentConfig:
    d = {}
    if args.config:
        d = json.loads(ExperimentConfig.load(args.config).to_json())
    if args.seed is not None:
        d["seed"] = args.seed
    if args.out is not None:
        d["out"] = args.out
    if args.steps is not None:
        d.setdefault("train", {})["steps"] = args.steps
    if getattr(args, "variant", None):
        d.setdefault("train", {})["variant"] = args.variant
    return ExperimentConfig.from_dict(d)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    _Quiet.enabled = bool(args.quiet)
    try:
        cfg = _effective_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except ValueError as exc:
        # invalid input tables and the like
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
