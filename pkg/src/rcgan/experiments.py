"""Named training setups compared in the ablation and domination studies.

Each preset derives from one base TrainConfig so that a comparison only
changes what the preset is about.
"""

from __future__ import annotations

from dataclasses import replace

from .synthdata import SsdaDataset, random_labels, shifted_labels
from .trainer import TrainConfig, TrainResult, evaluate_accuracy, train

PRESETS = ("relaxed", "relaxed_no_marg_pseudo", "preliminary", "ent")
PROBES = ("correct", "random", "shifted")


def preset_config(name: str, base: TrainConfig | None = None) -> TrainConfig:
    """``base`` adjusted to one of the compared setups.

    preliminary: conditional generator, no marginal or pseudo-label terms.
    ent: target-only classifier with the entropy term; no adversarial,
    cycle, marginal or pseudo terms and no transferred source pairs.
    """
    base = base or TrainConfig()
    w = base.weights
    if name == "relaxed":
        return replace(base, variant="relaxed")
    if name == "relaxed_no_marg_pseudo":
        return replace(base, variant="relaxed", weights=replace(w, lambda_marg=0.0, lambda_pseudo=0.0))
    if name == "preliminary":
        return replace(base, variant="preliminary", weights=replace(w, lambda_marg=0.0, lambda_pseudo=0.0))
    if name == "ent":
        zeroed = replace(w, lambda_gan=0.0, lambda_cycle=0.0, lambda_marg=0.0, lambda_pseudo=0.0,
                         lambda_gan_reverse=0.0)
        return replace(base, variant="relaxed", weights=zeroed, classifier_on_generated=False)
    raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}")


def probe_dataset(ds: SsdaDataset, probe: str, seed: int) -> SsdaDataset:
    """The dataset with source labels kept, randomised or shifted by one class."""
    if probe == "correct":
        return ds
    if probe == "random":
        return ds.relabeled(random_labels(len(ds.source_y), ds.k, seed))
    if probe == "shifted":
        return ds.relabeled(shifted_labels(ds.source_y, ds.k))
    raise ValueError(f"unknown probe {probe!r}; expected one of {PROBES}")


def target_accuracy(result: TrainResult, ds: SsdaDataset) -> float:
    return evaluate_accuracy(result.final_nets["c"], ds.target_unlabeled_x, ds.target_unlabeled_y)


def run_preset(name: str, ds: SsdaDataset, base: TrainConfig | None = None) -> tuple[TrainResult, float]:
    result = train(ds, preset_config(name, base))
    return result, target_accuracy(result, ds)

