import json

import pytest

from rcgan.config import ConfigError, DiagnosticsConfig, EquilibriumConfig, ExperimentConfig
from rcgan.losses import LossWeights
from rcgan.trainer import TrainConfig


def test_defaults_match_component_defaults():
    cfg = ExperimentConfig()
    assert cfg.loss_weights() == LossWeights()
    assert cfg.train_config() == TrainConfig()
    assert cfg.dataset_config().k == 4 and cfg.dataset_config().seed == 0


def test_seed_reaches_data_and_training():
    cfg = ExperimentConfig(seed=9)
    assert cfg.dataset_config().seed == 9 and cfg.train_config().seed == 9


def test_effective_round_trip():
    cfg = ExperimentConfig.from_dict({"seed": 3, "train": {"steps": 50}, "weights": {"lambda_c": 2.0},
                                      "dataset": {"shift": [1, 2]}})
    back = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    assert back.to_json() == cfg.to_json()
    assert back.train_config().steps == 50 and back.loss_weights().lambda_c == 2.0
    assert back.dataset_config().shift == (1, 2)


@pytest.mark.parametrize("doc,needle", [
    ({"sedd": 1}, "sedd"),
    ({"train": {"stepz": 1}}, "stepz"),
    ({"weights": {"lambda_x": 1}}, "lambda_x"),
    ({"train": {"seed": 4}}, "seed"),
    ({"train": {"weights": {}}}, "weights"),
    ({"dataset": {"seed": 4}}, "seed"),
])
def test_unknown_keys_named(doc, needle):
    with pytest.raises(ConfigError, match=needle):
        ExperimentConfig.from_dict(doc)


@pytest.mark.parametrize("doc", [
    [], {"seed": -1}, {"seed": 1.5}, {"train": []}, {"train": {"steps": 0}}, {"weights": {"alpha": 2}},
    {"diagnostics": {"n_probe": 1}}, {"equilibrium": {"n_random": 0}}, {"dataset": {"k": 1}},
])
def test_invalid_values(doc):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        ExperimentConfig.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="not valid JSON"):
        ExperimentConfig.load(tmp_path / "bad.json")


def test_diagnostics_grid():
    g = DiagnosticsConfig().grid()
    assert len(g) == 71 and g[0] == pytest.approx(-0.2) and g[-1] == pytest.approx(1.2)
    with pytest.raises(ConfigError):
        DiagnosticsConfig(grid_min=1.0, grid_max=0.0)


def test_equilibrium_defaults():
    eq = EquilibriumConfig()
    assert (eq.n_random, eq.support_x, eq.k) == (100, 6, 4)
