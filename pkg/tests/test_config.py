import json

import pytest

from vprd.config import Config, ConfigError, apply_overrides, load_config


def test_defaults_are_published_values():
    c = load_config(env={})
    assert (c.hidden, c.dropout, c.lr, c.sched_factor, c.sched_patience, c.es_patience) == (
        294, 0.45, 0.005, 0.05, 238, 1225)
    assert (c.alpha, c.smooth_radius, c.padding, c.seed) == (0.0, 10, 10, 42)
    assert c.fractions == (0.8, 0.1, 0.1)


def test_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 5, "hidden": 10}))
    assert load_config(env={"VPRD_SEED": "7"}).seed == 7
    assert load_config(path, env={"VPRD_SEED": "7"}).seed == 5
    c = load_config(path, {"seed": 9, "hidden": None}, env={"VPRD_SEED": "7"})
    assert c.seed == 9 and c.hidden == 10


def test_unknown_and_bad_values(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"hiden": 10}))
    with pytest.raises(ConfigError, match="hiden"):
        load_config(path, env={})
    with pytest.raises(ConfigError):
        load_config(flags={"hidden": -5}, env={})
    with pytest.raises(ConfigError):
        apply_overrides(Config(), {"hidden": 1.5})
    with pytest.raises(ConfigError):
        apply_overrides(Config(), {"standardize": "yes"})
    with pytest.raises(ConfigError):
        load_config(env={"VPRD_SEED": "abc"})
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(path, env={})
    path.write_text("{bad")
    with pytest.raises(ConfigError):
        load_config(path, env={})


def test_int_accepted_for_float():
    assert apply_overrides(Config(), {"lr": 1}).lr == 1.0


def test_fraction_validation():
    with pytest.raises(ConfigError):
        load_config(flags={"train_fraction": 0.9}, env={})


def test_derived_configs():
    c = load_config(flags={"alpha": 0.01, "loss": "anti_mean", "n_samples": 10}, env={})
    assert c.train_config().alpha == 0.01 and c.train_config().loss == "anti_mean"
    assert c.synth_config().n_samples == 10
    assert c.to_dict()["alpha"] == 0.01
