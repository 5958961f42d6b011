import json

import pytest

from pyrgan.config import ConfigError, RunConfig, load_config, save_config


def test_defaults_filled_in():
    cfg = RunConfig()
    assert cfg.model["noise_dim"] == 100
    assert cfg.model["conv_maps"] == 64
    assert cfg.model["final_g_units"] == 1200
    assert cfg.model["final_d_units"] == 600
    assert cfg.model["dropout"] == 0.5
    assert cfg.train["epochs"] == 1
    assert cfg.train["batch_size"] == 128
    assert cfg.train["g_mode"] == "nonsaturating"
    assert cfg.train["presentation"] == "coin-flip"
    assert cfg.eval["estimator"] == "multiscale"
    assert cfg.eval["n_model_samples"] == 2000
    assert cfg.split == [0.8, 0.1, 0.1]


def test_partial_override_keeps_other_defaults():
    cfg = RunConfig(model={"noise_dim": 8}, train={"epochs": 3})
    assert cfg.model["noise_dim"] == 8
    assert cfg.model["conv_maps"] == 64
    assert cfg.train["epochs"] == 3
    assert cfg.train["batch_size"] == 128


def test_size_schedule_conversion():
    cfg = RunConfig(schedule=[[16, 16], [8, 8]])
    sched = cfg.size_schedule()
    assert sched.levels == ((16, 16), (8, 8))


def test_synthetic_spec_conversion():
    cfg = RunConfig(
        dataset={
            "kind": "synthetic",
            "spec": {"kind": "multiscale-texture", "size": [8, 8], "count": 12, "seed": 7},
        }
    )
    spec = cfg.synthetic_spec()
    assert spec.size == (8, 8)
    assert spec.count == 12
    assert spec.seed == 7


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dataset": {"kind": "nonsense"}},
        {"dataset": {"kind": "cifar"}},  # no path
        {"dataset": {"kind": "synthetic", "spec": {"kind": "not-a-kind"}}},
        {"schedule": [[8, 8], [16, 16]]},  # increasing
        {"train": {"g_mode": "wgan"}},
        {"train": {"presentation": "always"}},
        {"train": {"epochs": 0}},
        {"eval": {"estimator": "exact"}},
        {"split": [0.9, 0.3]},  # sums past 1
        {"split": [0.5, -0.1]},
    ],
)
def test_validation_rejects(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs)


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict({"seed": 1, "learning_rate": 0.1})


def test_dict_round_trip():
    cfg = RunConfig(seed=3, schedule=[[8, 8], [4, 4]], train={"batch_size": 32})
    again = RunConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


def test_save_load_round_trip(tmp_path):
    cfg = RunConfig(seed=11, out_dir="elsewhere", class_conditional=True,
                    dataset={"kind": "synthetic", "spec": {"kind": "gaussian-blobs", "count": 40}})
    path = tmp_path / "run.json"
    save_config(path, cfg)
    loaded = load_config(path)
    assert loaded.to_dict() == cfg.to_dict()


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.json")


def test_load_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)


def test_load_non_object(tmp_path):
    path = tmp_path / "list.json"
    path.write_text(json.dumps([1, 2, 3]))
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(path)


def test_saved_config_is_sorted_json(tmp_path):
    path = tmp_path / "cfg.json"
    save_config(path, RunConfig())
    doc = json.loads(path.read_text())
    assert list(doc) == sorted(doc)
