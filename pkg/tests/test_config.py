import pytest

from lrfuse.config import TrainConfig, load_config, parse_overrides, save_config


def test_defaults_match_training_setup():
    cfg = TrainConfig(synthetic_size=10)
    assert cfg.hr_size == 128 and cfg.lr_size == 8
    assert cfg.lr_g == 1e-3 and cfg.lr_d == 4e-3
    assert cfg.batch_size == 8
    assert cfg.lambda_cyc == 1.0
    assert cfg.r1_gamma == 0.5
    assert cfg.r == pytest.approx(2.0 / 255.0)
    assert cfg.epsilon == 0.0
    assert cfg.p == 1.0
    assert (cfg.beta1, cfg.beta2) == (0.0, 0.99)


def test_batch_size_floor():
    with pytest.raises(ValueError, match="batch_size"):
        TrainConfig(synthetic_size=10, batch_size=1)


def test_ttur_ordering_enforced():
    with pytest.raises(ValueError, match="lr_d"):
        TrainConfig(synthetic_size=10, lr_g=1e-3, lr_d=1e-4)


def test_lr_size_must_divide():
    with pytest.raises(ValueError, match="lr_size"):
        TrainConfig(synthetic_size=10, hr_size=128, lr_size=7)


def test_requires_a_dataset_source():
    with pytest.raises(ValueError, match="data_dir or synthetic_size"):
        TrainConfig()


def test_config_file_round_trip(tmp_path):
    cfg = TrainConfig(synthetic_size=20, hr_size=64, lr_size=4, num_scales=4, seed=5)
    path = tmp_path / "run.cfg"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_config_file_comments_and_spacing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# toy run\nhr_size = 64\nlr_size=4\nsynthetic_size = 10  # procedural\nseed = 3\n\n"
    )
    cfg = load_config(path)
    assert cfg.hr_size == 64 and cfg.lr_size == 4 and cfg.seed == 3


def test_unknown_field_rejected(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("hr_sizes = 64\n")
    with pytest.raises(ValueError, match="hr_sizes"):
        load_config(path)


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("hr_size = 64\nlr_size = 4\nsynthetic_size = 10\nseed = 3\n")
    cfg = load_config(path, parse_overrides(["seed=9", "batch_size=4"]))
    assert cfg.seed == 9 and cfg.batch_size == 4


def test_override_requires_equals():
    with pytest.raises(ValueError, match="key=value"):
        parse_overrides(["seed:9"])


def test_bool_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("synthetic_size = 10\ngenerator_adv = off\n")
    assert load_config(path).generator_adv is False


def test_config_hash_stable_and_sensitive():
    a = TrainConfig(synthetic_size=10)
    b = TrainConfig(synthetic_size=10)
    c = TrainConfig(synthetic_size=11)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
