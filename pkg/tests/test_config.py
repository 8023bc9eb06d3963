"""Config parsing: defaults, strict key checking, range validation."""

import pytest

from fpsim.config import (
    ArchConfig,
    ConfigError,
    DataConfig,
    ExperimentConfig,
    load_config,
    parse_config,
)


def test_empty_config_yields_documented_defaults():
    cfg = parse_config({})
    assert cfg.seed == 0
    assert cfg.clients == 4
    assert cfg.rounds == 20
    assert cfg.local_epochs == 3
    assert cfg.warmup == 9
    assert cfg.batch_size == 64
    assert cfg.learning_rate == pytest.approx(1e-3)
    assert cfg.lrp_epsilon == pytest.approx(1e-9)
    assert cfg.strategies == ("standard", "proposed")
    assert cfg.pruning_rates == (0.2,)
    assert cfg.data == DataConfig()
    assert cfg.arch == ArchConfig()
    assert cfg.mask_timing == "every_step"


def test_unknown_top_level_key_rejected_with_name():
    with pytest.raises(ConfigError, match="warmup_rounds"):
        parse_config({"warmup_rounds": 5})


def test_unknown_nested_key_rejected_with_path():
    with pytest.raises(ConfigError, match="data.nois"):
        parse_config({"data": {"nois": 0.1}})
    with pytest.raises(ConfigError, match="arch."):
        parse_config({"arch": {"pool": 3}})


def test_range_checks():
    with pytest.raises(ConfigError, match="warmup"):
        parse_config({"warmup": 21, "rounds": 20})
    with pytest.raises(ConfigError, match="pruning_rates"):
        parse_config({"pruning_rates": [1.0]})
    with pytest.raises(ConfigError, match="pruning_rates"):
        parse_config({"pruning_rates": [-0.1]})
    with pytest.raises(ConfigError, match="clients"):
        parse_config({"clients": 0})
    with pytest.raises(ConfigError, match="learning_rate"):
        parse_config({"learning_rate": 0})
    with pytest.raises(ConfigError, match="strategies"):
        parse_config({"strategies": ["standard", "magic"]})
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config({"strategies": ["standard", "standard"]})
    with pytest.raises(ConfigError, match="max_positives"):
        parse_config({"data": {"classes": 2, "max_positives": 3}})
    with pytest.raises(ConfigError, match="shape"):
        parse_config({"data": {"shape": [3, 32]}})
    with pytest.raises(ConfigError, match="train"):
        parse_config({"clients": 64, "data": {"train": 10}})


def test_type_checks_reject_bools_and_strings():
    with pytest.raises(ConfigError, match="rounds"):
        parse_config({"rounds": True})
    with pytest.raises(ConfigError, match="rounds"):
        parse_config({"rounds": "20"})
    with pytest.raises(ConfigError, match="lrp_bias"):
        parse_config({"lrp_bias": "both"})


def test_cells_standard_once_then_strategy_rate_grid():
    cfg = parse_config({
        "strategies": ["standard", "proposed", "random"],
        "pruning_rates": [0.1, 0.2, 0.3, 0.4],
    })
    cells = cfg.cells()
    assert cells[0] == ("standard", 0.0)
    assert len(cells) == 9  # 1 + 2 strategies x 4 rates
    assert cells.count(("proposed", 0.4)) == 1
    assert cells.count(("random", 0.1)) == 1


def test_federation_config_carries_fields():
    cfg = parse_config({"seed": 11, "mask_timing": "at_upload"})
    fed = cfg.federation_config(0.3)
    assert fed.seed == 11
    assert fed.pruning_rate == 0.3
    assert fed.mask_timing == "at_upload"
    assert fed.warmup == cfg.warmup


def test_load_config_reports_json_line_numbers(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "seed": 1,\n  "rounds": ,\n}\n')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(str(path))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.json"))


def test_load_config_round_trips_valid_file(tmp_path):
    path = tmp_path / "ok.json"
    path.write_text('{"seed": 5, "rounds": 3, "warmup": 2}')
    cfg = load_config(str(path))
    assert isinstance(cfg, ExperimentConfig)
    assert (cfg.seed, cfg.rounds, cfg.warmup) == (5, 3, 2)
