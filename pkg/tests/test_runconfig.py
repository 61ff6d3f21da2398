import json
from datetime import date

import pytest

from duotrader.errors import ConfigError
from duotrader.runconfig import load_config


def test_defaults_without_file():
    config = load_config(None)
    assert config.seed == 0
    assert config.engine.warmup_bars == 756
    assert config.hmm.n_states == 5
    assert config.mlp.layer_sizes == (5, 10, 10, 10, 5, 1)
    assert config.bl.risk_aversion == 2.5


def test_file_values_applied(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "seed": 11,
        "engine": {"warmup_bars": 100, "start_date": "2019-01-02"},
        "mlp": {"layer_sizes": [5, 10, 10, 10, 5, 1], "epochs": 3},
    }))
    config = load_config(path)
    assert config.seed == 11
    assert config.engine.warmup_bars == 100
    assert config.engine.start_date == date(2019, 1, 2)
    assert config.engine.seed == 11  # derived from the global seed
    assert config.mlp.epochs == 3
    assert config.mlp.layer_sizes == (5, 10, 10, 10, 5, 1)


def test_dotted_overrides_beat_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"engine": {"warmup_bars": 100}}))
    config = load_config(path, {"engine.warmup_bars": 5, "seed": 3})
    assert config.engine.warmup_bars == 5
    assert config.seed == 3


def test_unknown_top_level_key():
    with pytest.raises(ConfigError, match="mystery"):
        load_config(None, {"mystery": 1})


def test_unknown_section_key(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"risk": {"maxdrawdown": 0.1}}))
    with pytest.raises(ConfigError, match="maxdrawdown"):
        load_config(path)


def test_invalid_section_value(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"risk": {"trailing_fraction": 2.0}}))
    with pytest.raises(ConfigError, match="risk"):
        load_config(path)


def test_engine_seed_rejected(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"engine": {"seed": 9}}))
    with pytest.raises(ConfigError, match="seed"):
        load_config(path)


def test_invalid_json_reports_line(tmp_path):
    path = tmp_path / "run.json"
    path.write_text('{"seed": }')
    with pytest.raises(ConfigError, match="line"):
        load_config(path)


def test_resolved_is_json_serializable():
    resolved = load_config(None, {"engine.start_date": "2020-06-01"}).resolved()
    text = json.dumps(resolved, sort_keys=True)
    assert json.loads(text)["engine"]["start_date"] == "2020-06-01"
    assert json.loads(text)["mlp"]["layer_sizes"] == [5, 10, 10, 10, 5, 1]


def test_bool_seed_rejected():
    with pytest.raises(ConfigError):
        load_config(None, {"seed": True})
