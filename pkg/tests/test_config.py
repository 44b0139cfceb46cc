import json

import pytest

from rydbell.config import ConfigError, default_config, default_dict, dump_config, from_dict, load_config


def test_defaults_carry_the_experimental_parameters():
    cfg = default_config()
    assert cfg.physics.rabi_raman_MHz == 0.75
    assert cfg.physics.rabi_rydberg_MHz == 0.73
    assert cfg.physics.c6_GHz_um6 == -573.0
    assert cfg.physics.separation_um == 6.0
    assert cfg.physics.temperature_uK == 10.0
    assert cfg.physics.rydberg_lifetime_us == 134.0
    assert cfg.detection.eta_op == 0.95
    assert cfg.scan.shots_per_point == 250


def test_round_trip(tmp_path):
    cfg = default_config().replace(seed=7, **{"scan.shots_per_point": 13})
    path = tmp_path / "c.json"
    dump_config(cfg, path)
    assert load_config(path) == cfg
    assert from_dict(json.loads(path.read_text())) == cfg


def test_none_gives_defaults():
    assert load_config(None) == default_config()


def test_unknown_key_rejected():
    d = default_dict()
    d["physics"]["rabi_MHz"] = 1.0
    with pytest.raises(ConfigError, match="physics"):
        from_dict(d)
    with pytest.raises(ConfigError, match="unknown config key"):
        default_config().replace(**{"scan.nope": 1})


def test_bad_value_names_the_key():
    d = default_dict()
    d["detection"]["eta_op"] = 1.5
    with pytest.raises(ConfigError, match="detection.eta_op"):
        from_dict(d)
    d = default_dict()
    d["schema_version"] = 99
    with pytest.raises(ConfigError, match="schema_version"):
        from_dict(d)


def test_json_syntax_error_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "seed": 1,\n  oops\n}\n')
    with pytest.raises(ConfigError, match=r"bad.json:3:"):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.json")
