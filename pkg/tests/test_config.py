import json

import pytest

from caremart.config import CaremartConfig, data_path, load_config
from caremart.errors import ConfigError


def test_defaults_from_packaged_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)  # no ./caremart.json here
    cfg = load_config()
    assert cfg.port == 8017
    assert cfg.gen["n_patients"] == 1000


def test_local_file_beats_packaged_default(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "caremart.json").write_text('{"port": 9000}', encoding="utf-8")
    assert load_config().port == 9000


def test_minimal_config_applies_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"store_root": "/tmp/x"}', encoding="utf-8")
    cfg = load_config(p)
    assert cfg.store_root == "/tmp/x"
    assert cfg.port == 8017
    assert cfg.nlp.batch_size == 200
    assert cfg.concept_csv() == data_path("concept.csv")


def test_unknown_key_rejected_by_name(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"store_rooot": "/tmp/x"}', encoding="utf-8")
    with pytest.raises(ConfigError, match="store_rooot"):
        load_config(p)


def test_bad_port_type_names_key(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"port": "not-a-port"}', encoding="utf-8")
    with pytest.raises(ConfigError, match="port"):
        load_config(p)


def test_env_port_beats_file(tmp_path, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text('{"port": 9000}', encoding="utf-8")
    monkeypatch.setenv("CAREMART_PORT", "9999")
    assert load_config(p).port == 9999


def test_env_store_root_and_seed(tmp_path, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"gen": {"seed": 1}}), encoding="utf-8")
    monkeypatch.setenv("CAREMART_STORE_ROOT", "/tmp/elsewhere")
    monkeypatch.setenv("CAREMART_SEED", "123")
    cfg = load_config(p)
    assert cfg.store_root == "/tmp/elsewhere"
    assert cfg.gen["seed"] == 123


def test_nested_nlp_settings_strict():
    with pytest.raises(Exception):
        CaremartConfig.model_validate({"nlp": {"batch_sizee": 5}})
