import json

import pytest

from src import config


@pytest.fixture
def fresh_config(monkeypatch):
    for env_name in list(config.ENV_OVERRIDES) + ["COVFACTOR_CONFIG"]:
        monkeypatch.delenv(env_name, raising=False)
    config.load_config.cache_clear()
    yield
    config.load_config.cache_clear()


def test_defaults_are_complete(fresh_config):
    settings = config.load_config()
    for key, value in config.DEFAULT_CONFIG.items():
        assert key in settings
        assert type(settings[key]) is type(value)


def test_file_values_override_defaults(fresh_config, monkeypatch, tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"dense_cap": 128, "colour": "blue"}), encoding="utf-8")
    monkeypatch.setenv("COVFACTOR_CONFIG", str(path))
    settings = config.reload_config()
    assert settings["dense_cap"] == 128
    assert "colour" not in settings


def test_broken_file_falls_back_to_defaults(fresh_config, monkeypatch, tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{dense_cap: ", encoding="utf-8")
    monkeypatch.setenv("COVFACTOR_CONFIG", str(path))
    assert config.reload_config()["dense_cap"] == config.DEFAULT_CONFIG["dense_cap"]


def test_environment_overrides(fresh_config, monkeypatch, tmp_path):
    monkeypatch.setenv("COVFACTOR_CONFIG", str(tmp_path / "absent.json"))
    monkeypatch.setenv("COVFACTOR_TOL", "1e-6")
    monkeypatch.setenv("COVFACTOR_N_JOBS", "not-a-number")
    settings = config.reload_config()
    assert settings["verdict_tolerance"] == 1e-6
    assert settings["n_jobs"] == config.DEFAULT_CONFIG["n_jobs"]


def test_resolve_prefers_explicit_values(fresh_config):
    assert config.resolve(7, "dense_cap") == 7
    assert config.resolve(None, "seed") == config.get_setting("seed")
    with pytest.raises(KeyError):
        config.get_setting("theme")
