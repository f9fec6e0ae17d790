import logging
from pathlib import Path

import pytest
import yaml

from veilblock.config import CONFIG_ENV, VeilblockConfig, parse_config, parse_duration, serialize_config, \
    setup_logger, validate_config
from veilblock.protocol.definitions import *

SAMPLE = Path(__file__).parent.parent / "veilblock" / "veilblock-config.yml"


def test_defaults():
    config = validate_config({})
    assert config.policy.policy_m == 1
    assert config.policy.update_interval == 3600
    assert config.policy.clock_skew == DEFAULT_CLOCK_SKEW
    assert config.pir.enabled is False
    assert config.bench.iterations == 200
    assert config.bench.sizes == [1000, 50000, 1000000]
    assert config.bench.pir_prefix_bits == list(range(6, 16))
    assert validate_config(None) == config


def test_sample_configuration_loads():
    config = parse_config(SAMPLE)
    assert config.server.bind.port == 7470
    assert config.policy.clock_skew == 300
    assert config.audit.max_checkpoint_age == 86400
    assert config.bench.pir_prefix_bits == list(range(6, 16))
    # relative paths resolve against the file's directory
    assert config.server.state_dir == SAMPLE.parent.resolve() / "enforcer"


@pytest.mark.parametrize("value,seconds", [(60, 60), ("PT1H", 3600), ("P1D", 86400), ("PT1H30M", 5400), (2.5, 2)])
def test_durations(value, seconds):
    assert parse_duration(value) == seconds


def test_boolean_is_not_a_duration():
    with pytest.raises(ConfigError):
        validate_config({"policy": {"update_interval": True}})


@pytest.mark.parametrize("data", [{"nonsense": 1}, {"policy": {"policy_n": 2}}, {"server": {"bind": {"hots": "x"}}}])
def test_unknown_fields(data):
    with pytest.raises(UnknownFieldError):
        validate_config(data)


def test_policy_m_must_be_positive():
    with pytest.raises(InvalidPolicyError):
        validate_config({"policy": {"policy_m": 0}})


def test_invalid_values():
    with pytest.raises(ConfigError):
        validate_config({"pir": {"prefix_bits": 0}})
    with pytest.raises(ConfigError):
        validate_config({"bench": {"iterations": 10}})
    with pytest.raises(ConfigError):
        validate_config(["not", "a", "mapping"])


def test_missing_key_file(tmp_path):
    data = {"keys": {"curator_keyrings": ["alpha.json"]}}
    with pytest.raises(MissingKeyFileError):
        validate_config(data, tmp_path)
    (tmp_path / "alpha.json").write_text("{}")
    assert validate_config(data, tmp_path).keys.curator_keyrings == [tmp_path / "alpha.json"]
    assert validate_config({"keys": {"witness_keys": {"w": "nope.pub"}}}, tmp_path, check_files=False)


def test_serialize_round_trip():
    config = validate_config({"policy": {"policy_m": 2, "update_interval": "PT2H"}, "pir": {"enabled": True}})
    again = validate_config(yaml.safe_load(serialize_config(config)))
    assert again == config
    assert again.policy.update_interval == 7200


def test_environment_variable(tmp_path, monkeypatch):
    path = tmp_path / "config.yml"
    path.write_text("policy:\n  policy_m: 3\n")
    monkeypatch.setenv(CONFIG_ENV, str(path))
    assert parse_config().policy.policy_m == 3
    monkeypatch.delenv(CONFIG_ENV)
    assert parse_config() == VeilblockConfig()


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.yml")
    broken = tmp_path / "broken.yml"
    broken.write_text("policy: [unclosed\n")
    with pytest.raises(ConfigError):
        parse_config(broken)


def test_setup_logger_writes_logfile(tmp_path):
    logfile = tmp_path / "veilblock.log"
    config = validate_config({"logging": {"level": "INFO", "logfile": str(logfile)}}).logging
    try:
        setup_logger(config)
        logging.getLogger("veilblock.test").info("hello")
        logging.shutdown()
        assert "hello" in logfile.read_text()
    finally:
        logging.basicConfig(force=True, level=logging.WARNING)
