# =================================================================
# Copyright (C) 2024 by the veilblock authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# =================================================================
import logging
import os
import sys
from datetime import timedelta
from pathlib import Path
from typing import Annotated, Dict, List, Literal

import yaml
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, TypeAdapter, ValidationError

from veilblock.protocol.definitions import *

LOGGER = logging.getLogger(__name__)

CONFIG_ENV = "VEILBLOCK_CONFIG"

_TIMEDELTA = TypeAdapter(timedelta)


def parse_duration(value) -> int:
    """integer seconds or an ISO-8601 duration such as PT1H"""
    if isinstance(value, bool):
        raise ValueError("a duration must be a number of seconds or an ISO-8601 duration")
    if isinstance(value, (int, float)):
        return int(value)
    return int(_TIMEDELTA.validate_python(value).total_seconds())


Duration = Annotated[int, BeforeValidator(parse_duration)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BindConfig(_Section):
    host: str = "127.0.0.1"
    port: int = Field(7470, ge=0, le=65535)


class ServerConfig(_Section):
    bind: BindConfig = Field(default_factory=BindConfig)
    workers: int = Field(4, ge=1)
    max_in_flight: int = Field(256, ge=1)
    max_frame_bytes: int = Field(64 * 1024 * 1024, ge=1024)
    state_dir: Path = Path("enforcer")
    gossip_file: Path | None = None
    reload_interval: Duration = 30


class LoggingConfig(_Section):
    level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "ERROR"
    logfile: Path | None = None


class KeysConfig(_Section):
    enforcer_public_key: Path | None = None
    curator_keyrings: List[Path] = Field(default_factory=list)
    witness_keys: Dict[str, Path] = Field(default_factory=dict)


class PolicyConfig(_Section):
    policy_m: int = 1
    witness_quorum: int = Field(0, ge=0)
    update_interval: Duration = 3600
    clock_skew: Duration = DEFAULT_CLOCK_SKEW


class PirConfig(_Section):
    enabled: bool = False
    prefix_bits: int = Field(8, ge=1, le=24)
    backend: str = "plaintext-reference"
    ring_dimension: int = Field(4096, ge=1)
    max_response_bytes: int | None = None


class AuditConfig(_Section):
    min_update_interval: Duration = 3600
    max_checkpoint_age: Duration = 86400
    witness_quorum: int = Field(0, ge=0)


class BenchConfig(_Section):
    iterations: int = Field(200, ge=200)
    device: str = "desktop"
    sizes: List[int] = Field(default_factory=lambda: [1000, 50000, 1000000])
    pir_prefix_bits: List[int] = Field(default_factory=lambda: list(range(6, 16)))
    pir_fill: int = Field(104, ge=1)
    output: Path | None = None


class VeilblockConfig(_Section):
    server: ServerConfig = Field(default_factory=ServerConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    keys: KeysConfig = Field(default_factory=KeysConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    pir: PirConfig = Field(default_factory=PirConfig)
    audit: AuditConfig = Field(default_factory=AuditConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)


def _resolve(path: Path | None, base: Path) -> Path | None:
    if path is None or path.is_absolute():
        return path
    return base / path


def _resolve_paths(config: VeilblockConfig, base: Path) -> VeilblockConfig:
    config.server.state_dir = _resolve(config.server.state_dir, base)
    config.server.gossip_file = _resolve(config.server.gossip_file, base)
    config.logging.logfile = _resolve(config.logging.logfile, base)
    config.keys.enforcer_public_key = _resolve(config.keys.enforcer_public_key, base)
    config.keys.curator_keyrings = [_resolve(p, base) for p in config.keys.curator_keyrings]
    config.keys.witness_keys = {k: _resolve(p, base) for k, p in config.keys.witness_keys.items()}
    config.bench.output = _resolve(config.bench.output, base)
    return config


def _check_files(config: VeilblockConfig):
    required = list(config.keys.curator_keyrings) + list(config.keys.witness_keys.values())
    if config.keys.enforcer_public_key is not None:
        required.append(config.keys.enforcer_public_key)
    for path in required:
        if not path.is_file():
            raise MissingKeyFileError(f"key file {path} does not exist")


def validate_config(data: Dict, base: Path = None, check_files: bool = True) -> VeilblockConfig:
    """
    Validate a configuration mapping

    :param data: parsed YAML document
    :param base: directory relative paths are resolved against
    :param check_files: require that every referenced key file exists

    :raises UnknownFieldError: an unknown section or key
    :raises InvalidPolicyError: policy_m below 1
    :raises MissingKeyFileError: a referenced key file does not exist
    :raises ConfigError: any other validation failure

    :returns: `VeilblockConfig`
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        config = VeilblockConfig.model_validate(data)
    except ValidationError as ex:
        unknown = [".".join(str(p) for p in e["loc"]) for e in ex.errors() if e["type"] == "extra_forbidden"]
        if unknown:
            raise UnknownFieldError(f"unknown configuration field(s): {', '.join(unknown)}")
        raise ConfigError(f"invalid configuration: {ex}")
    if config.policy.policy_m < 1:
        raise InvalidPolicyError(f"policy_m must be at least 1, got {config.policy.policy_m}")
    if base is not None:
        config = _resolve_paths(config, base)
    if check_files:
        _check_files(config)
    return config


def parse_config(file: Path | str = None, check_files: bool = True) -> VeilblockConfig:
    """
    Load the configuration from `file`, or from the path in VEILBLOCK_CONFIG.
    Without either, defaults are returned.
    """
    file = file or os.environ.get(CONFIG_ENV)
    if not file:
        LOGGER.debug("no configuration file given, using defaults")
        return VeilblockConfig()
    path = Path(file)
    if not path.is_file():
        raise ConfigError(f"configuration file {path} not found")
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as ex:
            raise ConfigError(f"configuration file {path} is not valid YAML: {ex}")
    return validate_config(data, path.parent.resolve(), check_files)


def serialize_config(config: VeilblockConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


def setup_logger(config: LoggingConfig):
    """Configure the root logger from the logging section"""
    kwargs = {
        "level": getattr(logging, config.level),
        "format": "[%(asctime)s] {%(name)s:%(lineno)d} %(levelname)s - %(message)s",
        "datefmt": "%Y-%m-%dT%H:%M:%SZ",
        "force": True,
    }
    if config.logfile is not None:
        kwargs["filename"] = str(config.logfile)
    else:
        kwargs["stream"] = sys.stderr
    logging.basicConfig(**kwargs)
    LOGGER.debug("logging initialized")
