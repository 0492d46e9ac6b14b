# config.py - Configuration for the didlink tools
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .did_core import CacheMode, CachePolicy
from .errors import ConfigError

# Load environment variables
load_dotenv()

DEFAULT_VDR_ADDRESS = "127.0.0.1:7000"
DEFAULT_DATA_DIR = "~/.didlink"

ENV_VARS = {
    "vdr_address": "DIDLINK_VDR",
    "data_dir": "DIDLINK_DATA_DIR",
    "log_level": "DIDLINK_LOG_LEVEL",
    "log_format": "DIDLINK_LOG_FORMAT",
    "cache_max_age": "DIDLINK_CACHE_MAX_AGE",
    "cache_mode": "DIDLINK_CACHE_MODE",
    "resolver_timeout": "DIDLINK_RESOLVER_TIMEOUT",
}


def parse_address(text: Union[str, Tuple[str, int]]) -> Tuple[str, int]:
    """Split "host:port" into a (host, port) tuple."""
    if isinstance(text, tuple):
        return text
    host, sep, port = str(text).rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(
            f"address {text!r} is not host:port", suggestion="Use e.g. 127.0.0.1:7000."
        )
    return host.strip("[]") or "127.0.0.1", int(port)


def format_address(address: Tuple[str, int]) -> str:
    return f"{address[0]}:{address[1]}"


class CliConfig(BaseModel):
    """Settings shared by every subcommand."""

    model_config = ConfigDict(extra="forbid")

    vdr_address: str = DEFAULT_VDR_ADDRESS
    data_dir: Path = Path(DEFAULT_DATA_DIR)
    log_level: str = "INFO"
    log_format: str = "json"
    cache_max_age: float = Field(default=300.0, ge=0)
    cache_mode: CacheMode = CacheMode.PREFER_CACHE
    resolver_timeout: float = Field(default=5.0, gt=0)

    @field_validator("data_dir")
    @classmethod
    def _expand(cls, value: Path) -> Path:
        return value.expanduser()

    @field_validator("log_format")
    @classmethod
    def _check_format(cls, value: str) -> str:
        if value not in ("json", "console"):
            raise ValueError("log_format must be json or console")
        return value

    @field_validator("vdr_address")
    @classmethod
    def _check_address(cls, value: str) -> str:
        parse_address(value)
        return value

    @property
    def vdr(self) -> Tuple[str, int]:
        return parse_address(self.vdr_address)

    @property
    def cache_policy(self) -> CachePolicy:
        return CachePolicy(max_age=self.cache_max_age, mode=self.cache_mode)

    def ensure_data_dir(self) -> Path:
        self.data_dir.mkdir(parents=True, exist_ok=True)
        return self.data_dir


def _from_environment() -> Dict[str, Any]:
    values = {}
    for field, var in ENV_VARS.items():
        value = os.getenv(var)
        if value:
            values[field] = value
    return values


def _from_file(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def load_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> CliConfig:
    """Defaults < environment < config file < explicit overrides."""
    values = _from_environment()
    if config_file:
        values.update(_from_file(config_file))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return CliConfig(**values)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
