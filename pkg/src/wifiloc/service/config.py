"""
Service configuration: defaults, a JSON config file, then ``WIFILOC_*``
environment variables, each layer overriding the previous one.

=========================  ===============================  ==================
key                        environment variable             default
=========================  ===============================  ==================
listen                     WIFILOC_LISTEN                   127.0.0.1:8080
data_dir                   WIFILOC_DATA_DIR                 ./wifiloc-data
token                      WIFILOC_TOKEN                    (none: no auth)
smoothing_streak           WIFILOC_SMOOTHING_STREAK         3
play_once_per_session      WIFILOC_PLAY_ONCE_PER_SESSION    true
session_timeout_s          WIFILOC_SESSION_TIMEOUT_S        1800
sentinel_dbm               WIFILOC_SENTINEL_DBM             -100
clamp_negative_youden      WIFILOC_CLAMP_NEGATIVE_YOUDEN    true
algorithms                 WIFILOC_ALGORITHMS (comma list)  all six
hyperparameters            WIFILOC_HYPERPARAMETERS (JSON)   {}
train_seed                 WIFILOC_TRAIN_SEED               42
train_in_subprocess        WIFILOC_TRAIN_IN_SUBPROCESS      true
fsync                      WIFILOC_FSYNC                    false
=========================  ===============================  ==================
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

from ..classifiers import ALGORITHM_ORDER
from ..errors import DataError
from ..fingerprints import DEFAULT_SENTINEL

ENV_PREFIX = "WIFILOC_"


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:8080"
    data_dir: str = "wifiloc-data"
    token: str | None = None
    smoothing_streak: int = 3
    play_once_per_session: bool = True
    session_timeout_s: float = 1800.0
    sentinel_dbm: float = DEFAULT_SENTINEL
    clamp_negative_youden: bool = True
    algorithms: tuple[str, ...] = ALGORITHM_ORDER
    hyperparameters: dict = field(default_factory=dict)
    train_seed: int = 42
    train_in_subprocess: bool = True
    fsync: bool = False

    def __post_init__(self):
        self.algorithms = tuple(self.algorithms)
        if self.smoothing_streak < 1:
            raise DataError("smoothing_streak must be at least 1")
        if self.session_timeout_s <= 0:
            raise DataError("session_timeout_s must be positive")
        self.address()

    def address(self) -> tuple[str, int]:
        host, sep, port = self.listen.rpartition(":")
        if not sep or not port.isdigit():
            raise DataError(f"listen must look like host:port, got {self.listen!r}")
        return host or "127.0.0.1", int(port)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithms"] = list(self.algorithms)
        d["token"] = "***" if self.token else None
        return d


def _coerce(name: str, raw: str, kind):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise DataError(f"{ENV_PREFIX}{name.upper()} must be a boolean, got {raw!r}")
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is dict:
            value = json.loads(raw)
            if not isinstance(value, dict):
                raise ValueError
            return value
    except ValueError:
        raise DataError(f"{ENV_PREFIX}{name.upper()}: cannot parse {raw!r}") from None
    if kind is tuple:
        return tuple(a.strip() for a in raw.split(",") if a.strip())
    return raw


_KINDS = {"smoothing_streak": int, "session_timeout_s": float, "sentinel_dbm": float,
          "train_seed": int, "hyperparameters": dict, "algorithms": tuple,
          "play_once_per_session": bool, "clamp_negative_youden": bool,
          "train_in_subprocess": bool, "fsync": bool}


def load_config(path=None, env: Mapping[str, str] | None = None, **overrides) -> ServiceConfig:
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise DataError("config file must hold a JSON object")
        values.update(raw)
    for f in fields(ServiceConfig):
        key = ENV_PREFIX + f.name.upper()
        if key in env:
            values[f.name] = _coerce(f.name, env[key], _KINDS.get(f.name, str))
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ServiceConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise DataError(f"unknown config keys: {', '.join(unknown)}")
    return ServiceConfig(**values)
