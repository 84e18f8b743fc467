"""
File-backed persistence for the localization service.

Layout of a data directory (a fingerprint store plus service state)::

    fingerprints.jsonl   append-only labeled scans
    radios.csv           radio registry (mac, band, ap)
    locations.json       location id -> name
    meta.json            store schema
    predictions.jsonl    append-only prediction history
    models/registry.json current and archived bundle versions
    models/v<n>.npz      one localizer bundle per version

Logs are written by one background thread per file.  Appenders queue a line
and optionally wait for it; the writer drains whatever is queued, writes it
in one go and flushes (group commit).
"""
from __future__ import annotations

import json
import logging
import os
import queue
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..errors import DataError
from ..fingerprints import Band
from ..io import STORE_SCHEMA, load_locations, read_registry, write_registry

logger = logging.getLogger(__name__)

REGISTRY_SCHEMA = 1
_STOP = object()


class AppendLog:
    """JSON-lines log with an in-memory mirror and a single writer thread."""

    def __init__(self, path, fsync: bool = False):
        self.path = Path(path)
        self.fsync = fsync
        self._records: list[dict] = _read_lines(self.path)
        self._lock = threading.Lock()
        self._queue: queue.Queue = queue.Queue()
        self._closed = False
        self._writer = threading.Thread(target=self._run, name=f"log-{self.path.name}", daemon=True)
        self._writer.start()

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[dict]:
        with self._lock:
            return list(self._records)

    def append(self, record: dict, wait: bool = False) -> int:
        """Queue ``record``; returns the log length after it.  With
        ``wait=True`` the call returns once the line is on disk."""
        n, done = self.enqueue(record)
        if wait:
            done.wait()
        return n

    def enqueue(self, record: dict) -> tuple[int, threading.Event]:
        """Queue ``record`` and return the log length plus an event that is
        set once the line has been written."""
        line = json.dumps(record, separators=(",", ":"), sort_keys=True)
        done = threading.Event()
        with self._lock:
            if self._closed:
                raise RuntimeError(f"{self.path.name} is closed")
            self._records.append(record)
            n = len(self._records)
            # enqueue under the lock so file order equals memory order
            self._queue.put((line, done))
        return n, done

    def _run(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            while True:
                batch = [self._queue.get()]
                while True:
                    try:
                        batch.append(self._queue.get_nowait())
                    except queue.Empty:
                        break
                stop = False
                for item in batch:
                    if item is _STOP:
                        stop = True
                    else:
                        fh.write(item[0] + "\n")
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
                for item in batch:
                    if item is not _STOP:
                        item[1].set()
                    self._queue.task_done()
                if stop:
                    return

    def flush(self) -> None:
        self._queue.join()

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            self._queue.put(_STOP)
        self._writer.join()


def _read_lines(path: Path) -> list[dict]:
    """Parse the log and repair a torn tail so later appends start on a
    fresh line."""
    if not path.exists():
        return []
    out = []
    data = path.read_bytes()
    lines = data.split(b"\n")
    good_end = 0  # byte offset just past the last intact line
    offset = 0
    for i, line in enumerate(lines):
        end = offset + len(line)
        if line.strip():
            try:
                out.append(json.loads(line))
            except (json.JSONDecodeError, UnicodeDecodeError):
                if i >= len(lines) - 2 and not any(x.strip() for x in lines[i + 1:]):
                    # a crash can leave a torn final line; everything before it is intact
                    logger.warning("%s: dropping truncated last line", path.name)
                    break
                raise DataError(f"{path}: corrupt line {i + 1}") from None
            good_end = end
        offset = end + 1
    if good_end < len(data) and data[good_end:].strip() or (out and not data.endswith(b"\n")):
        with open(path, "r+b") as fh:
            fh.truncate(good_end)
            fh.seek(good_end)
            if good_end:
                fh.write(b"\n")
    return out


@dataclass
class ModelVersion:
    version: int
    seed: int
    snapshot: int
    trained_at: str
    duration_s: float
    accuracies: dict[str, float]
    report: dict = field(default_factory=dict)


@dataclass
class ModelRegistry:
    current: int | None = None
    versions: list[ModelVersion] = field(default_factory=list)

    @property
    def archived(self) -> list[int]:
        return [v.version for v in self.versions if v.version != self.current]

    def next_version(self) -> int:
        return max((v.version for v in self.versions), default=0) + 1

    def get(self, version: int) -> ModelVersion:
        for v in self.versions:
            if v.version == version:
                return v
        raise KeyError(version)

    def to_dict(self) -> dict:
        return {"schema": REGISTRY_SCHEMA, "current": self.current,
                "versions": [asdict(v) for v in self.versions]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelRegistry":
        if d.get("schema") != REGISTRY_SCHEMA:
            raise DataError(f"unsupported model registry schema {d.get('schema')}")
        return cls(d.get("current"), [ModelVersion(**v) for v in d.get("versions", [])])


class ServiceStore:
    """The on-disk state of one service instance."""

    def __init__(self, data_dir, fsync: bool = False):
        self.root = Path(data_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "models").mkdir(exist_ok=True)
        meta_path = self.root / "meta.json"
        if meta_path.exists():
            schema = json.loads(meta_path.read_text()).get("schema")
            if schema != STORE_SCHEMA:
                raise DataError(f"unsupported store schema {schema}")
        else:
            meta_path.write_text(json.dumps({"schema": STORE_SCHEMA}, indent=1) + "\n")
        reg_path = self.root / "radios.csv"
        self.radios, self.aps = read_registry(reg_path) if reg_path.exists() else ({}, {})
        loc_path = self.root / "locations.json"
        self.locations = load_locations(loc_path) if loc_path.exists() else {}
        self.fingerprints = AppendLog(self.root / "fingerprints.jsonl", fsync)
        self.predictions = AppendLog(self.root / "predictions.jsonl", fsync)
        self.registry = self._load_registry()

    @property
    def registry_path(self) -> Path:
        return self.root / "models" / "registry.json"

    def model_path(self, version: int) -> Path:
        return self.root / "models" / f"v{version}.npz"

    def _load_registry(self) -> ModelRegistry:
        if not self.registry_path.exists():
            return ModelRegistry()
        return ModelRegistry.from_dict(json.loads(self.registry_path.read_text()))

    def save_registry(self, registry: ModelRegistry) -> None:
        tmp = self.registry_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(registry.to_dict(), indent=1, sort_keys=True) + "\n")
        tmp.replace(self.registry_path)
        self.registry = registry

    def set_radios(self, radios: Mapping[str, Band], aps: Mapping[str, str]) -> None:
        write_registry(self.root / "radios.csv", radios, aps)
        self.radios, self.aps = dict(radios), dict(aps)

    def set_locations(self, locations: Mapping[int, str]) -> None:
        (self.root / "locations.json").write_text(
            json.dumps({str(k): v for k, v in sorted(locations.items())}, indent=1) + "\n")
        self.locations = dict(locations)

    def flush(self) -> None:
        self.fingerprints.flush()
        self.predictions.flush()

    def close(self) -> None:
        self.fingerprints.close()
        self.predictions.close()
