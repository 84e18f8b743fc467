"""
Localization service logic, independent of the HTTP layer.

The installed model is a ``(version, bundle)`` tuple that is replaced in a
single assignment, so a request that read it keeps using that version to the
end.  A new version is written to disk and recorded in the model registry
before it is installed.  Tracker state is kept per device and each device's
updates run under that device's lock.
"""
from __future__ import annotations

import logging
import multiprocessing
import threading
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Mapping

from ..errors import DataError, InsufficientDataError, TrainingError, UnrecognizedScanError
from ..ensemble import (
    EnsembleConfig,
    LocalizerBundle,
    bundle_bytes,
    bundle_from_bytes,
    holdout_accuracy,
    load_bundle,
    localize,
    train_bundle,
)
from ..fingerprints import Band, Dataset, Fingerprint, filter_to_band
from ..io import parse_scan
from ..tracker import TrackerConfig, TrackerState, update
from .config import ServiceConfig
from .store import ModelRegistry, ModelVersion, ServiceStore

logger = logging.getLogger(__name__)

MAX_PAGE = 1000
MIN_PER_LOCATION = 3


class ServiceError(Exception):
    def __init__(self, status: int, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


@dataclass
class _Session:
    lock: threading.Lock = field(default_factory=threading.Lock)
    state: TrackerState = field(default_factory=TrackerState)
    last_seen: float = 0.0


def _now_ms() -> int:
    return int(time.time() * 1000)


def records_to_dataset(records, locations: Mapping[int, str], radios: Mapping[str, Band],
                       aps: Mapping[str, str]) -> Dataset:
    """Labeled store records as a dataset; unknown radios are ignored."""
    fps = []
    for rec in records:
        signals = {m: float(v) for m, v in rec["signals"].items() if m in radios}
        if signals:
            fps.append(Fingerprint(signals, int(rec["location"]), rec.get("device_id", ""),
                                   int(rec.get("ts_ms", 0))))
    if not fps:
        raise InsufficientDataError("the fingerprint store holds no usable scans")
    seen = {m for fp in fps for m in fp.signals}
    present = {fp.location for fp in fps}
    return Dataset(tuple(fps), {k: v for k, v in locations.items() if k in present},
                   {m: b for m, b in radios.items() if m in seen},
                   {m: a for m, a in aps.items() if m in seen})


def check_trainable(ds: Dataset) -> None:
    counts = ds.counts()
    if len(counts) < 2:
        raise InsufficientDataError("training needs at least two locations")
    thin = sorted(loc for loc, n in counts.items() if n < MIN_PER_LOCATION)
    if thin:
        raise InsufficientDataError(
            f"locations {thin} have fewer than {MIN_PER_LOCATION} fingerprints")
    if ds.bands() != {Band.GHZ24, Band.GHZ5}:
        raise InsufficientDataError("training needs radios in both bands")


def train_job(ds: Dataset, config: dict, seed: int) -> tuple[bytes, dict]:
    """Train a bundle and return it serialized with per-band test accuracy.

    Module-level so it can run in a spawned worker process.
    """
    bundle = train_bundle(ds, EnsembleConfig.from_dict(config), seed)
    accuracies = {
        "dual": holdout_accuracy(bundle.dual, ds),
        "2.4-only": holdout_accuracy(bundle.only24, filter_to_band(ds, Band.GHZ24)),
    }
    report = {"dual": bundle.dual.report, "2.4-only": bundle.only24.report}
    return bundle_bytes(bundle), {"accuracies": accuracies, "report": report}


class LocalizationService:
    def __init__(self, config: ServiceConfig, clock: Callable[[], float] = time.monotonic):
        self.config = config
        self.clock = clock
        self.store = ServiceStore(config.data_dir, config.fsync)
        self.tracker_config = TrackerConfig(config.smoothing_streak, config.play_once_per_session)
        self._installed: tuple[int, LocalizerBundle] | None = None
        self._sessions: dict[str, _Session] = {}
        self._sessions_lock = threading.Lock()
        self._train_lock = threading.Lock()
        self._learn_lock = threading.Lock()
        self._counts = Counter(int(r["location"]) for r in self.store.fingerprints.records())
        current = self.store.registry.current
        if current is not None:
            self._installed = (current, load_bundle(self.store.model_path(current)))
            logger.info("loaded model version %d", current)

    # -- model ------------------------------------------------------------

    @property
    def installed(self) -> tuple[int, LocalizerBundle] | None:
        return self._installed

    def _require_model(self) -> tuple[int, LocalizerBundle]:
        installed = self._installed
        if installed is None:
            raise ServiceError(503, "no model installed; POST /api/v1/train first")
        return installed

    def model_info(self) -> dict:
        version, bundle = self._require_model()
        meta = self.store.registry.get(version)
        return {
            "version": version,
            "feature_space_sizes": {"dual": len(bundle.dual.feature_space),
                                    "only24": len(bundle.only24.feature_space)},
            "locations": {str(k): v for k, v in sorted(bundle.locations.items())},
            "archived_versions": self.store.registry.archived,
            "training_report": {
                "seed": meta.seed, "snapshot": meta.snapshot, "trained_at": meta.trained_at,
                "duration_s": meta.duration_s, "accuracies": meta.accuracies,
                "config": bundle.config.to_dict(), **meta.report,
            },
        }

    # -- tracking ---------------------------------------------------------

    def _session(self, device_id: str) -> _Session:
        with self._sessions_lock:
            s = self._sessions.get(device_id)
            if s is None:
                s = self._sessions[device_id] = _Session()
            return s

    def track(self, body: Any) -> dict:
        version, bundle = self._require_model()
        try:
            scan = parse_scan(body)
            fp = Fingerprint(scan.signals, None, scan.device_id, scan.ts_ms or _now_ms())
        except DataError as exc:
            raise ServiceError(400, str(exc)) from None
        if not fp.device_id:
            raise ServiceError(400, "device_id is required")
        try:
            result = localize(bundle, fp)
        except UnrecognizedScanError as exc:
            raise ServiceError(422, str(exc)) from None

        session = self._session(fp.device_id)
        with session.lock:
            now = self.clock()
            if session.last_seen and now - session.last_seen > self.config.session_timeout_s:
                session.state = TrackerState()
            session.last_seen = now
            session.state, changed, first = update(session.state, result.location,
                                                   self.tracker_config)
            record = {
                "device_id": fp.device_id,
                "ts_ms": fp.ts_ms,
                "location": result.location,
                "scores": {str(k): v for k, v in result.scores.items()},
                "band": result.band.value,
                "smoothed_area": session.state.current,
                "changed": changed,
                "first_visit": first,
                "model_version": version,
            }
            # appended under the device lock so the log keeps per-device order
            self.store.predictions.append(record)
        return dict(record)

    def reset_sessions(self) -> None:
        with self._sessions_lock:
            self._sessions.clear()

    # -- learning ---------------------------------------------------------

    def _resolve_location(self, label: str) -> int:
        locations = self.store.locations
        if label.isdigit() and int(label) in locations:
            return int(label)
        for loc, name in locations.items():
            if name == label:
                return loc
        raise ServiceError(404, f"unknown location {label!r}")

    def learn(self, body: Any) -> dict:
        try:
            scan = parse_scan(body)
        except DataError as exc:
            raise ServiceError(400, str(exc)) from None
        if scan.location is None:
            raise ServiceError(400, "a location label is required")
        loc = self._resolve_location(scan.location)
        if not scan.signals:
            raise ServiceError(400, "fingerprint has no signals")
        record = {"device_id": scan.device_id, "ts_ms": scan.ts_ms or _now_ms(),
                  "location": str(loc), "signals": scan.signals}
        with self._learn_lock:
            new = {m: b for m, b in scan.bands.items() if m not in self.store.radios}
            if new:
                self.store.set_radios({**self.store.radios, **new}, self.store.aps)
            self._counts[loc] += 1
            total = self._counts[loc]
            # the lock keeps counts and log order consistent
            _, written = self.store.fingerprints.enqueue(record)
        written.wait()
        return {"accepted": True, "total_for_location": total}

    # -- training ---------------------------------------------------------

    def _ensemble_config(self, overrides: Mapping) -> EnsembleConfig:
        base = {
            "algorithms": list(self.config.algorithms),
            "hyperparameters": dict(self.config.hyperparameters),
            "clamp_negative_youden": self.config.clamp_negative_youden,
            "sentinel": self.config.sentinel_dbm,
        }
        if not isinstance(overrides, Mapping):
            raise ServiceError(400, "'config' must be an object")
        try:
            return EnsembleConfig.from_dict({**base, **overrides})
        except (TypeError, ValueError) as exc:
            raise ServiceError(400, f"invalid config override: {exc}") from None

    def train(self, body: Any = None) -> dict:
        body = body or {}
        if not isinstance(body, Mapping):
            raise ServiceError(400, "train body must be a JSON object")
        seed = body.get("seed", self.config.train_seed)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ServiceError(400, "seed must be a non-negative integer")
        config = self._ensemble_config(body.get("config") or {})
        if not self._train_lock.acquire(blocking=False):
            raise ServiceError(409, "a training run is already active")
        try:
            return self._train_locked(config, seed)
        finally:
            self._train_lock.release()

    def _train_locked(self, config: EnsembleConfig, seed: int) -> dict:
        records = self.store.fingerprints.records()
        try:
            ds = records_to_dataset(records, self.store.locations, self.store.radios,
                                    self.store.aps)
            check_trainable(ds)
        except DataError as exc:
            raise ServiceError(422, str(exc)) from None

        t0 = time.perf_counter()
        try:
            if self.config.train_in_subprocess:
                ctx = multiprocessing.get_context("spawn")
                with ProcessPoolExecutor(max_workers=1, mp_context=ctx) as pool:
                    blob, info = pool.submit(train_job, ds, config.to_dict(), seed).result()
            else:
                blob, info = train_job(ds, config.to_dict(), seed)
        except DataError as exc:
            raise ServiceError(422, str(exc)) from None
        except (TrainingError, BrokenProcessPool) as exc:
            raise ServiceError(500, f"training failed: {exc}") from None
        duration = time.perf_counter() - t0
        bundle = bundle_from_bytes(blob)

        registry = self.store.registry
        version = registry.next_version()
        path = self.store.model_path(version)
        tmp = path.with_suffix(".npz.tmp")
        tmp.write_bytes(blob)
        tmp.replace(path)
        entry = ModelVersion(version, seed, len(records),
                             datetime.now(timezone.utc).isoformat(timespec="seconds"),
                             round(duration, 3), info["accuracies"], info["report"])
        self.store.save_registry(ModelRegistry(version, [*registry.versions, entry]))
        self._installed = (version, bundle)
        logger.info("installed model version %d (%.1fs)", version, duration)
        return {"version": version, "accuracies": info["accuracies"],
                "duration_s": round(duration, 3)}

    @property
    def training_active(self) -> bool:
        return self._train_lock.locked()

    # -- history ----------------------------------------------------------

    def history(self, device_id: str | None = None, start: int | None = None,
                end: int | None = None, limit: int = 100, offset: int = 0) -> tuple[list[dict], int]:
        """Prediction records in ascending timestamp order and the total
        number matching before pagination."""
        if start is not None and end is not None and start > end:
            raise ServiceError(400, "'from' must not be after 'to'")
        if not 1 <= limit <= MAX_PAGE:
            raise ServiceError(400, f"limit must be in 1..{MAX_PAGE}")
        if offset < 0:
            raise ServiceError(400, "offset must be non-negative")
        rows = [r for r in self.store.predictions.records()
                if (device_id is None or r["device_id"] == device_id)
                and (start is None or r["ts_ms"] >= start)
                and (end is None or r["ts_ms"] <= end)]
        rows.sort(key=lambda r: r["ts_ms"])  # stable: ties keep arrival order
        return rows[offset:offset + limit], len(rows)

    def close(self) -> None:
        self.store.close()
