"""
Reading and writing fingerprint data.

Supported inputs:

* canonical JSONL, one scan per line::

    {"device_id": "...", "ts_ms": 0, "location": "3", "signals": {"aa:bb:..": -61}}

* a CSV matrix with header ``location,<mac1>,<mac2>,...`` (empty cell = unseen)
* FIND3-style scan objects (``{"d":..,"t":..,"l":..,"s":{"wifi":{..}}}``),
  either as JSONL or as a JSON array
* a radio registry CSV ``mac,band[,ap]`` with band in {2.4, 5}

A *store* is a directory holding a normalized dataset (``fingerprints.jsonl``,
``radios.csv``, ``locations.json``, ``meta.json``).
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import DataError
from .fingerprints import (
    RSSI_MAX,
    RSSI_MIN,
    Band,
    Dataset,
    Fingerprint,
    normalize_mac,
)

logger = logging.getLogger(__name__)

STORE_SCHEMA = 1


@dataclass
class RawScan:
    """A parsed but not yet registry-checked scan."""

    signals: dict[str, float]
    location: str | None = None
    device_id: str = ""
    ts_ms: int = 0
    bands: dict[str, Band] = field(default_factory=dict)


@dataclass
class IngestReport:
    read: int = 0
    kept: int = 0
    dropped_empty: int = 0
    unknown_radio_readings: int = 0
    clamped: int = 0
    ignored_fields: Counter = field(default_factory=Counter)
    per_location: dict[int, int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "read": self.read,
            "kept": self.kept,
            "dropped_empty": self.dropped_empty,
            "unknown_radio_readings": self.unknown_radio_readings,
            "clamped": self.clamped,
            "ignored_fields": dict(sorted(self.ignored_fields.items())),
            "per_location": {str(k): v for k, v in sorted(self.per_location.items())},
        }


def clean_rssi(value: Any, report: IngestReport | None = None) -> float:
    """Coerce an RSSI to float, clamping to [-100, 0] dBm with a warning."""
    if isinstance(value, bool):
        raise DataError(f"RSSI must be a number, got {value!r}")
    try:
        rssi = float(value)
    except (TypeError, ValueError):
        raise DataError(f"RSSI must be a number, got {value!r}") from None
    if not math.isfinite(rssi):
        raise DataError(f"RSSI must be finite, got {value!r}")
    if rssi < RSSI_MIN or rssi > RSSI_MAX:
        logger.warning("clamping RSSI %s to [%s, %s]", rssi, RSSI_MIN, RSSI_MAX)
        if report is not None:
            report.clamped += 1
        rssi = min(max(rssi, RSSI_MIN), RSSI_MAX)
    if rssi == int(rssi):
        rssi = float(int(rssi))
    return rssi


def _clean_signals(signals: Any, report: IngestReport | None = None) -> dict[str, float]:
    if not isinstance(signals, Mapping):
        raise DataError("'signals' must be an object mapping MAC to RSSI")
    out: dict[str, float] = {}
    for mac, rssi in signals.items():
        out[normalize_mac(mac)] = clean_rssi(rssi, report)
    return out


def _label(value: Any) -> str | None:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise DataError(f"location must be a string, integer or null, got {value!r}")
    text = str(value).strip()
    return text or None


def parse_scan(obj: Any, report: IngestReport | None = None) -> RawScan:
    """Parse one canonical-format scan object."""
    if not isinstance(obj, Mapping):
        raise DataError("fingerprint must be a JSON object")
    if "signals" not in obj:
        raise DataError("fingerprint is missing 'signals'")
    known = {"device_id", "ts_ms", "location", "signals", "bands"}
    if report is not None:
        report.ignored_fields.update(k for k in obj if k not in known)
    ts = obj.get("ts_ms", 0)
    if isinstance(ts, bool) or not isinstance(ts, (int, float)) or not math.isfinite(ts):
        raise DataError(f"ts_ms must be an integer, got {ts!r}")
    bands = {normalize_mac(m): Band.parse(b) for m, b in (obj.get("bands") or {}).items()}
    return RawScan(
        signals=_clean_signals(obj["signals"], report),
        location=_label(obj.get("location")),
        device_id=str(obj.get("device_id") or ""),
        ts_ms=int(ts),
        bands=bands,
    )


def parse_find3(obj: Any, report: IngestReport | None = None) -> RawScan:
    """Best-effort mapping of a FIND3 scan; only the ``wifi`` family is used."""
    if not isinstance(obj, Mapping):
        raise DataError("FIND3 record must be a JSON object")
    report = report if report is not None else IngestReport()
    known = {"d", "f", "t", "l", "s"}
    report.ignored_fields.update(k for k in obj if k not in known)
    sensors = obj.get("s") or {}
    if not isinstance(sensors, Mapping):
        raise DataError("FIND3 's' must be an object")
    for family in sensors:
        if family != "wifi":
            report.ignored_fields[f"s.{family}"] += 1
    ts = obj.get("t") or 0
    return RawScan(
        signals=_clean_signals(sensors.get("wifi") or {}, report),
        location=_label(obj.get("l")),
        device_id=str(obj.get("d") or ""),
        ts_ms=int(ts) if isinstance(ts, (int, float)) else 0,
    )


def _json_records(path: Path) -> list[Any]:
    text = path.read_text()
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON array ({exc.msg})") from None
        return list(data)
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return records


def read_jsonl(path, report: IngestReport | None = None) -> list[RawScan]:
    return [parse_scan(obj, report) for obj in _json_records(Path(path))]


def read_find3(path, report: IngestReport | None = None) -> list[RawScan]:
    return [parse_find3(obj, report) for obj in _json_records(Path(path))]


def read_csv_matrix(path, report: IngestReport | None = None) -> list[RawScan]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return []
    header = rows[0]
    if not header or header[0].strip().lower() != "location":
        raise DataError(f"{path}: first column must be 'location'")
    macs = [normalize_mac(h) for h in header[1:]]
    scans = []
    for lineno, row in enumerate(rows[1:], 2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        signals = {mac: cell for mac, cell in zip(macs, row[1:]) if cell.strip()}
        scans.append(RawScan(_clean_signals(signals, report), _label(row[0])))
    return scans


def read_registry(path) -> tuple[dict[str, Band], dict[str, str]]:
    """Read ``mac,band[,ap]``; returns (mac -> band, mac -> ap id)."""
    bands: dict[str, Band] = {}
    aps: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"mac", "band"} <= {f.strip() for f in reader.fieldnames}:
            raise DataError(f"{path}: registry needs 'mac' and 'band' columns")
        for row in reader:
            row = {k.strip(): (v or "").strip() for k, v in row.items() if k}
            mac = normalize_mac(row["mac"])
            bands[mac] = Band.parse(row["band"])
            if row.get("ap"):
                aps[mac] = row["ap"]
    return bands, aps


def write_registry(path, registry: Mapping[str, Band], aps: Mapping[str, str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mac", "band", "ap"])
        for mac in sorted(registry):
            writer.writerow([mac, Band(registry[mac]).value, aps.get(mac, "")])


def location_ids(labels: Iterable[str]) -> dict[str, int]:
    """Assign integer ids: numeric labels keep their value, others are
    numbered 1..n in sorted order."""
    labels = sorted(set(labels))
    if all(lab.isdigit() and int(lab) > 0 for lab in labels):
        return {lab: int(lab) for lab in labels}
    return {lab: i for i, lab in enumerate(labels, 1)}


def build_dataset(scans: Iterable[RawScan], registry: Mapping[str, Band] | None = None,
                  aps: Mapping[str, str] | None = None,
                  report: IngestReport | None = None) -> Dataset:
    """Turn raw scans into a validated :class:`Dataset`.

    Unlabeled scans and readings from radios absent from the registry are
    dropped and counted in ``report``.
    """
    report = report if report is not None else IngestReport()
    scans = list(scans)
    reg = dict(registry or {})
    for scan in scans:
        for mac, band in scan.bands.items():
            reg.setdefault(mac, band)
    if not reg:
        raise DataError("no radio registry: supply a mac,band file or per-scan band metadata")

    labeled = []
    for scan in scans:
        report.read += 1
        if scan.location is None:
            report.dropped_empty += 1
            continue
        signals = {m: v for m, v in scan.signals.items() if m in reg}
        report.unknown_radio_readings += len(scan.signals) - len(signals)
        if not signals:
            report.dropped_empty += 1
            continue
        labeled.append((scan, signals))
    if not labeled:
        raise DataError("no valid labeled fingerprints")

    ids = location_ids(scan.location for scan, _ in labeled)
    fps = tuple(
        Fingerprint(signals, ids[scan.location], scan.device_id, scan.ts_ms)
        for scan, signals in labeled
    )
    locations = {i: name for name, i in sorted(ids.items(), key=lambda kv: kv[1])}
    used = {mac for fp in fps for mac in fp.signals}
    # radios never heard carry no information; keep the registry to those seen
    reg = {mac: b for mac, b in reg.items() if mac in used}
    ds = Dataset(fps, locations, reg, {m: a for m, a in (aps or {}).items() if m in reg})
    report.kept = len(ds)
    report.per_location = ds.counts()
    return ds


def load_dataset(path, fmt: str = "jsonl", registry_path=None,
                 report: IngestReport | None = None) -> Dataset:
    path = Path(path)
    report = report if report is not None else IngestReport()
    readers = {"jsonl": read_jsonl, "json": read_jsonl, "csv": read_csv_matrix, "find3": read_find3}
    if fmt not in readers:
        raise DataError(f"unknown input format {fmt!r}")
    scans = readers[fmt](path, report)
    if not scans:
        raise DataError(f"{path}: no fingerprints found")
    registry, aps = read_registry(registry_path) if registry_path else ({}, {})
    return build_dataset(scans, registry, aps, report)


def scan_to_json(fp: Fingerprint, locations: Mapping[int, str] | None = None) -> dict:
    loc = None
    if fp.location is not None:
        loc = str(fp.location)
    return {"device_id": fp.device_id, "ts_ms": fp.ts_ms, "location": loc,
            "signals": {mac: _num(v) for mac, v in fp.signals.items()}}


def _num(v: float):
    return int(v) if float(v).is_integer() else float(v)


def write_jsonl(path, fps: Iterable[Fingerprint]) -> None:
    with open(path, "w") as fh:
        for fp in fps:
            fh.write(json.dumps(scan_to_json(fp), separators=(",", ":")) + "\n")


def write_csv_matrix(path, ds: Dataset) -> None:
    macs = sorted(ds.registry)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["location", *macs])
        for fp in ds.fingerprints:
            writer.writerow([fp.location, *(_num(fp.signals[m]) if m in fp.signals else "" for m in macs)])


def dataset_digest(ds: Dataset) -> str:
    """Content hash of locations, registry and the ordered scans.

    Device ids and timestamps are excluded so that a CSV matrix and a JSONL
    file holding the same measurements hash identically.
    """
    h = hashlib.sha256()
    h.update(json.dumps(sorted((int(k), v) for k, v in ds.locations.items())).encode())
    h.update(json.dumps(sorted((m, Band(b).value, ds.aps[m]) for m, b in ds.registry.items())).encode())
    for fp in ds.fingerprints:
        h.update(json.dumps([fp.location, sorted((m, float(v)) for m, v in fp.signals.items())]).encode())
    return h.hexdigest()


def save_store(ds: Dataset, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_jsonl(path / "fingerprints.jsonl", ds.fingerprints)
    write_registry(path / "radios.csv", ds.registry, ds.aps)
    (path / "locations.json").write_text(
        json.dumps({str(k): v for k, v in sorted(ds.locations.items())}, indent=1) + "\n")
    meta = {"schema": STORE_SCHEMA, "fingerprints": len(ds), "digest": dataset_digest(ds)}
    (path / "meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    return path


def load_locations(path) -> dict[int, str]:
    raw = json.loads(Path(path).read_text())
    return {int(k): str(v) for k, v in raw.items()}


def load_store(path) -> Dataset:
    path = Path(path)
    if not (path / "fingerprints.jsonl").exists():
        raise DataError(f"{path} is not a fingerprint store")
    meta = json.loads((path / "meta.json").read_text()) if (path / "meta.json").exists() else {}
    if meta.get("schema", STORE_SCHEMA) != STORE_SCHEMA:
        raise DataError(f"unsupported store schema {meta.get('schema')}")
    registry, aps = read_registry(path / "radios.csv")
    locations = load_locations(path / "locations.json")
    fps = []
    for obj in _json_records(path / "fingerprints.jsonl"):
        scan = parse_scan(obj)
        fps.append(Fingerprint(scan.signals, int(scan.location), scan.device_id, scan.ts_ms))
    return Dataset(tuple(fps), locations, registry, aps)
