"""
Fingerprint domain model.

A fingerprint is one Wi-Fi scan: a mapping from radio MAC address to RSSI in
dBm, optionally labeled with the location where it was taken.  This module
holds the immutable data types, the dense feature encoding used by every
classifier, band handling for 2.4 GHz-only devices, dataset splitting and
subsampling, AP removal and the AP coverage / redundancy analysis.

Every function here is a pure function of its inputs (plus an explicit seed
where randomness is involved).
"""
from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, InsufficientDataError, UnrecognizedScanError

logger = logging.getLogger(__name__)

RSSI_MIN = -100.0
RSSI_MAX = 0.0
DEFAULT_SENTINEL = -100.0
DEFAULT_VISIBILITY_DBM = -90.0

_MAC_RE = re.compile(r"^([0-9a-f]{2}:){5}[0-9a-f]{2}$")
_HEX_RE = re.compile(r"[^0-9a-fA-F]")


class Band(str, Enum):
    GHZ24 = "2.4"
    GHZ5 = "5"

    @classmethod
    def parse(cls, value) -> "Band":
        text = str(value).strip().lower().replace("ghz", "").strip()
        if text in ("2.4", "2", "24", "2g", "2.4g"):
            return cls.GHZ24
        if text in ("5", "5.0", "5g"):
            return cls.GHZ5
        raise DataError(f"unknown band {value!r}")


class BandProfile(str, Enum):
    DUAL = "dual"
    ONLY24 = "2.4-only"

    @classmethod
    def parse(cls, value) -> "BandProfile":
        text = str(value).strip().lower()
        if text in ("dual", "dualband", "both"):
            return cls.DUAL
        if text in ("2.4", "2.4-only", "only24", "24", "band24only"):
            return cls.ONLY24
        raise DataError(f"unknown band profile {value!r}")


def normalize_mac(mac: str) -> str:
    """Return ``mac`` as lowercase, colon-separated hex octets."""
    digits = _HEX_RE.sub("", str(mac)).lower()
    if len(digits) != 12:
        raise DataError(f"malformed MAC address {mac!r}")
    return ":".join(digits[i:i + 2] for i in range(0, 12, 2))


def default_ap_id(mac: str) -> str:
    # multi-radio APs usually share the first five octets
    return mac[:14]


@dataclass(frozen=True)
class RadioId:
    mac: str
    band: Band

    def __post_init__(self):
        if not _MAC_RE.match(self.mac):
            raise DataError(f"MAC {self.mac!r} is not normalized")


@dataclass(frozen=True)
class Fingerprint:
    """One scan.  ``signals`` maps normalized MAC -> RSSI (dBm)."""

    signals: Mapping[str, float]
    location: int | None = None
    device_id: str = ""
    ts_ms: int = 0

    def __post_init__(self):
        if not self.signals:
            raise DataError("fingerprint has no signals")
        for mac, rssi in self.signals.items():
            if not _MAC_RE.match(mac):
                raise DataError(f"MAC {mac!r} is not normalized")
            if not (RSSI_MIN <= rssi <= RSSI_MAX):
                raise DataError(f"RSSI {rssi} for {mac} outside [{RSSI_MIN}, {RSSI_MAX}]")

    def with_signals(self, signals: Mapping[str, float]) -> "Fingerprint":
        return Fingerprint(dict(signals), self.location, self.device_id, self.ts_ms)


@dataclass(frozen=True)
class Dataset:
    """Labeled fingerprints plus the location set and radio registry.

    ``aps`` maps each radio MAC to the access point exposing it; radios
    missing from it are grouped by their first five octets.
    """

    fingerprints: tuple[Fingerprint, ...]
    locations: Mapping[int, str]
    registry: Mapping[str, Band]
    aps: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "fingerprints", tuple(self.fingerprints))
        aps = {mac: self.aps.get(mac, default_ap_id(mac)) for mac in self.registry}
        object.__setattr__(self, "aps", aps)
        for fp in self.fingerprints:
            if fp.location not in self.locations:
                raise DataError(f"fingerprint location {fp.location!r} is not registered")
            for mac in fp.signals:
                if mac not in self.registry:
                    raise DataError(f"radio {mac} is not in the registry")

    def __len__(self) -> int:
        return len(self.fingerprints)

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([fp.location for fp in self.fingerprints], dtype=np.int64)

    @cached_property
    def ap_radios(self) -> dict[str, tuple[str, ...]]:
        """AP id -> sorted radio MACs."""
        out: dict[str, list[str]] = {}
        for mac, ap in self.aps.items():
            out.setdefault(ap, []).append(mac)
        return {ap: tuple(sorted(macs)) for ap, macs in sorted(out.items())}

    def bands(self) -> set[Band]:
        return set(self.registry.values())

    def counts(self) -> dict[int, int]:
        labels, counts = np.unique(self.labels, return_counts=True)
        return {int(k): int(v) for k, v in zip(labels, counts)}

    def subset(self, indices: Iterable[int]) -> "Dataset":
        fps = self.fingerprints
        return Dataset(tuple(fps[i] for i in indices), self.locations, self.registry, self.aps)


@dataclass(frozen=True)
class FeatureSpace:
    """Ordered radio list defining the dense encoding of a fingerprint."""

    radios: tuple[RadioId, ...]
    sentinel: float = DEFAULT_SENTINEL

    def __post_init__(self):
        object.__setattr__(self, "radios", tuple(self.radios))
        macs = [r.mac for r in self.radios]
        if macs != sorted(set(macs)):
            raise DataError("feature space radios must be sorted and unique")
        if self.sentinel > RSSI_MIN:
            raise DataError(f"sentinel {self.sentinel} must not exceed {RSSI_MIN} dBm")

    def __len__(self) -> int:
        return len(self.radios)

    @cached_property
    def macs(self) -> tuple[str, ...]:
        return tuple(r.mac for r in self.radios)

    @cached_property
    def index(self) -> dict[str, int]:
        return {mac: i for i, mac in enumerate(self.macs)}

    @cached_property
    def digest(self) -> str:
        """Hash of the ordered MAC list; identifies compatible models."""
        return hashlib.sha256(",".join(self.macs).encode()).hexdigest()[:16]

    def bands(self) -> set[Band]:
        return {r.band for r in self.radios}


def canonical_feature_space(ds: Dataset, sentinel: float = DEFAULT_SENTINEL) -> FeatureSpace:
    if len(ds) == 0:
        raise DataError("cannot build a feature space from an empty dataset")
    radios = [RadioId(mac, ds.registry[mac]) for mac in sorted(ds.registry)]
    return FeatureSpace(tuple(radios), sentinel)


def vectorize(fp: Fingerprint, space: FeatureSpace) -> np.ndarray:
    """Dense vector for ``fp``; radios unseen in the scan take the sentinel.

    Radios of the scan that are absent from ``space`` are ignored (see
    :func:`unknown_radios`).
    """
    if len(space) == 0:
        raise DataError("empty feature space")
    vec = np.full(len(space), space.sentinel, dtype=np.float64)
    index = space.index
    for mac, rssi in fp.signals.items():
        i = index.get(mac)
        if i is not None:
            vec[i] = rssi
    return vec


def unknown_radios(fp: Fingerprint, space: FeatureSpace) -> int:
    index = space.index
    return sum(1 for mac in fp.signals if mac not in index)


def vectorize_many(fps: Sequence[Fingerprint], space: FeatureSpace) -> np.ndarray:
    X = np.full((len(fps), len(space)), space.sentinel, dtype=np.float64)
    index = space.index
    for row, fp in enumerate(fps):
        for mac, rssi in fp.signals.items():
            i = index.get(mac)
            if i is not None:
                X[row, i] = rssi
    return X


def detect_band_profile(fp: Fingerprint, registry: Mapping[str, Band]) -> BandProfile:
    known = [registry[mac] for mac in fp.signals if mac in registry]
    if not known:
        raise UnrecognizedScanError("scan contains no known radio")
    return BandProfile.DUAL if Band.GHZ5 in known else BandProfile.ONLY24


def _drop_radios(ds: Dataset, keep: set[str], what: str) -> Dataset:
    kept, dropped = [], 0
    for fp in ds.fingerprints:
        signals = {mac: v for mac, v in fp.signals.items() if mac in keep}
        if not signals:
            dropped += 1
            continue
        kept.append(fp if len(signals) == len(fp.signals) else fp.with_signals(signals))
    if not kept:
        raise DataError(f"{what} left no fingerprints")
    if dropped:
        logger.info("%s dropped %d empty fingerprints", what, dropped)
    registry = {mac: b for mac, b in ds.registry.items() if mac in keep}
    aps = {mac: ds.aps[mac] for mac in registry}
    return Dataset(tuple(kept), ds.locations, registry, aps)


def filter_to_band(ds: Dataset, band: Band) -> Dataset:
    """Keep only radios of ``band``; scans left empty are dropped."""
    band = Band(band)
    keep = {mac for mac, b in ds.registry.items() if b == band}
    return _drop_radios(ds, keep, f"band filter {band.value} GHz")


def remove_aps(ds: Dataset, aps: Iterable[str]) -> Dataset:
    """Remove every radio belonging to the given access points."""
    aps = set(aps)
    radios = ds.ap_radios
    unknown = aps - set(radios)
    if unknown:
        raise DataError(f"unknown AP identifiers: {sorted(unknown)}")
    if not aps:
        return ds
    gone = {mac for ap in aps for mac in radios[ap]}
    keep = set(ds.registry) - gone
    if not keep:
        raise DataError("removing these APs leaves no radios")
    return _drop_radios(ds, keep, f"removal of {len(aps)} APs")


def _by_location(labels: np.ndarray) -> dict[int, np.ndarray]:
    return {int(loc): np.flatnonzero(labels == loc) for loc in np.unique(labels)}


def split_indices(labels: np.ndarray, ratios=(0.7, 0.2, 0.1), seed: int = 0):
    """Stratified train/validation/test index split.

    Within each location the validation and test parts get
    ``floor(ratio * n)`` fingerprints (at least one each) and the training
    part takes the remainder.  Returns three sorted index arrays.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must be three positive numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    for loc, idx in _by_location(np.asarray(labels)).items():
        n = len(idx)
        if n < 3:
            raise InsufficientDataError(f"location {loc} has {n} fingerprints; at least 3 are needed")
        n_val = max(1, int(np.floor(n * ratios[1] + 1e-9)))
        n_test = max(1, int(np.floor(n * ratios[2] + 1e-9)))
        n_train = n - n_val - n_test
        if n_train < 1:
            raise InsufficientDataError(f"location {loc} is too small for ratios {ratios}")
        perm = rng.permutation(idx)
        parts[0].append(perm[:n_train])
        parts[1].append(perm[n_train:n_train + n_val])
        parts[2].append(perm[n_train + n_val:])
    return tuple(np.sort(np.concatenate(p)) for p in parts)


def split_dataset(ds: Dataset, ratios=(0.7, 0.2, 0.1), seed: int = 0):
    return tuple(ds.subset(idx) for idx in split_indices(ds.labels, ratios, seed))


def stratified_subsample(ds: Dataset, fraction: float, seed: int = 0) -> Dataset:
    """Keep ``round(fraction * n)`` random fingerprints of every location."""
    if not (0.0 < fraction <= 1.0):
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return ds
    rng = np.random.default_rng(seed)
    chosen = []
    for loc, idx in _by_location(ds.labels).items():
        keep = int(np.floor(fraction * len(idx) + 0.5))
        if keep == 0:
            raise InsufficientDataError(f"fraction {fraction} keeps no fingerprint at location {loc}")
        chosen.append(rng.choice(idx, size=keep, replace=False))
    return ds.subset(np.sort(np.concatenate(chosen)))


def _ap_matrix(ds: Dataset, sentinel: float = DEFAULT_SENTINEL):
    """Per-fingerprint strongest RSSI of each AP (sentinel when unseen)."""
    aps = list(ds.ap_radios)
    col = {mac: j for j, ap in enumerate(aps) for mac in ds.ap_radios[ap]}
    M = np.full((len(ds), len(aps)), sentinel, dtype=np.float64)
    for row, fp in enumerate(ds.fingerprints):
        for mac, rssi in fp.signals.items():
            j = col[mac]
            if rssi > M[row, j]:
                M[row, j] = rssi
    return aps, M


@dataclass(frozen=True)
class CoverageTable:
    """Fraction of each location's scans in which each AP is visible."""

    locations: tuple[int, ...]
    aps: tuple[str, ...]
    ratio: np.ndarray                # (locations, aps)
    threshold: float
    min_ratio: float = 0.5

    @property
    def covered(self) -> np.ndarray:
        return self.ratio >= self.min_ratio

    @property
    def covering_counts(self) -> dict[int, int]:
        return {loc: int(n) for loc, n in zip(self.locations, self.covered.sum(axis=1))}

    def __getitem__(self, key) -> float:
        loc, ap = key
        return float(self.ratio[self.locations.index(loc), self.aps.index(ap)])


def coverage_table(ds: Dataset, visibility_threshold: float = DEFAULT_VISIBILITY_DBM,
                   min_ratio: float = 0.5) -> CoverageTable:
    aps, M = _ap_matrix(ds)
    visible = M > visibility_threshold
    groups = _by_location(ds.labels)
    locs = tuple(sorted(groups))
    ratio = np.vstack([visible[groups[loc]].mean(axis=0) for loc in locs]) if locs \
        else np.zeros((0, len(aps)))
    return CoverageTable(locs, tuple(aps), ratio, visibility_threshold, min_ratio)


def redundancy_ranking(ds: Dataset, threshold: float = DEFAULT_VISIBILITY_DBM) -> list[str]:
    """Order APs from most to least redundant.

    Greedy: at each step drop the AP whose removal keeps the minimum
    per-location count of covering APs highest.  Ties go to the AP most
    correlated (mean Pearson RSSI correlation) with the remaining ones, then
    to the lexicographically smallest MAC.
    """
    table = coverage_table(ds, threshold)
    aps, M = _ap_matrix(ds)
    covered = table.covered.astype(np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(M, rowvar=False) if len(aps) > 1 else np.ones((1, 1))
    corr = np.nan_to_num(np.atleast_2d(corr), nan=0.0)
    first_mac = [ds.ap_radios[ap][0] for ap in aps]

    remaining = list(range(len(aps)))
    order = []
    while len(remaining) > 1:
        counts = covered[:, remaining].sum(axis=1)
        best, best_key = None, None
        for j in remaining:
            min_cov = int((counts - covered[:, j]).min()) if len(counts) else 0
            others = [k for k in remaining if k != j]
            # rounded so mirror-image APs tie exactly
            mean_corr = round(float(corr[j, others].mean()), 12)
            key = (-min_cov, -mean_corr, first_mac[j])
            if best_key is None or key < best_key:
                best, best_key = j, key
        order.append(best)
        remaining.remove(best)
    order.extend(remaining)
    return [aps[j] for j in order]
