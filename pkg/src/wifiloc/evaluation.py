"""
Accuracy evaluation of the meta-learner.

Every evaluation trains a fresh meta-learner on a seeded 70/20/10 split and
measures it on the untouched test part.  Repeats use seeds
``base_seed, base_seed + 1, ...`` and are summarized by mean, quartiles
(linear interpolation), minimum and maximum.  On top of that sit the two
deployment-cost curves: accuracy against the number of APs (removing the most
redundant first) and against the fraction of fingerprints kept.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ensemble import EnsembleConfig, train_meta
from .errors import DataError
from .fingerprints import (
    DEFAULT_VISIBILITY_DBM,
    Band,
    BandProfile,
    Dataset,
    coverage_table,
    filter_to_band,
    redundancy_ranking,
    remove_aps,
    stratified_subsample,
    vectorize_many,
)

logger = logging.getLogger(__name__)

QUANTILE_METHOD = "linear"


@dataclass
class ConfusionMatrix:
    """Row ``i`` holds the fraction of test points of location ``labels[i]``
    assigned to each location; ``support`` counts those test points."""

    labels: tuple[int, ...]
    matrix: np.ndarray
    support: np.ndarray

    @classmethod
    def from_predictions(cls, truth, predicted, labels: Sequence[int]) -> "ConfusionMatrix":
        labels = tuple(int(v) for v in labels)
        pos = {lab: i for i, lab in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)))
        for t, p in zip(truth, predicted):
            counts[pos[int(t)], pos[int(p)]] += 1
        support = counts.sum(axis=1)
        rows = np.divide(counts, support[:, None], out=np.zeros_like(counts),
                         where=support[:, None] > 0)
        return cls(labels, rows, support)

    @property
    def accuracy(self) -> float:
        return float((np.diag(self.matrix) * self.support).sum() / self.support.sum())

    def off_diagonal_mass(self) -> dict[int, float]:
        return {lab: float(1.0 - self.matrix[i, i]) if self.support[i] > 0 else 0.0
                for i, lab in enumerate(self.labels)}

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "matrix": self.matrix.tolist(),
                "support": self.support.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionMatrix":
        return cls(tuple(d["labels"]), np.asarray(d["matrix"], dtype=float),
                   np.asarray(d["support"], dtype=float))


def mean_confusion(matrices: Sequence[ConfusionMatrix]) -> ConfusionMatrix:
    """Element-wise mean; each row is averaged over the runs that had test
    points for it."""
    labels = matrices[0].labels
    if any(m.labels != labels for m in matrices):
        raise DataError("confusion matrices have different label sets")
    stack = np.stack([m.matrix for m in matrices])
    has = np.stack([m.support > 0 for m in matrices])
    n = has.sum(axis=0)
    total = (stack * has[:, :, None]).sum(axis=0)
    mean = np.divide(total, n[:, None], out=np.zeros_like(total), where=n[:, None] > 0)
    return ConfusionMatrix(labels, mean, np.stack([m.support for m in matrices]).sum(axis=0))


@dataclass
class EvalStats:
    values: tuple[float, ...]

    def __post_init__(self):
        self.values = tuple(float(v) for v in self.values)
        if not self.values:
            raise ValueError("no values to summarize")

    @property
    def mean(self) -> float:
        # rounding can push the mean of equal values one ulp past them
        return float(np.clip(np.mean(self.values), min(self.values), max(self.values)))

    @property
    def q25(self) -> float:
        return float(np.quantile(self.values, 0.25, method=QUANTILE_METHOD))

    @property
    def q75(self) -> float:
        return float(np.quantile(self.values, 0.75, method=QUANTILE_METHOD))

    @property
    def min(self) -> float:
        return float(np.min(self.values))

    @property
    def max(self) -> float:
        return float(np.max(self.values))

    def summary(self) -> dict:
        return {"mean": self.mean, "q25": self.q25, "q75": self.q75,
                "min": self.min, "max": self.max, "count": len(self.values)}

    def to_dict(self) -> dict:
        return {"values": list(self.values), **self.summary()}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalStats":
        return cls(tuple(d["values"]))


@dataclass
class EvalResult:
    accuracy: float
    confusion: ConfusionMatrix
    val_accuracy: float
    model_accuracies: dict[str, float]
    seed: int


def _band_data(ds: Dataset, band: BandProfile) -> Dataset:
    return filter_to_band(ds, Band.GHZ24) if band is BandProfile.ONLY24 else ds


def evaluate_once(ds: Dataset, band: BandProfile | str = BandProfile.DUAL,
                  config: EnsembleConfig | None = None, seed: int = 0) -> EvalResult:
    """Train with ``seed`` and score the held-out test split."""
    band = BandProfile.parse(band) if not isinstance(band, BandProfile) else band
    data = _band_data(ds, band)
    meta = train_meta(data, band, config, seed)
    X = vectorize_many(data.fingerprints, meta.feature_space)
    te = meta.split["test"]
    truth = data.labels[te]
    pred = meta.predict(X[te])
    cm = ConfusionMatrix.from_predictions(truth, pred, meta.classes)
    per_model = {a: float((p == truth).mean()) for a, p in meta.model_predictions(X[te]).items()}
    return EvalResult(float((pred == truth).mean()), cm, meta.report["meta_val_accuracy"],
                      per_model, seed)


@dataclass
class RepeatedResult:
    stats: EvalStats
    confusion: ConfusionMatrix
    val_stats: EvalStats
    model_stats: dict[str, EvalStats]
    runs: list[EvalResult] = field(default_factory=list)


def _run(args):
    ds, band, config, seed = args
    return evaluate_once(ds, band, config, seed)


def _map(fn, jobs: list, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def summarize(runs: Sequence[EvalResult]) -> RepeatedResult:
    algs = runs[0].model_accuracies.keys()
    return RepeatedResult(
        stats=EvalStats(tuple(r.accuracy for r in runs)),
        confusion=mean_confusion([r.confusion for r in runs]),
        val_stats=EvalStats(tuple(r.val_accuracy for r in runs)),
        model_stats={a: EvalStats(tuple(r.model_accuracies[a] for r in runs)) for a in algs},
        runs=list(runs),
    )


def evaluate_repeated(ds: Dataset, band: BandProfile | str = BandProfile.DUAL,
                      config: EnsembleConfig | None = None, repeats: int = 10,
                      base_seed: int = 42, jobs: int = 1) -> RepeatedResult:
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    band = BandProfile.parse(band) if not isinstance(band, BandProfile) else band
    runs = _map(_run, [(ds, band, config, base_seed + i) for i in range(repeats)], jobs)
    return summarize(runs)


@dataclass
class CurvePoint:
    x: float
    stats: EvalStats
    confusion: ConfusionMatrix | None = None
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"x": self.x, "stats": self.stats.to_dict(), "info": self.info}
        if self.confusion is not None:
            d["confusion"] = self.confusion.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CurvePoint":
        cm = ConfusionMatrix.from_dict(d["confusion"]) if d.get("confusion") else None
        return cls(d["x"], EvalStats.from_dict(d["stats"]), cm, d.get("info", {}))


def ap_ablation(ds: Dataset, ap_counts: Iterable[int], config: EnsembleConfig | None = None,
                repeats: int = 10, base_seed: int = 42,
                band: BandProfile | str = BandProfile.DUAL,
                threshold: float = DEFAULT_VISIBILITY_DBM, jobs: int = 1) -> list[CurvePoint]:
    """Accuracy with the ``total - count`` most redundant APs removed."""
    ap_counts = [int(c) for c in ap_counts]
    total = len(ds.ap_radios)
    bad = [c for c in ap_counts if not 1 <= c <= total]
    if bad:
        raise DataError(f"AP counts {bad} outside [1, {total}]")
    ranking = redundancy_ranking(ds, threshold)
    points = []
    for count in ap_counts:
        removed = ranking[:total - count]
        sub = remove_aps(ds, removed)
        cov = coverage_table(sub, threshold)
        res = evaluate_repeated(sub, band, config, repeats, base_seed, jobs)
        points.append(CurvePoint(count, res.stats, res.confusion, {
            "removed_aps": removed,
            "min_covering_aps": min(cov.covering_counts.values()),
            "covering_aps": {str(k): v for k, v in cov.covering_counts.items()},
            "model_means": {a: s.mean for a, s in res.model_stats.items()},
        }))
    return points


def _subsample_run(args):
    ds, fraction, band, config, seed, sub_seed = args
    return evaluate_once(stratified_subsample(ds, fraction, sub_seed), band, config, seed)


def subsample_seed(base_seed: int, repeat: int, fraction: float) -> int:
    return int(np.random.SeedSequence([base_seed, repeat, int(round(fraction * 1e6))])
               .generate_state(1)[0])


def subsample_curve(ds: Dataset, fractions: Iterable[float], config: EnsembleConfig | None = None,
                    repeats: int = 10, base_seed: int = 42,
                    band: BandProfile | str = BandProfile.DUAL, jobs: int = 1) -> list[CurvePoint]:
    """Accuracy with a stratified random fraction of the fingerprints; each
    repeat draws a fresh subsample."""
    band = BandProfile.parse(band) if not isinstance(band, BandProfile) else band
    points = []
    for f in fractions:
        f = float(f)
        if not 0.0 < f <= 1.0:
            raise DataError(f"fraction {f} outside (0, 1]")
        jobs_ = [(ds, f, band, config, base_seed + i, subsample_seed(base_seed, i, f))
                 for i in range(repeats)]
        res = summarize(_map(_subsample_run, jobs_, jobs))
        points.append(CurvePoint(f, res.stats, res.confusion, {
            "fingerprints": sum(int(np.floor(f * n + 0.5)) for n in ds.counts().values()),
            "model_means": {a: s.mean for a, s in res.model_stats.items()},
        }))
    return points


# -- reports ------------------------------------------------------------------

@dataclass
class EvalReport:
    kind: str
    band: str
    repeats: int
    base_seed: int
    stats: EvalStats | None = None
    val_stats: EvalStats | None = None
    confusion: ConfusionMatrix | None = None
    model_stats: dict[str, EvalStats] = field(default_factory=dict)
    curve: list[CurvePoint] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @classmethod
    def from_repeated(cls, res: RepeatedResult, band, repeats, base_seed, config=None):
        return cls("evaluate", BandProfile(band).value, repeats, base_seed, res.stats,
                   res.val_stats, res.confusion, res.model_stats,
                   config=(config or EnsembleConfig()).to_dict())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "band": self.band, "repeats": self.repeats,
            "base_seed": self.base_seed, "quantile_method": QUANTILE_METHOD,
            "stats": self.stats.to_dict() if self.stats else None,
            "val_stats": self.val_stats.to_dict() if self.val_stats else None,
            "confusion": self.confusion.to_dict() if self.confusion else None,
            "model_stats": {a: s.to_dict() for a, s in self.model_stats.items()},
            "curve": [p.to_dict() for p in self.curve],
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            d["kind"], d["band"], d["repeats"], d["base_seed"],
            EvalStats.from_dict(d["stats"]) if d.get("stats") else None,
            EvalStats.from_dict(d["val_stats"]) if d.get("val_stats") else None,
            ConfusionMatrix.from_dict(d["confusion"]) if d.get("confusion") else None,
            {a: EvalStats.from_dict(s) for a, s in d.get("model_stats", {}).items()},
            [CurvePoint.from_dict(p) for p in d.get("curve", [])],
            d.get("config", {}),
        )


def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\predicted", *cm.labels])
        for lab, row in zip(cm.labels, cm.matrix):
            w.writerow([lab, *(repr(float(v)) for v in row)])


def write_curve_csv(points: Sequence[CurvePoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "mean", "q25", "q75", "min", "max", "count"])
        for p in points:
            s = p.stats.summary()
            w.writerow([p.x, *(repr(s[k]) for k in ("mean", "q25", "q75", "min", "max")), s["count"]])


def export_report(report: EvalReport, fmt: str, path) -> list[Path]:
    """Write ``report``.  ``json`` writes one file at ``path``; ``csv`` treats
    ``path`` as a directory and writes ``confusion.csv``, ``curve.csv`` and
    ``accuracy.csv`` as applicable.  Returns the written paths."""
    path = Path(path)
    if fmt == "json":
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report.to_dict(), indent=1) + "\n")
        return [path]
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    path.mkdir(parents=True, exist_ok=True)
    written = []
    if report.confusion is not None:
        write_confusion_csv(report.confusion, path / "confusion.csv")
        written.append(path / "confusion.csv")
    if report.curve:
        write_curve_csv(report.curve, path / "curve.csv")
        written.append(path / "curve.csv")
        for p in report.curve:
            if p.confusion is not None:
                name = f"confusion_x{p.x:g}.csv"
                write_confusion_csv(p.confusion, path / name)
                written.append(path / name)
    if report.stats is not None:
        with open(path / "accuracy.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            names = ["meta", *report.model_stats]
            w.writerow(["repeat", *names])
            cols = [report.stats.values, *(s.values for s in report.model_stats.values())]
            for i, row in enumerate(zip(*cols)):
                w.writerow([i, *(repr(v) for v in row)])
        written.append(path / "accuracy.csv")
    return written


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))
