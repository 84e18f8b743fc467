"""
Youden-weighted meta-learner.

Six classifiers are trained on the same split.  On the validation part each
algorithm ``w`` gets, for every location ``y``, its informedness::

    J(w, y) = sensitivity(w, y) + specificity(w, y) - 1

and a new scan ``x`` is scored per location by::

    Q_y(x) = sum_w J(w, y) * P_w(y | x)

The location with the highest score wins (lowest location id on ties).
Negative informedness is clamped to zero by default so a model that is worse
than chance on a class cannot veto it; ``clamp_negative_youden=False`` gives
the plain weighted sum.

2.4 GHz-only devices never report 5 GHz radios, so a :class:`LocalizerBundle`
carries a second meta-learner trained on 2.4 GHz features only and routes each
scan by its band profile.
"""
from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .classifiers import ALGORITHM_ORDER, ALGORITHMS, make_classifier
from .classifiers.base import read_container, write_container
from .errors import DataError, FeatureSpaceMismatch, TrainingError
from .fingerprints import (
    DEFAULT_SENTINEL,
    Band,
    BandProfile,
    Dataset,
    FeatureSpace,
    Fingerprint,
    RadioId,
    canonical_feature_space,
    detect_band_profile,
    filter_to_band,
    split_indices,
    vectorize,
    vectorize_many,
)

logger = logging.getLogger(__name__)

BUNDLE_FORMAT_VERSION = 1


@dataclass
class EnsembleConfig:
    algorithms: tuple[str, ...] = ALGORITHM_ORDER
    hyperparameters: dict[str, dict] = field(default_factory=dict)
    clamp_negative_youden: bool = True
    sentinel: float = DEFAULT_SENTINEL
    split: tuple[float, float, float] = (0.7, 0.2, 0.1)
    jobs: int = 1

    def __post_init__(self):
        self.algorithms = tuple(self.algorithms)
        self.split = tuple(float(r) for r in self.split)
        unknown = set(self.algorithms) - set(ALGORITHMS)
        unknown |= set(self.hyperparameters) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms: {sorted(unknown)}")
        if not self.algorithms:
            raise ValueError("at least one algorithm is required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithms"] = list(self.algorithms)
        d["split"] = list(self.split)
        return d

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "EnsembleConfig":
        return cls(**dict(d or {}))


# -- informedness -------------------------------------------------------------

def sensitivity(predictions, labels, y) -> float:
    """TP / (TP + FN) for class ``y``; NaN when ``y`` never occurs in labels."""
    p, t = np.asarray(predictions), np.asarray(labels)
    if len(p) != len(t) or len(t) == 0:
        raise ValueError("predictions and labels must have the same non-zero length")
    pos = t == y
    if not pos.any():
        return math.nan
    return float((p[pos] == y).sum() / pos.sum())


def specificity(predictions, labels, y) -> float:
    """TN / (TN + FP) for class ``y``; NaN when every label is ``y``."""
    p, t = np.asarray(predictions), np.asarray(labels)
    if len(p) != len(t) or len(t) == 0:
        raise ValueError("predictions and labels must have the same non-zero length")
    neg = t != y
    if not neg.any():
        return math.nan
    return float((p[neg] != y).sum() / neg.sum())


def youden(sens: float, spec: float) -> float:
    return sens + spec - 1.0


def youden_matrix(predictions: Sequence[np.ndarray], labels: np.ndarray,
                  classes: Sequence[int]) -> np.ndarray:
    """J for every (model, class); undefined entries become 0 with a warning."""
    J = np.zeros((len(predictions), len(classes)))
    for i, pred in enumerate(predictions):
        for j, c in enumerate(classes):
            se, sp = sensitivity(pred, labels, c), specificity(pred, labels, c)
            if math.isnan(se) or math.isnan(sp):
                logger.warning("informedness undefined for model %d, location %s; using 0", i, c)
                continue
            J[i, j] = youden(se, sp)
    return J


def combine_scores(J: np.ndarray, probas: Sequence[np.ndarray], clamp: bool = True) -> np.ndarray:
    """Q = sum over models of weight * probability, per class.

    ``probas`` holds one (n, C) or (C,) array per model, rows of ``J`` in
    the same order.
    """
    W = np.maximum(J, 0.0) if clamp else J
    P = np.stack([np.asarray(p, dtype=np.float64) for p in probas])
    return np.einsum("mc,m...c->...c", W, P)


# -- meta-learner ---------------------------------------------------------------

@dataclass
class MetaLearner:
    band_profile: BandProfile
    feature_space: FeatureSpace
    models: tuple
    algorithms: tuple[str, ...]
    classes: np.ndarray
    youden: np.ndarray
    clamp_negative_youden: bool = True
    report: dict = field(default_factory=dict)
    split: dict[str, np.ndarray] = field(default_factory=dict)

    def model_probas(self, X) -> list[np.ndarray]:
        return [m.predict_proba(X) for m in self.models]

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != len(self.feature_space):
            raise FeatureSpaceMismatch(
                f"expected vectors of length {len(self.feature_space)}, got {X.shape[-1]}")
        return combine_scores(self.youden, self.model_probas(X), self.clamp_negative_youden)

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.scores(X), axis=-1)]

    def model_predictions(self, X) -> dict[str, np.ndarray]:
        return {a: m.predict(X) for a, m in zip(self.algorithms, self.models)}


def score(meta: MetaLearner, x) -> dict[int, float]:
    """Per-location Q values for one feature vector."""
    q = meta.scores(np.asarray(x, dtype=np.float64).reshape(-1))
    return {int(c): float(v) for c, v in zip(meta.classes, q)}


def _model_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def train_meta(ds: Dataset, band: BandProfile | str = BandProfile.DUAL,
               config: EnsembleConfig | None = None, seed: int = 0) -> MetaLearner:
    """Split 70/20/10, fit every algorithm on the training part and weight
    them by validation informedness.  Split indices refer to ``ds``."""
    config = config or EnsembleConfig()
    band = BandProfile.parse(band) if not isinstance(band, BandProfile) else band
    if band is BandProfile.ONLY24 and Band.GHZ5 in ds.bands():
        raise DataError("a 2.4 GHz-only meta-learner needs a dataset filtered to 2.4 GHz")
    space = canonical_feature_space(ds, config.sentinel)
    X = vectorize_many(ds.fingerprints, space)
    y = ds.labels
    tr, va, te = split_indices(y, config.split, seed)

    def fit(i_alg):
        i, alg = i_alg
        model = make_classifier(alg, **config.hyperparameters.get(alg, {}))
        try:
            return model.fit(X[tr], y[tr], seed=_model_seed(seed, i))
        except (TrainingError, DataError):
            raise
        except Exception as exc:  # numerical failure inside a learner
            raise TrainingError(f"{alg} failed to train: {exc}") from exc

    jobs = list(enumerate(config.algorithms))
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            models = tuple(pool.map(fit, jobs))
    else:
        models = tuple(fit(j) for j in jobs)

    classes = np.unique(y[tr])
    val_preds = [m.predict(X[va]) for m in models]
    J = youden_matrix(val_preds, y[va], classes)
    meta = MetaLearner(band, space, models, tuple(config.algorithms), classes, J,
                       config.clamp_negative_youden)
    meta.split = {"train": tr, "val": va, "test": te}
    meta.report = {
        "sizes": {"train": int(len(tr)), "val": int(len(va)), "test": int(len(te))},
        "val_accuracy": {a: float((p == y[va]).mean()) for a, p in zip(meta.algorithms, val_preds)},
        "meta_val_accuracy": float((meta.predict(X[va]) == y[va]).mean()),
        "seed": int(seed),
    }
    return meta


# -- bundle -------------------------------------------------------------------

@dataclass
class Localization:
    location: int
    scores: dict[int, float]
    band: BandProfile


@dataclass
class LocalizerBundle:
    dual: MetaLearner
    only24: MetaLearner
    registry: dict[str, Band]
    locations: dict[int, str]
    config: EnsembleConfig
    seed: int

    def meta_for(self, profile: BandProfile) -> MetaLearner:
        return self.dual if profile is BandProfile.DUAL else self.only24


def localize(bundle: LocalizerBundle, fp: Fingerprint) -> Localization:
    """Route ``fp`` by band profile and return the highest-scoring location."""
    profile = detect_band_profile(fp, bundle.registry)
    meta = bundle.meta_for(profile)
    q = meta.scores(vectorize(fp, meta.feature_space))
    best = int(meta.classes[int(np.argmax(q))])
    return Localization(best, {int(c): float(v) for c, v in zip(meta.classes, q)}, profile)


def holdout_accuracy(meta: MetaLearner, ds: Dataset) -> float:
    """Accuracy on the test part of the split ``meta`` was trained with;
    ``ds`` must be the dataset it was trained on."""
    idx = meta.split.get("test")
    if idx is None or len(idx) == 0:
        return float("nan")
    pred = meta.predict(vectorize_many([ds.fingerprints[i] for i in idx], meta.feature_space))
    return float(np.mean(pred == ds.labels[idx]))


def train_bundle(ds: Dataset, config: EnsembleConfig | None = None, seed: int = 0) -> LocalizerBundle:
    if ds.bands() != {Band.GHZ24, Band.GHZ5}:
        raise DataError("a localizer bundle needs radios in both bands")
    config = config or EnsembleConfig()
    dual = train_meta(ds, BandProfile.DUAL, config, seed)
    only24 = train_meta(filter_to_band(ds, Band.GHZ24), BandProfile.ONLY24, config, seed)
    return LocalizerBundle(dual, only24, dict(ds.registry), dict(ds.locations), config, seed)


def _meta_header(meta: MetaLearner, prefix: str, arrays: dict) -> dict:
    models = []
    for i, model in enumerate(meta.models):
        h, a = model.to_arrays(f"{prefix}m{i}/")
        models.append(h)
        arrays.update(a)
    arrays[f"{prefix}youden"] = meta.youden
    for part, idx in meta.split.items():
        arrays[f"{prefix}split/{part}"] = np.asarray(idx)
    return {
        "band_profile": meta.band_profile.value,
        "feature_space": {"macs": list(meta.feature_space.macs),
                          "bands": [r.band.value for r in meta.feature_space.radios],
                          "sentinel": meta.feature_space.sentinel,
                          "digest": meta.feature_space.digest},
        "algorithms": list(meta.algorithms),
        "classes": [int(c) for c in meta.classes],
        "clamp_negative_youden": meta.clamp_negative_youden,
        "report": meta.report,
        "models": models,
    }


def _meta_from(header: dict, arrays: dict, prefix: str) -> MetaLearner:
    fs = header["feature_space"]
    space = FeatureSpace(tuple(RadioId(m, Band(b)) for m, b in zip(fs["macs"], fs["bands"])),
                         fs["sentinel"])
    if space.digest != fs["digest"]:
        raise FeatureSpaceMismatch("stored feature space does not match its digest")
    models = []
    for i, mh in enumerate(header["models"]):
        if mh["n_features"] != len(space):
            raise FeatureSpaceMismatch(f"model {mh['algorithm_id']} expects {mh['n_features']} features")
        models.append(ALGORITHMS[mh["algorithm_id"]].from_arrays(mh, arrays, f"{prefix}m{i}/"))
    split = {k.split("/")[-1]: v for k, v in arrays.items() if k.startswith(f"{prefix}split/")}
    return MetaLearner(BandProfile(header["band_profile"]), space, tuple(models),
                       tuple(header["algorithms"]), np.asarray(header["classes"], dtype=np.int64),
                       arrays[f"{prefix}youden"], header["clamp_negative_youden"],
                       header["report"], split)


def save_bundle(bundle: LocalizerBundle, path_or_file) -> None:
    """Write both meta-learners, their informedness matrices, feature-space
    digests, the config echo and the training seed to one container."""
    arrays: dict[str, np.ndarray] = {}
    header = {
        "format": "wifiloc-bundle",
        "version": BUNDLE_FORMAT_VERSION,
        "seed": int(bundle.seed),
        "config": bundle.config.to_dict(),
        "registry": {m: Band(b).value for m, b in sorted(bundle.registry.items())},
        "locations": {str(k): v for k, v in sorted(bundle.locations.items())},
        "dual": _meta_header(bundle.dual, "dual/", arrays),
        "only24": _meta_header(bundle.only24, "only24/", arrays),
    }
    write_container(path_or_file, header, arrays)


def load_bundle(path_or_file) -> LocalizerBundle:
    header, arrays = read_container(path_or_file)
    if header.get("format") != "wifiloc-bundle":
        raise DataError("container does not hold a localizer bundle")
    if header.get("version") != BUNDLE_FORMAT_VERSION:
        raise DataError(f"unsupported bundle version {header.get('version')}")
    return LocalizerBundle(
        dual=_meta_from(header["dual"], arrays, "dual/"),
        only24=_meta_from(header["only24"], arrays, "only24/"),
        registry={m: Band(b) for m, b in header["registry"].items()},
        locations={int(k): v for k, v in header["locations"].items()},
        config=EnsembleConfig.from_dict(header["config"]),
        seed=header["seed"],
    )


def bundle_bytes(bundle: LocalizerBundle) -> bytes:
    buf = io.BytesIO()
    save_bundle(bundle, buf)
    return buf.getvalue()


def bundle_from_bytes(blob: bytes) -> LocalizerBundle:
    return load_bundle(io.BytesIO(blob))


def save_bundle_file(bundle: LocalizerBundle, path) -> Path:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        save_bundle(bundle, fh)
    tmp.replace(path)
    return path
