"""Common interface and persistence for the probabilistic classifiers."""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path
from typing import Any, ClassVar

import numpy as np

from ..errors import DataError, FeatureSpaceMismatch, TrainingError

MODEL_FORMAT_VERSION = 1


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def argmax_lowest(P: np.ndarray) -> np.ndarray:
    # np.argmax already returns the first maximal column; columns are sorted labels
    return np.argmax(P, axis=-1)


class ProbabilisticClassifier:
    """Multiclass classifier producing a distribution over training labels.

    Subclasses set ``algorithm_id`` and ``defaults`` and implement
    ``_fit(X, codes, rng)``, ``_proba(X)`` and the state hooks.  Labels are
    integers; ``classes_`` holds them sorted, and column ``j`` of
    :meth:`predict_proba` is the probability of ``classes_[j]``.
    """

    algorithm_id: ClassVar[str] = ""
    defaults: ClassVar[dict[str, Any]] = {}

    def __init__(self, **hyperparameters):
        unknown = set(hyperparameters) - set(self.defaults)
        if unknown:
            raise ValueError(f"{self.algorithm_id}: unknown hyperparameters {sorted(unknown)}")
        self.params = {**self.defaults, **hyperparameters}
        self.classes_: np.ndarray | None = None
        self.n_features_: int | None = None

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"

    # -- training -----------------------------------------------------
    def fit(self, X, y, seed: int = 0) -> "ProbabilisticClassifier":
        try:
            X = np.asarray(X, dtype=np.float64)
        except ValueError:
            raise DataError("feature vectors have inconsistent lengths") from None
        y = np.asarray(y)
        if X.ndim != 2:
            raise DataError("training features must be a 2-D array (one row per vector)")
        if len(X) != len(y):
            raise DataError(f"{len(X)} vectors but {len(y)} labels")
        if not np.isfinite(X).all():
            raise DataError("training features contain non-finite values")
        classes, codes = np.unique(y, return_inverse=True)
        if len(classes) < 2:
            raise TrainingError("at least two distinct labels are required")
        self.classes_ = classes.astype(np.int64)
        self.n_features_ = X.shape[1]
        self._fit(X, codes.astype(np.int64), np.random.default_rng(seed))
        return self

    def _fit(self, X: np.ndarray, codes: np.ndarray, rng: np.random.Generator) -> None:
        raise NotImplementedError

    # -- inference ----------------------------------------------------
    def _check(self, X) -> tuple[np.ndarray, bool]:
        if self.classes_ is None:
            raise TrainingError(f"{self.algorithm_id} model is not fitted")
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features_:
            raise FeatureSpaceMismatch(
                f"expected vectors of length {self.n_features_}, got {X.shape[1]}")
        return X, single

    def predict_proba(self, X) -> np.ndarray:
        X, single = self._check(X)
        P = self._proba(X)
        return P[0] if single else P

    def _proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X):
        P = self.predict_proba(X)
        return self.classes_[argmax_lowest(P)]

    def distribution(self, x) -> dict[int, float]:
        p = self.predict_proba(np.asarray(x, dtype=np.float64).reshape(-1))
        return {int(c): float(v) for c, v in zip(self.classes_, p)}

    # -- persistence --------------------------------------------------
    def get_state(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        raise NotImplementedError

    def to_arrays(self, prefix: str = "") -> tuple[dict, dict[str, np.ndarray]]:
        """Split the trained model into a JSON header and named arrays."""
        header = {"algorithm_id": self.algorithm_id, "hyperparameters": self.params,
                  "classes": [int(c) for c in self.classes_], "n_features": self.n_features_}
        arrays = {prefix + k: np.asarray(v) for k, v in self.get_state().items()}
        return header, arrays

    @classmethod
    def from_arrays(cls, header: dict, arrays: dict[str, np.ndarray], prefix: str = ""):
        model = cls(**header["hyperparameters"])
        model.classes_ = np.asarray(header["classes"], dtype=np.int64)
        model.n_features_ = int(header["n_features"])
        model.set_state({k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)})
        return model


def write_container(path_or_file, header: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a self-describing ``.npz``: arrays plus a ``__header__`` JSON entry.

    Entries carry a fixed timestamp so identical content gives identical bytes.
    """
    payload = dict(arrays)
    payload["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)

    def write(fh):
        with zipfile.ZipFile(fh, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            for name, arr in payload.items():
                info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
                info.compress_type = zipfile.ZIP_DEFLATED
                with zf.open(info, "w", force_zip64=True) as out:
                    np.lib.format.write_array(out, np.asanyarray(arr), allow_pickle=False)

    if isinstance(path_or_file, (str, Path)):
        with open(path_or_file, "wb") as fh:
            write(fh)
    else:
        write(path_or_file)


def read_container(path_or_file) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with np.load(path_or_file, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (zipfile.BadZipFile, ValueError, OSError) as exc:
        raise DataError(f"not a model container: {exc}") from None
    if "__header__" not in arrays:
        raise DataError("model container has no header")
    header = json.loads(arrays.pop("__header__").tobytes().decode())
    return header, arrays


def save_model(model: ProbabilisticClassifier, path, space_digest: str | None = None) -> None:
    header, arrays = model.to_arrays()
    header.update(format="wifiloc-model", version=MODEL_FORMAT_VERSION, feature_space=space_digest)
    write_container(path, header, arrays)


def load_model(path, space_digest: str | None = None) -> ProbabilisticClassifier:
    from . import ALGORITHMS

    header, arrays = read_container(path)
    if header.get("format") != "wifiloc-model":
        raise DataError("container does not hold a single classifier")
    if header.get("version") != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model version {header.get('version')}")
    if space_digest is not None and header.get("feature_space") != space_digest:
        raise FeatureSpaceMismatch(
            f"model was trained on feature space {header.get('feature_space')}, not {space_digest}")
    return ALGORITHMS[header["algorithm_id"]].from_arrays(header, arrays)


def dumps_model(model: ProbabilisticClassifier, space_digest: str | None = None) -> bytes:
    buf = io.BytesIO()
    save_model(model, buf, space_digest)
    return buf.getvalue()


def loads_model(blob: bytes, space_digest: str | None = None) -> ProbabilisticClassifier:
    return load_model(io.BytesIO(blob), space_digest)
