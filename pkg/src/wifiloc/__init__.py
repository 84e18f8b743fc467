"""
wifiloc: indoor localization from Wi-Fi RSSI fingerprints.

Six probabilistic classifiers are combined by a meta-learner that weights
each one, per location, by its validation informedness (Youden's J).  The
package also carries the evaluation harness (repeated splits, AP ablation,
subsampling), a per-visitor smoothing tracker, an HTTP service and a CLI.
"""
from .ensemble import (
    EnsembleConfig,
    LocalizerBundle,
    MetaLearner,
    combine_scores,
    load_bundle,
    localize,
    save_bundle,
    train_bundle,
    train_meta,
    youden_matrix,
)
from .errors import (
    DataError,
    FeatureSpaceMismatch,
    InsufficientDataError,
    TrainingError,
    UnrecognizedScanError,
    WifilocError,
)
from .fingerprints import Band, BandProfile, Dataset, FeatureSpace, Fingerprint

__version__ = "0.1.0"

__all__ = [
    "Band", "BandProfile", "DataError", "Dataset", "EnsembleConfig", "FeatureSpace",
    "FeatureSpaceMismatch", "Fingerprint", "InsufficientDataError", "LocalizerBundle",
    "MetaLearner", "TrainingError", "UnrecognizedScanError", "WifilocError", "combine_scores",
    "load_bundle", "localize", "save_bundle", "train_bundle", "train_meta", "youden_matrix",
]
