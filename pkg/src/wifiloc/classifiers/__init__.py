"""The six probabilistic classifiers combined by the ensemble."""
from .adaboost import AdaBoost
from .base import (
    ProbabilisticClassifier,
    dumps_model,
    load_model,
    loads_model,
    save_model,
)
from .forest import RandomForest
from .knn import KNN
from .mlp import MLP
from .svm import LinearSVM
from .tree import DecisionTree

# fixed order: the rows of the Youden matrix follow it
ALGORITHMS = {
    cls.algorithm_id: cls
    for cls in (KNN, DecisionTree, RandomForest, AdaBoost, MLP, LinearSVM)
}
ALGORITHM_ORDER = tuple(ALGORITHMS)


def make_classifier(algorithm: str, **hyperparameters) -> ProbabilisticClassifier:
    try:
        cls = ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHM_ORDER}") from None
    return cls(**hyperparameters)


__all__ = [
    "ALGORITHMS", "ALGORITHM_ORDER", "AdaBoost", "DecisionTree", "KNN", "LinearSVM", "MLP",
    "ProbabilisticClassifier", "RandomForest", "dumps_model", "load_model", "loads_model",
    "make_classifier", "save_model",
]
