"""One facade over every classifier family: train by name, score, predict."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import baselines, mlp, svm, trees
from .errors import ContractError
from .store import EmbeddingDataset

FAMILIES = ("svm", "logreg", "lda", "gnb", "knn", "tree",
            "bagging", "adaboost", "rusboost", "subspace", "mlp")

DEFAULTS = {
    "svm": {"kernel": "gaussian", "C": 1.0, "scale": None, "tol": 1e-3, "max_passes": 10,
            "subsample": None, "cache_mb": 256, "seed": 0},
    "logreg": {"l2_lambda": 1e-4, "epochs": 2000},
    "lda": {},
    "gnb": {},
    "knn": {"k": 1, "metric": "euclidean", "weighting": "uniform"},
    "tree": {"max_splits": 100},
    "bagging": {"n_learners": 30, "max_splits": None, "seed": 0},
    "adaboost": {"n_learners": 30, "max_splits": 20, "learn_rate": 0.1, "seed": 0},
    "rusboost": {"n_learners": 30, "max_splits": 20, "learn_rate": 0.1, "seed": 0},
    "subspace": {"n_learners": 30, "subspace_dim": None, "seed": 0},
    "mlp": {"hidden": [10], "step": 1e-3, "momentum": 0.9, "epochs": 50, "batch_size": 256,
            "seed": 0},
}


def resolve_config(family: str, overrides=None) -> dict:
    if family not in FAMILIES:
        raise ContractError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    cfg = dict(DEFAULTS[family])
    for k, v in (overrides or {}).items():
        if k not in cfg:
            raise ContractError(f"{family} has no setting {k!r}")
        cfg[k] = v
    return cfg


@dataclass(eq=False)
class TrainedModel:
    family: str
    config: dict
    model: object
    dimension: int
    info: dict = field(default_factory=dict)

    def scores(self, X) -> np.ndarray:
        """Continuous score, larger meaning more Male-like."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dimension:
            raise ContractError(f"dimension mismatch: model {self.dimension}, data {X.shape[1]}")
        m, f = self.model, self.family
        if f == "svm":
            return svm.decision_function(m, X)
        if f in ("logreg", "lda"):
            return m.decision(X) if f == "logreg" else m.score(X)
        if f == "gnb":
            return m.log_odds(X)
        if f == "knn":
            return baselines.knn_scores(m, X)
        if f == "tree":
            return m.leaf_scores(X)
        if f == "mlp":
            return m.logits(X)
        return trees.ensemble_scores(m, X)

    def predict(self, X) -> np.ndarray:
        if self.family in trees.ENSEMBLE_KINDS:
            return trees.ensemble_predict_labels(self.model, X)
        s = self.scores(X)
        threshold = 0.5 if self.family in ("knn", "tree") else 0.0
        return (s > threshold).astype(np.uint8)


def train_model(family: str, data: EmbeddingDataset, overrides=None) -> TrainedModel:
    cfg = resolve_config(family, overrides)
    info = {}
    if family == "svm":
        params = svm.SmoParams(C=cfg["C"], tol=cfg["tol"], max_passes=cfg["max_passes"],
                               cache_bytes=int(cfg["cache_mb"] * 1024 * 1024),
                               seed=cfg["seed"], subsample=cfg["subsample"])
        m = svm.smo_train(data, svm.KernelSpec.from_name(cfg["kernel"], cfg["scale"]), params)
        info = {"n_support": int(m.alphas.size), "converged": m.converged, "n_iter": m.n_iter}
    elif family == "logreg":
        m = baselines.logreg_train(data, cfg["l2_lambda"],
                                   baselines.LogRegConfig(epochs=cfg["epochs"]))
    elif family == "lda":
        m = baselines.lda_fit(data)
    elif family == "gnb":
        m = baselines.gnb_fit(data)
    elif family == "knn":
        m = baselines.knn_fit(data, cfg["k"], cfg["metric"], cfg["weighting"])
    elif family == "tree":
        m = trees.tree_train(data, max_splits=cfg["max_splits"])
    elif family == "bagging":
        m = trees.bagging_train(data, cfg["n_learners"], cfg["max_splits"], cfg["seed"])
    elif family == "adaboost":
        m = trees.adaboost_train(data, cfg["n_learners"], cfg["max_splits"],
                                 cfg["learn_rate"], cfg["seed"])
    elif family == "rusboost":
        m = trees.rusboost_train(data, cfg["n_learners"], cfg["max_splits"],
                                 cfg["learn_rate"], cfg["seed"])
    elif family == "subspace":
        m = trees.subspace_discriminant_train(data, cfg["n_learners"], cfg["subspace_dim"],
                                              cfg["seed"])
    else:
        arch = mlp.MlpArchitecture(data.dimension, tuple(cfg["hidden"]))
        m = mlp.mlp_train(data, arch, mlp.MlpTrainConfig(
            cfg["step"], cfg["momentum"], cfg["epochs"], cfg["batch_size"], cfg["seed"]))
    return TrainedModel(family, cfg, m, data.dimension, info)
