"""Gender classification on frozen ArcFace embeddings.

Embeddings are stored in the AEF binary format (:mod:`facetrait.store`), produced
by :mod:`facetrait.extractor`, and fed to a family of classifiers (kernel SVM,
linear and Bayes baselines, KNN, trees and ensembles, MLP). :mod:`facetrait.bench`
runs the whole family as one suite.
"""

from .errors import FacetraitError
from .evaluation import ConfusionCounts, EvalReport, RocCurve, evaluate, roc_curve
from .models import FAMILIES, TrainedModel, train_model
from .serialize import load_model, save_model
from .store import EmbeddingDataset, GenderLabel, load_aef, save_aef

__version__ = "0.1.0"

__all__ = [
    "FAMILIES", "ConfusionCounts", "EmbeddingDataset", "EvalReport", "FacetraitError",
    "GenderLabel", "RocCurve", "TrainedModel", "evaluate", "load_aef", "load_model",
    "roc_curve", "save_aef", "save_model", "train_model",
]
