"""Pairwise similarity of assessment items from binary response logs, with
clustering into knowledge components and a response simulator for validation."""

from . import _kernels
from .bktsim import SimConfig, generate_dataset
from .cluster import item_distance, kmeans_cluster, ward_cluster
from .dataset import ResponseDataset, load_labels, load_responses
from .evaluation import ari, gap_statistic, select_k, wss
from .similarity import build_similarity_matrix, kappa_learning

__version__ = "0.1.0"


def backend():
    """Name of the live kernel engine: "compiled" or "numpy"."""
    return _kernels.BACKEND


__all__ = [
    "ResponseDataset",
    "SimConfig",
    "ari",
    "backend",
    "build_similarity_matrix",
    "gap_statistic",
    "generate_dataset",
    "item_distance",
    "kappa_learning",
    "kmeans_cluster",
    "load_labels",
    "load_responses",
    "select_k",
    "wss",
    "ward_cluster",
]
