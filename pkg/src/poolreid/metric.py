"""Distance and similarity primitives.

Euclidean distance is the only shipped metric.  Any symmetric,
non-negative callable of two feature vectors can be supplied through
``DistanceParams.metric`` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import GalleryEntry, ImagePool, feature_matrix

# Similarity of an exact match (distance 0); also caps 1/d for tiny d.
SIMILARITY_CAP = 1e12

DistanceFn = Callable[[np.ndarray, np.ndarray], float]


@dataclass(frozen=True)
class DistanceParams:
    kappa: float = math.inf
    normalize: bool = False
    metric: Optional[DistanceFn] = None

    def __post_init__(self):
        if not (self.kappa > 0):
            raise ValueError(f"kappa must be > 0, got {self.kappa}")

    def echo(self) -> dict:
        return {
            "kappa": self.kappa,
            "normalize": self.normalize,
            "metric": getattr(self.metric, "__name__", "euclidean") if self.metric else "euclidean",
        }


@dataclass(frozen=True)
class DistanceMatrix:
    """Distances between pool members (rows) and gallery entries (columns)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("distance matrix must be 2-D")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("distance matrix entries must be finite and >= 0")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, key):
        return self.values[key]


def _to_float64(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64)


def l2_normalize(x: np.ndarray) -> np.ndarray:
    """Scale rows (or a single vector) to unit length; zero rows stay zero."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.sqrt(np.sum(np.square(x), axis=-1, keepdims=True))
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def euclidean_distance(a, b) -> float:
    a, b = _to_float64(a), _to_float64(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    return float(np.sqrt(np.sum(np.square(a - b))))


def similarity(distance: float, params: DistanceParams) -> float:
    """Thresholded inverse distance: 1/d when d <= kappa, else 0."""
    if distance < 0:
        raise ValueError("distance must be >= 0")
    if distance > params.kappa:
        return 0.0
    if distance == 0.0:
        return SIMILARITY_CAP
    return min(1.0 / distance, SIMILARITY_CAP)


def similarity_matrix(dist: np.ndarray, params: DistanceParams) -> np.ndarray:
    """Vectorized :func:`similarity` over an array of distances."""
    dist = np.asarray(dist, dtype=np.float64)
    with np.errstate(divide="ignore"):
        inv = np.minimum(1.0 / dist, SIMILARITY_CAP)
    return np.where(dist <= params.kappa, inv, 0.0)


def pairwise_distances(x: np.ndarray, y: np.ndarray, params: DistanceParams) -> np.ndarray:
    """(n, m) distances between rows of ``x`` and rows of ``y``.

    Each entry is summed over the embedding axis in a fixed order, so the
    result for a given pair does not depend on the batch it was part of.
    """
    x, y = _to_float64(x), _to_float64(y)
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("expected 2-D feature matrices")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if params.normalize:
        x, y = l2_normalize(x), l2_normalize(y)
    if params.metric is not None:
        out = np.empty((x.shape[0], y.shape[0]))
        for i in range(x.shape[0]):
            for j in range(y.shape[0]):
                out[i, j] = params.metric(x[i], y[j])
        return out
    return np.sqrt(np.sum(np.square(x[:, None, :] - y[None, :, :]), axis=-1))


def pool_gallery_distances(pool: ImagePool, gallery: Sequence[GalleryEntry],
                           params: DistanceParams,
                           gallery_matrix: Optional[np.ndarray] = None) -> DistanceMatrix:
    """Distances from every pool member to every gallery entry.

    ``gallery_matrix`` may carry a pre-stacked copy of the gallery features
    to avoid re-stacking when many pools are ranked against one gallery.
    """
    g = feature_matrix(gallery) if gallery_matrix is None else gallery_matrix
    return DistanceMatrix(pairwise_distances(pool.features(), g, params))
