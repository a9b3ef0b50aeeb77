"""Multiple-image joint distance between a gallery entry and an Image Pool.

The score starts from the main image's distance and subtracts a share of
it proportional to how similar the entry is to the (weighted) pool::

    S(g) = E_main(g) * (1 - eta * sum_i W_i f_i(g) / sum_i f_i(g))

where f is the thresholded inverse distance from :mod:`poolreid.metric`.
Lower is better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import GalleryEntry, ImagePool, RankedList
from .metric import DistanceMatrix, DistanceParams, pool_gallery_distances, similarity_matrix


@dataclass(frozen=True)
class JointDistanceParams:
    eta_scale: float
    distance: DistanceParams = field(default_factory=DistanceParams)
    # sensitivity switch: drop the main image from both weighted sums
    include_main: bool = True

    def __post_init__(self):
        if not (self.eta_scale > 0 and math.isfinite(self.eta_scale)):
            raise ValueError(f"eta_scale must be finite and > 0, got {self.eta_scale}")

    def echo(self) -> dict:
        return {"eta_scale": self.eta_scale, "include_main": self.include_main,
                **self.distance.echo()}


def _member_mask(pool: ImagePool, params: JointDistanceParams) -> np.ndarray:
    mask = np.ones(len(pool), dtype=bool)
    if not params.include_main:
        mask[pool.main_index] = False
    return mask


def joint_distances(dmat: DistanceMatrix, pool: ImagePool,
                    params: JointDistanceParams) -> np.ndarray:
    """Joint distance of every gallery column of ``dmat``."""
    if dmat.rows != len(pool):
        raise ValueError(f"distance matrix has {dmat.rows} rows for a pool of {len(pool)}")
    main = pool.main_index
    d = dmat.values
    e_main = d[main]
    mask = _member_mask(pool, params)
    f = similarity_matrix(d[mask], params.distance)
    w = np.asarray(pool.weights, dtype=np.float64)[mask]
    f_sum = f.sum(axis=0)
    wf_sum = (w[:, None] * f).sum(axis=0)
    ratio = np.divide(wf_sum, f_sum, out=np.zeros_like(f_sum), where=f_sum > 0)
    return e_main - params.eta_scale * ratio * e_main


def joint_distance(j: int, dmat: DistanceMatrix, pool: ImagePool,
                   params: JointDistanceParams) -> float:
    """Joint distance of gallery entry ``j``.

    When no pool member lies within ``kappa`` of the entry the similarity
    sum is zero and the main-image distance is returned unchanged.
    """
    if not 0 <= j < dmat.cols:
        raise IndexError(f"gallery index {j} out of range")
    col = DistanceMatrix(dmat.values[:, j:j + 1])
    return float(joint_distances(col, pool, params)[0])


def rank_by_joint_distance(gallery: Sequence[GalleryEntry], pool: ImagePool,
                           params: JointDistanceParams,
                           gallery_matrix: Optional[np.ndarray] = None) -> RankedList:
    if not gallery:
        raise ValueError("gallery is empty")
    dmat = pool_gallery_distances(pool, gallery, params.distance, gallery_matrix)
    scores = joint_distances(dmat, pool, params)
    return RankedList.from_scores(scores, source=f"jointdist:{pool.main.entry.image_id}")
