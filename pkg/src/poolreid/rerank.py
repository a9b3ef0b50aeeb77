"""Multiple-image joint re-ranking.

Every pool member produces its own Euclidean ranking of the gallery.  The
main member's top-k1 window is then reordered by how many assist top-k2
lists each entry appears in (its count T), with an optional second main
image whose co-listed entries are moved to the very top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import GalleryEntry, ImagePool, RankedList, feature_matrix
from .metric import DistanceMatrix, DistanceParams, pairwise_distances, pool_gallery_distances


@dataclass(frozen=True)
class RerankParams:
    k1: int = 70
    k2: int = 2
    eta_count: Optional[float] = None
    use_second_main: bool = False
    # take list depths from the member weights (eta_count) instead of k1/k2
    derive_depths: bool = False

    def __post_init__(self):
        if self.k1 < 1 or self.k2 < 1:
            raise ValueError("k1 and k2 must be >= 1")
        if self.k2 > self.k1:
            raise ValueError(f"k2 ({self.k2}) must not exceed k1 ({self.k1})")
        if self.derive_depths and not (self.eta_count and self.eta_count > 0):
            raise ValueError("derive_depths requires a positive eta_count")

    def echo(self) -> dict:
        return {"k1": self.k1, "k2": self.k2, "eta_count": self.eta_count,
                "use_second_main": self.use_second_main, "derive_depths": self.derive_depths}


@dataclass(frozen=True)
class TopKList:
    probe_role: str
    entries: tuple[int, ...]
    k: int
    gallery_size: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(int(e) for e in self.entries))
        if len(set(self.entries)) != len(self.entries):
            raise ValueError("top-k list contains duplicate indices")
        if len(self.entries) != min(self.k, self.gallery_size):
            raise ValueError("top-k list length must equal min(k, gallery size)")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, idx) -> bool:
        return idx in self.entries


def baseline_ranking(probe, gallery: Sequence[GalleryEntry], params: DistanceParams,
                     gallery_matrix: Optional[np.ndarray] = None) -> RankedList:
    """Rank the gallery by distance to a single probe vector, ascending."""
    if not gallery:
        raise ValueError("gallery is empty")
    g = feature_matrix(gallery) if gallery_matrix is None else gallery_matrix
    probe = np.asarray(probe, dtype=np.float64).reshape(1, -1)
    d = pairwise_distances(probe, g, params)[0]
    return RankedList.from_scores(d, source="baseline")


def top_k(ranked: RankedList, k: int, role: str = "main") -> TopKList:
    if k < 1:
        raise ValueError("k must be >= 1")
    return TopKList(role, tuple(ranked.indices[:k]), k, len(ranked))


def pool_weights(M: int, has_second_main: bool = False) -> list[float]:
    """Per-member weights, main first.

    Main always gets 0.5 and the rest share 0.5 evenly; with a second main
    image it takes 0.25 and the assists share the remaining 0.25.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if has_second_main:
        if M < 2:
            raise ValueError("a second main image needs M >= 2")
        if M == 2:
            return [0.5, 0.5]
        return [0.5, 0.25] + [0.25 / (M - 2)] * (M - 2)
    if M == 1:
        return [1.0]
    return [0.5] + [1.0 / (2 * (M - 1))] * (M - 1)


def candidate_count(eta_count: float, weight: float, weight_sum: float) -> int:
    """List depth for a member: ceil(eta * W / sum W), at least 1."""
    if not (0 < weight <= weight_sum):
        raise ValueError("need 0 < weight <= weight_sum")
    x = eta_count * weight / weight_sum
    # absorb float noise such as 30 * (1/6) = 5.000000000000001
    return max(1, math.ceil(round(x, 9)))


def joint_rerank(main_list: TopKList, assist_lists: Sequence[TopKList],
                 second_main_list: Optional[TopKList] = None) -> RankedList:
    """Reorder the main top-k list by assist-list membership counts.

    Entries co-listed by the second main image come first (in main-list
    order); the rest are stably sorted by count, descending.  Scores on
    the returned list are the counts.
    """
    if main_list.probe_role != "main":
        raise ValueError("main_list must come from the main image")
    others = list(assist_lists) + ([second_main_list] if second_main_list is not None else [])
    for lst in others:
        if lst.gallery_size != main_list.gallery_size:
            raise ValueError("lists were drawn from galleries of different sizes")

    assist_sets = [set(lst.entries) for lst in assist_lists]
    counts = [sum(g in s for s in assist_sets) for g in main_list.entries]

    promoted = set(second_main_list.entries) if second_main_list is not None else set()
    tier1 = [p for p, g in enumerate(main_list.entries) if g in promoted]
    rest = [p for p, g in enumerate(main_list.entries) if g not in promoted]
    rest.sort(key=lambda p: -counts[p])  # list.sort is stable
    order = tier1 + rest
    return RankedList([main_list.entries[p] for p in order],
                      [float(counts[p]) for p in order],
                      source="rerank", gallery_size=main_list.gallery_size)


@dataclass(frozen=True)
class RerankTrace:
    """Per-call diagnostics used by the CLI trace section."""

    depths: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    promoted: tuple = ()


def _member_depths(pool: ImagePool, params: RerankParams) -> list[int]:
    if params.derive_depths:
        total = sum(pool.weights)
        return [candidate_count(params.eta_count, m.weight, total) for m in pool.members]
    depths = [params.k2] * len(pool)
    depths[pool.main_index] = params.k1
    return depths


def rerank_from_distances(dmat: DistanceMatrix, pool: ImagePool, params: RerankParams,
                          with_trace: bool = False):
    """Re-rank given a precomputed pool-by-gallery distance matrix."""
    n = dmat.cols
    main = pool.main_index
    second = pool.second_main_index if params.use_second_main else None
    depths = _member_depths(pool, params)
    if not params.derive_depths and params.k1 > n:
        raise ValueError(f"k1 ({params.k1}) exceeds gallery size ({n})")

    rankings = [RankedList.from_scores(dmat.values[i]) for i in range(len(pool))]
    main_top = top_k(rankings[main], depths[main], "main")
    assist_tops = [top_k(rankings[i], depths[i], "assist")
                   for i in range(len(pool)) if i != main and i != second]
    second_top = top_k(rankings[second], depths[second], "second_main") if second is not None else None
    window = joint_rerank(main_top, assist_tops, second_top)

    tail = rankings[main].indices[len(main_top):]
    out = RankedList(np.concatenate([window.indices, tail]),
                     np.concatenate([window.scores, np.zeros(tail.size)]),
                     source=f"rerank:{pool.main.entry.image_id}", gallery_size=n)
    if not with_trace:
        return out
    promoted = tuple(int(g) for g in second_top.entries if g in main_top) if second_top else ()
    trace = RerankTrace(
        depths={pool.members[i].entry.image_id: d for i, d in enumerate(depths)},
        counts={int(g): int(c) for g, c in zip(window.indices, window.scores)},
        promoted=promoted,
    )
    return out, trace


def rerank_with_pool(gallery: Sequence[GalleryEntry], pool: ImagePool, params: RerankParams,
                     dparams: DistanceParams,
                     gallery_matrix: Optional[np.ndarray] = None) -> RankedList:
    """Full pipeline: per-member rankings, truncation, joint re-ranking.

    Only the main list's top-k1 window is permuted; everything after it
    follows in baseline order, so the output covers the whole gallery.
    """
    if not gallery:
        raise ValueError("gallery is empty")
    dmat = pool_gallery_distances(pool, gallery, dparams, gallery_matrix)
    return rerank_from_distances(dmat, pool, params)
