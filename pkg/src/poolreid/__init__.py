"""Multi-image re-identification ranking with updateable Image Pools."""

from .core import GalleryEntry, ImagePool, PoolMember, RankedList, validate_dataset
from .ingest import (FormatError, load_embeddings, load_event_stream, save_embeddings,
                     save_event_stream)
from .jointdist import JointDistanceParams, joint_distance, rank_by_joint_distance
from .metric import DistanceParams, euclidean_distance, pool_gallery_distances, similarity
from .pool import CameraEvent, UpdateParams, UpdateTrace, apply_event, init_pool
from .rerank import (RerankParams, TopKList, baseline_ranking, candidate_count, joint_rerank,
                     pool_weights, rerank_with_pool, top_k)

__version__ = "0.1.0"

__all__ = [
    "GalleryEntry",
    "ImagePool",
    "PoolMember",
    "RankedList",
    "validate_dataset",
    "FormatError",
    "load_embeddings",
    "load_event_stream",
    "save_embeddings",
    "save_event_stream",
    "JointDistanceParams",
    "joint_distance",
    "rank_by_joint_distance",
    "DistanceParams",
    "euclidean_distance",
    "pool_gallery_distances",
    "similarity",
    "CameraEvent",
    "UpdateParams",
    "UpdateTrace",
    "apply_event",
    "init_pool",
    "RerankParams",
    "TopKList",
    "baseline_ranking",
    "candidate_count",
    "joint_rerank",
    "pool_weights",
    "rerank_with_pool",
    "top_k",
]
