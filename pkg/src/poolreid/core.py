"""Domain types shared by the ranking, pool and evaluation modules.

Embeddings are stored as read-only float32 arrays (the on-disk width) and
are promoted to float64 whenever distances are computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

Role = Literal["main", "second_main", "assist"]

ROLES = ("main", "second_main", "assist")
WEIGHT_SUM_TOL = 1e-9


def as_feature(values) -> np.ndarray:
    """Coerce ``values`` to a read-only 1-D float32 feature vector.

    No finiteness check is made here so that malformed data can still be
    represented and reported by :func:`validate_dataset`.
    """
    arr = np.array(values, dtype=np.float32).reshape(-1)
    if arr.size == 0:
        raise ValueError("feature vector must have dim >= 1")
    arr.flags.writeable = False
    return arr


def check_feature(values) -> np.ndarray:
    """Like :func:`as_feature` but rejects NaN/Inf coordinates."""
    arr = as_feature(values)
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature vector contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class GalleryEntry:
    image_id: str
    camera_id: int
    frame_index: int
    feature: np.ndarray
    person_label: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "feature", as_feature(self.feature))
        if self.camera_id < 0 or self.frame_index < 0:
            raise ValueError(f"{self.image_id}: camera_id and frame_index must be >= 0")

    @property
    def dim(self) -> int:
        return int(self.feature.shape[0])

    def __eq__(self, other):
        if not isinstance(other, GalleryEntry):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.camera_id == other.camera_id
            and self.frame_index == other.frame_index
            and self.person_label == other.person_label
            and self.feature.shape == other.feature.shape
            # bitwise comparison so NaN entries still compare equal to themselves
            and self.feature.tobytes() == other.feature.tobytes()
        )

    def __hash__(self):
        return hash((self.image_id, self.camera_id, self.frame_index))


@dataclass(frozen=True)
class Violation:
    kind: Literal["dimension_mismatch", "duplicate_id", "non_finite"]
    index: int
    image_id: str
    detail: str


def validate_dataset(entries: Sequence[GalleryEntry]) -> list[Violation]:
    """Return every invariant violation in ``entries``; empty means valid.

    The first entry fixes the reference dimension.
    """
    if not entries:
        raise ValueError("validate_dataset needs at least one entry")
    report: list[Violation] = []
    ref_dim = entries[0].dim
    seen: dict[str, int] = {}
    for i, e in enumerate(entries):
        if e.dim != ref_dim:
            report.append(Violation("dimension_mismatch", i, e.image_id,
                                    f"dim {e.dim} != {ref_dim}"))
        if e.image_id in seen:
            report.append(Violation("duplicate_id", i, e.image_id,
                                    f"first seen at index {seen[e.image_id]}"))
        else:
            seen[e.image_id] = i
        if not np.all(np.isfinite(e.feature)):
            report.append(Violation("non_finite", i, e.image_id, "NaN or Inf coordinate"))
    return report


@dataclass(frozen=True)
class PoolMember:
    entry: GalleryEntry
    weight: float
    role: Role = "assist"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not (0.0 < self.weight <= 1.0):
            raise ValueError(f"member weight must lie in (0, 1], got {self.weight}")


@dataclass(frozen=True)
class ImagePool:
    """A target's exemplar set: one main image plus assist images.

    Construction enforces the structural invariants; updates produce new
    pools rather than mutating this one.
    """

    members: tuple[PoolMember, ...]
    capacity_M: int
    last_update_camera: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if self.capacity_M < 1:
            raise ValueError("capacity_M must be >= 1")
        n = len(self.members)
        if not 1 <= n <= self.capacity_M:
            raise ValueError(f"pool size {n} outside [1, {self.capacity_M}]")
        roles = [m.role for m in self.members]
        if roles.count("main") != 1:
            raise ValueError(f"pool needs exactly one main member, got {roles.count('main')}")
        if roles.count("second_main") > 1:
            raise ValueError("pool may hold at most one second_main member")
        total = math.fsum(m.weight for m in self.members)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"pool weights sum to {total!r}, expected 1")
        dims = {m.entry.dim for m in self.members}
        if len(dims) != 1:
            raise ValueError(f"pool members have mixed dims {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def main_index(self) -> int:
        return next(i for i, m in enumerate(self.members) if m.role == "main")

    @property
    def main(self) -> PoolMember:
        return self.members[self.main_index]

    @property
    def second_main_index(self) -> Optional[int]:
        return next((i for i, m in enumerate(self.members) if m.role == "second_main"), None)

    @property
    def has_second_main(self) -> bool:
        return self.second_main_index is not None

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(m.weight for m in self.members)

    @property
    def image_ids(self) -> tuple[str, ...]:
        return tuple(m.entry.image_id for m in self.members)

    @property
    def current_camera(self) -> int:
        """Camera that decides same- vs cross-camera routing of the next event."""
        if self.last_update_camera is not None:
            return self.last_update_camera
        return self.main.entry.camera_id

    def features(self) -> np.ndarray:
        return np.stack([m.entry.feature for m in self.members]).astype(np.float64)


@dataclass(frozen=True, eq=False)
class RankedList:
    """Gallery indices ordered best-first with the score that ordered them."""

    indices: np.ndarray
    scores: np.ndarray
    source: str = ""
    gallery_size: Optional[int] = None

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64).reshape(-1)
        sc = np.array(self.scores, dtype=np.float64).reshape(-1)
        if idx.shape != sc.shape:
            raise ValueError("indices and scores differ in length")
        if np.unique(idx).size != idx.size:
            raise ValueError("ranked list contains duplicate gallery indices")
        size = self.gallery_size if self.gallery_size is not None else (
            int(idx.max()) + 1 if idx.size else 0)
        if idx.size and (idx.min() < 0 or idx.max() >= size):
            raise ValueError("gallery index out of range")
        idx.flags.writeable = False
        sc.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "scores", sc)
        object.__setattr__(self, "gallery_size", size)

    @classmethod
    def from_scores(cls, scores, source: str = "") -> "RankedList":
        """Rank ascending by score; equal scores keep gallery-index order."""
        scores = np.asarray(scores, dtype=np.float64)
        order = np.argsort(scores, kind="stable")
        return cls(order, scores[order], source, gallery_size=scores.size)

    def __len__(self) -> int:
        return int(self.indices.size)

    @property
    def items(self) -> list[tuple[int, float]]:
        return [(int(i), float(s)) for i, s in zip(self.indices, self.scores)]

    def same_order(self, other: "RankedList") -> bool:
        return np.array_equal(self.indices, other.indices)

    def __eq__(self, other):
        if not isinstance(other, RankedList):
            return NotImplemented
        return (np.array_equal(self.indices, other.indices)
                and np.array_equal(self.scores, other.scores)
                and self.gallery_size == other.gallery_size)


def feature_matrix(entries: Iterable[GalleryEntry]) -> np.ndarray:
    """Stack entry features into an (n, dim) float64 matrix."""
    rows = [e.feature for e in entries]
    if not rows:
        raise ValueError("no entries to stack")
    dims = {r.shape[0] for r in rows}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch among entries: {sorted(dims)}")
    return np.stack(rows).astype(np.float64)
