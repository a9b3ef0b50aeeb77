"""Deterministic synthetic multi-camera embeddings.

Each frame is ``base[identity] + bias[camera](t) + noise``.  The camera
bias is a vector of norm ``camera_bias_scale``; with ``drift_scale > 0`` it
grows linearly along a second per-camera direction as the frame index
advances, reaching ``drift_scale`` extra norm at the last frame.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from ..core import GalleryEntry, feature_matrix

TrackKey = tuple  # (person_label, camera_id)


@dataclass(frozen=True)
class SynthSpec:
    num_identities: int = 50
    num_cameras: int = 4
    dim: int = 32
    frames_per_identity_per_camera: int = 12
    cluster_spread: float = 0.5
    camera_bias_scale: float = 2.0
    seed: int = 0
    drift_scale: float = 0.0
    # trailing frames of every track that go to the gallery instead of the track
    gallery_frames: int = 2

    def __post_init__(self):
        for name in ("num_identities", "num_cameras", "dim", "frames_per_identity_per_camera"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("cluster_spread", "camera_bias_scale", "drift_scale"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0")
        if not 0 <= self.gallery_frames < self.frames_per_identity_per_camera:
            raise ValueError("gallery_frames must leave at least one track frame")

    def echo(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Query-side tracks plus a gallery.

    ``tracks`` maps (person_label, camera_id) to that identity's frames in
    one camera, ordered by frame index.  The first frame of each track is
    its probe image.
    """

    gallery: tuple
    tracks: dict = field(default_factory=dict)

    @cached_property
    def gallery_matrix(self) -> np.ndarray:
        m = feature_matrix(self.gallery)
        m.flags.writeable = False
        return m

    @property
    def probes(self) -> list[GalleryEntry]:
        return [self.tracks[k][0] for k in sorted(self.tracks)]

    @property
    def cameras(self) -> list[int]:
        return sorted({cam for _, cam in self.tracks} | {e.camera_id for e in self.gallery})

    def tracks_of(self, label: str) -> dict[int, tuple]:
        return {cam: t for (lbl, cam), t in sorted(self.tracks.items()) if lbl == label}

    def __iter__(self):
        yield self.probes
        yield list(self.gallery)
        yield self.tracks

    @classmethod
    def from_entries(cls, query: Iterable[GalleryEntry], gallery: Sequence[GalleryEntry]) -> "Dataset":
        """Group labeled query-side entries into tracks by identity and camera."""
        grouped: dict = {}
        for e in query:
            if e.person_label is None:
                raise ValueError(f"query entry {e.image_id} has no person label")
            grouped.setdefault((e.person_label, e.camera_id), []).append(e)
        tracks = {k: tuple(sorted(v, key=lambda e: (e.frame_index, e.image_id)))
                  for k, v in grouped.items()}
        return cls(tuple(gallery), tracks)

    def query_entries(self) -> list[GalleryEntry]:
        return [e for k in sorted(self.tracks) for e in self.tracks[k]]


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def frame_features(spec: SynthSpec) -> np.ndarray:
    """All frames as an array of shape (identities, cameras, frames, dim)."""
    rng = np.random.default_rng(spec.seed)
    n, c, f, d = (spec.num_identities, spec.num_cameras,
                  spec.frames_per_identity_per_camera, spec.dim)
    base = rng.standard_normal((n, d))
    bias = np.stack([spec.camera_bias_scale * _unit(rng, d) for _ in range(c)])
    drift_dir = np.stack([_unit(rng, d) for _ in range(c)])
    noise = spec.cluster_spread * rng.standard_normal((n, c, f, d))
    t = np.arange(f) / max(f - 1, 1)
    cam_offset = bias[:, None, :] + spec.drift_scale * t[None, :, None] * drift_dir[:, None, :]
    return base[:, None, None, :] + cam_offset[None] + noise


def person_label(i: int) -> str:
    return f"p{i:04d}"


def make_entry(i: int, cam: int, frame: int, vec) -> GalleryEntry:
    return GalleryEntry(f"{person_label(i)}_c{cam}_f{frame:05d}", cam, frame, vec, person_label(i))


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Build a dataset; identical specs give bitwise identical datasets.

    The last ``gallery_frames`` frames of every (identity, camera) track
    form the gallery; the earlier frames stay in the track.
    """
    feats = frame_features(spec)
    n, c, f, _ = feats.shape
    split = f - spec.gallery_frames
    tracks, gallery = {}, []
    for i in range(n):
        for cam in range(c):
            tracks[(person_label(i), cam)] = tuple(
                make_entry(i, cam, fr, feats[i, cam, fr]) for fr in range(split))
            gallery.extend(make_entry(i, cam, fr, feats[i, cam, fr]) for fr in range(split, f))
    return Dataset(tuple(gallery), tracks)
