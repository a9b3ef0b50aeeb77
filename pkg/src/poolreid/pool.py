"""Image Pool initialisation and online update rules.

A pool is a single-writer state machine: feed events for one target to
:func:`apply_event` in arrival order.  Each call returns a new pool and an
:class:`UpdateTrace`; the input pool is never modified.

Update rules, for a confirmed observation that passes the diversity gate
(mean distance to the pool strictly above ``gamma``):

* same camera as the last accepted update: replace the assist member
  farthest from the new image, which inherits that member's weight;
* different camera: the new image becomes main, the old main is demoted
  and takes the weight of the member farthest from the new image, and
  that farthest member is dropped.

Pools below capacity grow by one instead of evicting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, Optional, Sequence

import numpy as np

from .core import GalleryEntry, ImagePool, PoolMember
from .metric import DistanceParams, pairwise_distances
from .rerank import pool_weights

Action = Literal[
    "rejected_by_gate",
    "replaced_assist",
    "replaced_main",
    "appended_assist",
    "no_assist_slot",
    "ignored_unconfirmed",
]
ACCEPTED = ("replaced_assist", "replaced_main", "appended_assist")


@dataclass(frozen=True)
class UpdateParams:
    gamma: float
    beta: int = 1
    capacity_M: int = 3

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be finite and > 0, got {self.gamma}")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.capacity_M < 1:
            raise ValueError("capacity_M must be >= 1")

    def echo(self) -> dict:
        return {"gamma": self.gamma, "beta": self.beta, "capacity_M": self.capacity_M}


@dataclass(frozen=True)
class CameraEvent:
    entry: GalleryEntry
    is_confirmed: bool = True


@dataclass(frozen=True)
class UpdateTrace:
    action: Action
    image_id: str
    camera_id: int
    criterion_value: float
    branch: Literal["same_camera", "cross_camera"]
    evicted_image_id: Optional[str] = None
    # cross-camera provenance: which image the new main took over from
    previous_main_id: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.action in ACCEPTED

    def to_line(self) -> str:
        return "\t".join([
            self.action, self.branch, self.image_id, str(self.camera_id),
            repr(self.criterion_value), self.evicted_image_id or "-",
            self.previous_main_id or "-",
        ])


def _distances_to_members(new: GalleryEntry, pool: ImagePool, dparams: DistanceParams) -> np.ndarray:
    if new.dim != pool.main.entry.dim:
        raise ValueError(f"dimension mismatch: event dim {new.dim}, pool dim {pool.main.entry.dim}")
    new_vec = new.feature.astype(np.float64)[None, :]
    return pairwise_distances(new_vec, pool.features(), dparams)[0]


def init_pool(track: Sequence[GalleryEntry], params: UpdateParams) -> ImagePool:
    """Build the initial pool from one camera's frame sequence.

    The first frame is main; further members are taken every ``beta``
    frames until the pool is full or the track runs out.
    """
    if not track:
        raise ValueError("cannot initialise a pool from an empty track")
    cams = {e.camera_id for e in track}
    if len(cams) != 1:
        raise ValueError(f"initial track spans several cameras: {sorted(cams)}")
    picked = list(track[::params.beta][:params.capacity_M])
    weights = pool_weights(len(picked))
    members = [PoolMember(e, w, "main" if i == 0 else "assist")
               for i, (e, w) in enumerate(zip(picked, weights))]
    return ImagePool(tuple(members), params.capacity_M, track[0].camera_id)


def reweight(members: Sequence[PoolMember]) -> tuple[PoolMember, ...]:
    """Reassign canonical weights in the members' current order (main first)."""
    members = list(members)
    rank = {"main": 0, "second_main": 1, "assist": 2}
    ordered = sorted(range(len(members)), key=lambda i: rank[members[i].role])
    has_second = any(m.role == "second_main" for m in members)
    w = pool_weights(len(members), has_second)
    for slot, i in enumerate(ordered):
        members[i] = replace(members[i], weight=w[slot])
    return tuple(members)


def designate_second_main(pool: ImagePool, member_index: int) -> ImagePool:
    """Mark one assist member as the second main image and reweight."""
    if pool.members[member_index].role != "assist":
        raise ValueError("only an assist member can become the second main image")
    if pool.has_second_main:
        raise ValueError("pool already has a second main image")
    members = list(pool.members)
    members[member_index] = replace(members[member_index], role="second_main")
    return replace(pool, members=reweight(members))


def update_criterion(new: GalleryEntry, pool: ImagePool, params: UpdateParams,
                     dparams: DistanceParams) -> tuple[bool, float]:
    """Diversity gate: mean distance from ``new`` to all members, > gamma passes."""
    d = _distances_to_members(new, pool, dparams)
    mean = float(np.mean(d))
    return mean > params.gamma, mean


def farthest_member(new: GalleryEntry, pool: ImagePool, dparams: DistanceParams,
                    candidates: Optional[Sequence[int]] = None) -> int:
    """Index of the member farthest from ``new``; ties go to the lowest index."""
    d = _distances_to_members(new, pool, dparams)
    idx = range(len(pool)) if candidates is None else candidates
    best = None
    for i in idx:
        if best is None or d[i] > d[best]:
            best = i
    if best is None:
        raise ValueError("no candidate members")
    return best


def _precheck(pool, event, params, dparams, branch):
    e = event.entry
    if not event.is_confirmed:
        return UpdateTrace("ignored_unconfirmed", e.image_id, e.camera_id, 0.0, branch)
    passes, mean = update_criterion(e, pool, params, dparams)
    if not passes:
        return UpdateTrace("rejected_by_gate", e.image_id, e.camera_id, mean, branch)
    return mean


def update_same_camera(pool: ImagePool, event: CameraEvent, params: UpdateParams,
                       dparams: DistanceParams) -> tuple[ImagePool, UpdateTrace]:
    branch = "same_camera"
    gate = _precheck(pool, event, params, dparams, branch)
    if isinstance(gate, UpdateTrace):
        return pool, gate
    new = event.entry
    cap = pool.capacity_M
    members = list(pool.members)
    if len(members) < cap:
        members.append(PoolMember(new, members[-1].weight, "assist"))
        out = ImagePool(reweight(members), pool.capacity_M, new.camera_id)
        return out, UpdateTrace("appended_assist", new.image_id, new.camera_id, gate, branch)

    assists = [i for i, m in enumerate(members) if m.role == "assist"]
    if not assists:
        # only main (and second main) present; this branch never touches them
        return pool, UpdateTrace("no_assist_slot", new.image_id, new.camera_id, gate, branch)
    far = farthest_member(new, pool, dparams, assists)
    evicted = members[far]
    members[far] = PoolMember(new, evicted.weight, evicted.role)
    out = ImagePool(tuple(members), pool.capacity_M, new.camera_id)
    return out, UpdateTrace("replaced_assist", new.image_id, new.camera_id, gate, branch,
                            evicted_image_id=evicted.entry.image_id)


def update_cross_camera(pool: ImagePool, event: CameraEvent, params: UpdateParams,
                        dparams: DistanceParams) -> tuple[ImagePool, UpdateTrace]:
    branch = "cross_camera"
    gate = _precheck(pool, event, params, dparams, branch)
    if isinstance(gate, UpdateTrace):
        return pool, gate
    new = event.entry
    members = list(pool.members)
    main_i = pool.main_index
    old_main = members[main_i]
    cap = pool.capacity_M

    if len(members) < cap:
        members[main_i] = replace(old_main, role="assist")
        members.insert(0, PoolMember(new, old_main.weight, "main"))
        out = ImagePool(reweight(members), pool.capacity_M, new.camera_id)
        return out, UpdateTrace("replaced_main", new.image_id, new.camera_id, gate, branch,
                                previous_main_id=old_main.entry.image_id)

    far = farthest_member(new, pool, dparams)
    evicted = members[far]
    if far == main_i:
        # demoted and evicted at once: drop the old main outright
        members[main_i] = PoolMember(new, old_main.weight, "main")
        members = list(reweight(members))
    else:
        members[main_i] = PoolMember(new, old_main.weight, "main")
        members[far] = PoolMember(old_main.entry, evicted.weight, evicted.role)
    out = ImagePool(tuple(members), pool.capacity_M, new.camera_id)
    return out, UpdateTrace("replaced_main", new.image_id, new.camera_id, gate, branch,
                            evicted_image_id=evicted.entry.image_id,
                            previous_main_id=old_main.entry.image_id)


def apply_event(pool: ImagePool, event: CameraEvent, params: UpdateParams,
                dparams: DistanceParams) -> tuple[ImagePool, UpdateTrace]:
    if event.entry.camera_id == pool.current_camera:
        return update_same_camera(pool, event, params, dparams)
    return update_cross_camera(pool, event, params, dparams)


def replay(pool: ImagePool, events: Sequence[CameraEvent], params: UpdateParams,
           dparams: DistanceParams) -> tuple[ImagePool, list[UpdateTrace]]:
    """Apply ``events`` in order and collect one trace per event."""
    traces = []
    for ev in events:
        pool, tr = apply_event(pool, ev, params, dparams)
        traces.append(tr)
    return pool, traces
