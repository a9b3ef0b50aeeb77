"""Experiment drivers: pool-based evaluation, ablations, sweeps, drift runs.

Every stochastic choice draws from a generator seeded by
``ExperimentConfig.seed``, so a (config, dataset) pair always produces the
same report apart from wall time.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np

from ..core import GalleryEntry, ImagePool, PoolMember
from ..jointdist import JointDistanceParams, joint_distances
from ..metric import DistanceMatrix, DistanceParams, pairwise_distances
from ..pool import CameraEvent, UpdateParams, init_pool, replay
from ..rerank import RerankParams, pool_weights, rerank_from_distances
from ..core import RankedList
from .metrics import EvalReport, build_report, query_result
from .synth import Dataset, SynthSpec, frame_features, make_entry

logger = logging.getLogger(__name__)

Method = Literal["baseline", "rerank", "jointdist"]
ABLATION_MODES = ("baseline", "same_camera_random", "same_camera_rules",
                  "mixed_random", "cross_camera_rules")
# short names for the ablation modes
MODE_ALIASES = {"a": "same_camera_random", "b": "same_camera_rules",
                "c": "mixed_random", "d": "cross_camera_rules"}
SWEEP_AXES = ("M", "k1", "k2", "gamma")


@dataclass(frozen=True)
class ExperimentConfig:
    M: int = 3
    k1: int = 70
    k2: int = 2
    gamma: Optional[float] = None
    beta: int = 1
    kappa: float = math.inf
    normalize: bool = False
    eta_scale: Optional[float] = None
    eta_count: Optional[float] = None
    derive_depths: bool = False
    use_second_main: bool = False
    method: Method = "rerank"
    cross_camera: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.method not in ("baseline", "rerank", "jointdist"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "jointdist" and self.eta_scale is None:
            raise ValueError("jointdist needs eta_scale")
        if self.gamma is not None and not (self.gamma > 0):
            raise ValueError("gamma must be > 0")
        # re-run sub-parameter validation eagerly
        self.rerank_params()
        self.distance_params()

    def distance_params(self) -> DistanceParams:
        return DistanceParams(self.kappa, self.normalize)

    def rerank_params(self) -> RerankParams:
        return RerankParams(self.k1, self.k2, self.eta_count, self.use_second_main,
                            self.derive_depths)

    def update_params(self) -> UpdateParams:
        if self.gamma is None:
            raise ValueError("this experiment needs an update threshold gamma")
        return UpdateParams(self.gamma, self.beta, self.M)

    def echo(self) -> dict:
        return asdict(self)


def rank_pool(pool: ImagePool, data: Dataset, config: ExperimentConfig) -> RankedList:
    """Rank the dataset gallery against ``pool`` with the configured method."""
    dp = config.distance_params()
    dmat = DistanceMatrix(pairwise_distances(pool.features(), data.gallery_matrix, dp))
    if config.method == "jointdist":
        scores = joint_distances(dmat, pool, JointDistanceParams(config.eta_scale, dp))
        return RankedList.from_scores(scores, source="jointdist")
    if config.method == "baseline":
        return RankedList.from_scores(dmat.values[pool.main_index], source="baseline")
    return rerank_from_distances(dmat, pool, config.rerank_params())


def evaluate_pools(pools: Sequence[tuple[str, ImagePool]], data: Dataset,
                   config: ExperimentConfig, label: str = "",
                   extra_echo: Optional[dict] = None) -> EvalReport:
    """Score each (query_id, pool); the pool's main image defines the query."""
    if not data.gallery:
        raise ValueError("dataset has an empty gallery")
    if not config.derive_depths and config.method == "rerank" and config.k1 > len(data.gallery):
        raise ValueError(f"k1 ({config.k1}) exceeds gallery size ({len(data.gallery)})")
    start = time.perf_counter()
    results = []
    for qid, pool in pools:
        main = pool.main.entry
        ranked = rank_pool(pool, data, config)
        results.append(query_result(qid, ranked, data.gallery, main.person_label,
                                    main.camera_id, config.cross_camera))
    elapsed = time.perf_counter() - start
    echo = {**config.echo(), **(extra_echo or {})}
    return build_report(results, echo, elapsed, label=label)


def _single(entry: GalleryEntry) -> ImagePool:
    return ImagePool((PoolMember(entry, 1.0, "main"),), 1)


def _random_pool(main: GalleryEntry, candidates: Sequence[GalleryEntry], M: int,
                 rng: np.random.Generator) -> ImagePool:
    take = min(M - 1, len(candidates))
    picks = rng.choice(len(candidates), size=take, replace=False) if take else []
    chosen = [main] + [candidates[i] for i in sorted(picks)]
    w = pool_weights(len(chosen))
    members = [PoolMember(e, wi, "main" if i == 0 else "assist")
               for i, (e, wi) in enumerate(zip(chosen, w))]
    return ImagePool(tuple(members), M, main.camera_id)


def _rules_pool(track: Sequence[GalleryEntry], later: Sequence[GalleryEntry],
                config: ExperimentConfig) -> ImagePool:
    up = config.update_params()
    pool = init_pool(track, up)
    used = (up.capacity_M - 1) * up.beta + 1
    events = [CameraEvent(e) for e in list(track[used:]) + list(later)]
    pool, _ = replay(pool, events, up, config.distance_params())
    return pool


def build_pool(mode: str, label: str, camera: int, data: Dataset, config: ExperimentConfig,
               rng: np.random.Generator) -> ImagePool:
    """Image Pool for one probe track under an ablation mode."""
    mode = MODE_ALIASES.get(mode, mode)
    tracks = data.tracks_of(label)
    track = tracks[camera]
    main = track[0]
    if mode == "baseline" or config.M == 1:
        return _single(main)
    if mode == "same_camera_random":
        return _random_pool(main, track[1:], config.M, rng)
    if mode == "mixed_random":
        pool_src = [e for cam in sorted(tracks) for e in tracks[cam] if e is not main]
        return _random_pool(main, pool_src, config.M, rng)
    if mode == "same_camera_rules":
        return _rules_pool(track, (), config)
    if mode == "cross_camera_rules":
        # other cameras only, interleaved by frame index so that the target
        # keeps switching camera
        cams = sorted(tracks)
        order = cams[cams.index(camera) + 1:] + cams[:cams.index(camera)]
        later = sorted((e for cam in order for e in tracks[cam]),
                       key=lambda e: (e.frame_index, order.index(e.camera_id)))
        return _rules_pool(track[:1], later, config)
    raise ValueError(f"unknown ablation mode {mode!r}")


def run_ablation(mode: str, data: Dataset, config: ExperimentConfig) -> EvalReport:
    """Evaluate joint re-ranking with pools assembled by ``mode``.

    Modes: ``baseline`` (main only), ``same_camera_random`` (a),
    ``same_camera_rules`` (b), ``mixed_random`` (c), ``cross_camera_rules`` (d).
    """
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown ablation mode {mode!r}")
    if mode in ("mixed_random", "cross_camera_rules") and len(data.cameras) < 2:
        raise ValueError(f"mode {mode} needs data from at least two cameras")
    rng = np.random.default_rng(config.seed)
    pools = []
    for (lbl, cam) in sorted(data.tracks):
        pool = build_pool(mode, lbl, cam, data, config, rng)
        pools.append((data.tracks[(lbl, cam)][0].image_id, pool))
    return evaluate_pools(pools, data, config, label=mode, extra_echo={"mode": mode})


@dataclass
class Sweep:
    axis: str
    reports: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def __len__(self):
        return len(self.reports)

    def __iter__(self):
        return iter(self.reports)


def run_sweep(axis: str, grid: Sequence, data: Dataset, fixed: ExperimentConfig,
              mode: str = "same_camera_rules") -> Sweep:
    """One report per grid value with every other parameter held fixed.

    Values that make an invalid configuration (for instance k2 > k1) are
    skipped and recorded in ``Sweep.skipped``.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")
    if not grid:
        raise ValueError("empty sweep grid")
    out = Sweep(axis)
    for value in grid:
        try:
            cfg = replace(fixed, **{axis: value})
            if cfg.method == "rerank" and not cfg.derive_depths and cfg.k1 > len(data.gallery):
                raise ValueError(f"k1 ({cfg.k1}) exceeds gallery size ({len(data.gallery)})")
        except ValueError as exc:
            msg = f"{axis}={value}: {exc}"
            logger.warning("skipping %s", msg)
            out.skipped.append(msg)
            continue
        rep = run_ablation(mode, data, cfg)
        rep.label = f"{axis}={value}"
        out.reports.append(rep)
    return out


@dataclass
class DriftResult:
    checkpoints: list
    updating_rank1: list
    frozen_rank1: list
    accepted_updates: int
    config_echo: dict


def run_drift_simulation(spec: SynthSpec, config: ExperimentConfig, dwell: int = 4,
                         checkpoints: Optional[Sequence[int]] = None) -> DriftResult:
    """Track every identity through the cameras while camera bias drifts.

    Each identity walks the cameras in turn, staying ``dwell`` steps in
    each.  At step ``t`` its even frame ``2t`` is a confirmed event for the
    updating pool; the gallery at a checkpoint holds every identity's odd
    frame ``2t + 1`` in every camera.  A frozen copy of the initial pool is
    scored alongside.  Same-camera true matches count as relevant.
    """
    feats = frame_features(spec)
    n, c, f, _ = feats.shape
    steps = f // 2
    if checkpoints is None:
        checkpoints = list(range(0, steps, max(1, steps // 6))) + [steps - 1]
    checkpoints = sorted(set(checkpoints))
    up = config.update_params()
    dp = config.distance_params()
    cfg = replace(config, cross_camera=False)

    def cam_at(i: int, t: int) -> int:
        return (i + t // dwell) % c

    pools, frozen = [], []
    for i in range(n):
        cam = cam_at(i, 0)
        track = [make_entry(i, cam, 2 * t, feats[i, cam, 2 * t])
                 for t in range(min(dwell, steps))]
        p = init_pool(track[:1], up)
        pools.append(p)
        frozen.append(p)

    accepted = 0
    upd_curve, frz_curve = [], []
    for t in range(steps):
        if t > 0:
            for i in range(n):
                cam = cam_at(i, t)
                ev = CameraEvent(make_entry(i, cam, 2 * t, feats[i, cam, 2 * t]))
                pools[i], trace = replay(pools[i], [ev], up, dp)
                accepted += trace[0].accepted
        if t in checkpoints:
            gallery = tuple(make_entry(i, cam, 2 * t + 1, feats[i, cam, 2 * t + 1])
                            for i in range(n) for cam in range(c))
            data = Dataset(gallery, {})
            upd = evaluate_pools([(p.main.entry.image_id, p) for p in pools], data, cfg)
            frz = evaluate_pools([(p.main.entry.image_id, p) for p in frozen], data, cfg)
            upd_curve.append(upd.rank1)
            frz_curve.append(frz.rank1)
    return DriftResult(list(checkpoints), upd_curve, frz_curve, accepted,
                       {**config.echo(), **spec.echo(), "dwell": dwell})
