"""Command-line interface.

Exit codes: 0 success, 1 computation failure, 2 configuration or file error.
Tables print numbers at 6 significant digits; CSV output keeps full
precision.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .core import ImagePool, PoolMember, RankedList, feature_matrix
from .evaluation.experiments import (ABLATION_MODES, MODE_ALIASES, SWEEP_AXES, ExperimentConfig,
                                     evaluate_pools, run_ablation, run_sweep)
from .evaluation.metrics import format_records, format_table
from .evaluation.synth import Dataset, SynthSpec, generate_synthetic
from .ingest import FormatError, load_embeddings, load_event_stream, save_embeddings
from .jointdist import JointDistanceParams, rank_by_joint_distance
from .metric import DistanceParams, pool_gallery_distances
from .pool import UpdateParams, designate_second_main, init_pool, replay
from .rerank import RerankParams, baseline_ranking, pool_weights, rerank_from_distances

logger = logging.getLogger("poolreid")


class ConfigError(Exception):
    """Bad flags or unreadable input; maps to exit code 2."""


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {s}")
    return v


def _kappa(s: str) -> float:
    return math.inf if s.lower() in ("inf", "none") else _positive_float(s)


def _load(path: str, what: str):
    try:
        return load_embeddings(path)
    except FileNotFoundError:
        raise ConfigError(f"{what}: file not found: {path}") from None
    except (FormatError, OSError) as exc:
        raise ConfigError(f"{what}: {path}: {exc}") from None


def _static_pool(entries, M: int, second_main: Optional[str]) -> ImagePool:
    """Pool from a file: first record is main, the rest assists."""
    if not entries:
        raise ConfigError("--pool: pool file has no records")
    if len(entries) > M:
        raise ConfigError(f"--pool: {len(entries)} records exceed pool capacity -M {M}")
    w = pool_weights(len(entries))
    members = [PoolMember(e, wi, "main" if i == 0 else "assist")
               for i, (e, wi) in enumerate(zip(entries, w))]
    pool = ImagePool(tuple(members), len(members), entries[0].camera_id)
    if second_main is not None:
        ids = [e.image_id for e in entries]
        if second_main not in ids[1:]:
            raise ConfigError(f"--second-main: {second_main!r} is not an assist in the pool file")
        pool = designate_second_main(pool, ids.index(second_main))
    return pool


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _fmt(x: float, fmt: str) -> str:
    return repr(float(x)) if fmt == "csv" else f"{x:.6g}"


def _ranking_lines(ranked: RankedList, gallery, fmt: str) -> list[str]:
    sep = "," if fmt == "csv" else "\t"
    lines = [sep.join(["rank", "image_id", "score"])]
    for r, (idx, s) in enumerate(zip(ranked.indices, ranked.scores), start=1):
        lines.append(sep.join([str(r), gallery[idx].image_id, _fmt(s, fmt)]))
    return lines


def _distance_params(args) -> DistanceParams:
    return DistanceParams(args.kappa, args.normalize)


# -- commands ---------------------------------------------------------------

def cmd_rank(args) -> str:
    gallery = _load(args.gallery, "--gallery")
    pool = _static_pool(_load(args.pool, "--pool"), args.M, None)
    dp = _distance_params(args)
    if args.mode == "jointdist":
        if args.eta_scale is None:
            raise ConfigError("--eta-scale is required with --mode jointdist")
        ranked = rank_by_joint_distance(gallery, pool, JointDistanceParams(
            args.eta_scale, dp, include_main=not args.exclude_main))
    else:
        ranked = baseline_ranking(pool.main.entry.feature, gallery, dp)
    return "\n".join(_ranking_lines(ranked, gallery, args.format)) + "\n"


def cmd_rerank(args) -> str:
    gallery = _load(args.gallery, "--gallery")
    pool = _static_pool(_load(args.pool, "--pool"), args.M, args.second_main)
    params = RerankParams(args.k1, args.k2, args.eta_count, args.second_main is not None,
                          args.derive_depths)
    if not params.derive_depths and params.k1 > len(gallery):
        raise ConfigError(f"--k1 ({params.k1}) exceeds gallery size ({len(gallery)})")
    dmat = pool_gallery_distances(pool, gallery, _distance_params(args), feature_matrix(gallery))
    ranked, trace = rerank_from_distances(dmat, pool, params, with_trace=True)
    lines = _ranking_lines(ranked, gallery, args.format)
    sep = "," if args.format == "csv" else "\t"
    lines += ["", "# trace: membership count T per top-k1 entry",
              sep.join(["image_id", "T", "promoted"])]
    promoted = set(trace.promoted)
    for idx, t in trace.counts.items():
        lines.append(sep.join([gallery[idx].image_id, str(t), "1" if idx in promoted else "0"]))
    lines.append("# depths " + " ".join(f"{k}={v}" for k, v in trace.depths.items()))
    return "\n".join(lines) + "\n"


def _pool_lines(pool: ImagePool, fmt: str) -> list[str]:
    sep = "," if fmt == "csv" else "\t"
    out = [sep.join(["image_id", "camera_id", "role", "weight"])]
    for m in pool.members:
        out.append(sep.join([m.entry.image_id, str(m.entry.camera_id), m.role,
                             _fmt(m.weight, fmt)]))
    return out


def cmd_simulate(args) -> str:
    track = _load(args.pool, "--pool")
    if not track:
        raise ConfigError("--pool: initial track file has no records")
    try:
        events = load_event_stream(args.events)
    except FileNotFoundError:
        raise ConfigError(f"--events: file not found: {args.events}") from None
    except (FormatError, OSError) as exc:
        raise ConfigError(f"--events: {args.events}: {exc}") from None
    up = UpdateParams(args.gamma, args.beta, args.M)
    dp = _distance_params(args)
    pool = init_pool(track, up)

    gallery = _load(args.gallery, "--gallery") if args.gallery else None
    config = ExperimentConfig(M=args.M, k1=args.k1, k2=args.k2, gamma=args.gamma, beta=args.beta,
                              kappa=args.kappa, normalize=args.normalize,
                              cross_camera=not args.same_camera_relevant)
    if gallery is not None and config.k1 > len(gallery):
        raise ConfigError(f"--k1 ({config.k1}) exceeds gallery size ({len(gallery)})")
    if gallery is not None and pool.main.entry.person_label is None:
        raise ConfigError("--gallery evaluation needs a labeled initial track")
    data = Dataset(tuple(gallery), {}) if gallery is not None else None

    def snapshot(step: int, p: ImagePool) -> str:
        rep = evaluate_pools([(p.main.entry.image_id, p)], data, config)
        return f"# eval step={step} rank1={_fmt(rep.rank1, args.format)} " \
               f"map={_fmt(rep.map_score, args.format)}"

    lines = ["# initial pool", *_pool_lines(pool, args.format)]
    if data is not None:
        lines.append(snapshot(0, pool))
    lines += ["# trace", "\t".join(["action", "branch", "image_id", "camera_id",
                                    "criterion", "evicted", "previous_main"])]
    accepted = 0
    for step, ev in enumerate(events, start=1):
        pool, (tr,) = replay(pool, [ev], up, dp)
        lines.append(tr.to_line())
        if tr.accepted:
            accepted += 1
            if data is not None:
                lines.append(snapshot(step, pool))
    lines += [f"# events={len(events)} accepted={accepted}", "# final pool",
              *_pool_lines(pool, args.format)]
    return "\n".join(lines) + "\n"


def _dataset(args) -> Dataset:
    if args.query or args.gallery:
        if not (args.query and args.gallery):
            raise ConfigError("--query and --gallery must be given together")
        query = _load(args.query, "--query")
        try:
            return Dataset.from_entries(query, _load(args.gallery, "--gallery"))
        except ValueError as exc:
            raise ConfigError(f"--query: {exc}") from None
    return generate_synthetic(_synth_spec(args))


def _synth_spec(args) -> SynthSpec:
    return SynthSpec(args.identities, args.cameras, args.dim, args.frames, args.spread,
                     args.bias, args.seed, args.drift, args.gallery_frames)


def _experiment_config(args, **over) -> ExperimentConfig:
    kw = dict(M=args.M, k1=args.k1, k2=args.k2, gamma=args.gamma, beta=args.beta,
              kappa=args.kappa, normalize=args.normalize, eta_scale=args.eta_scale,
              eta_count=args.eta_count, derive_depths=args.derive_depths, method=args.method,
              cross_camera=not args.same_camera_relevant, seed=args.seed)
    kw.update(over)
    return ExperimentConfig(**kw)


def _needs_gamma(mode: str, config: ExperimentConfig) -> None:
    mode = MODE_ALIASES.get(mode, mode)
    if mode in ("same_camera_rules", "cross_camera_rules") and config.gamma is None \
            and config.M > 1:
        raise ConfigError(f"--gamma is required for rules mode {mode}")


def _report_output(reports, args, echo: dict) -> str:
    if args.format == "json":
        return json.dumps([r.to_dict(timing=args.timing) for r in reports],
                          sort_keys=True, indent=1) + "\n"
    head = "# config " + json.dumps(echo, sort_keys=True, default=str)
    body = format_records(reports) if args.format == "csv" else \
        format_table(reports, timing=args.timing) + "\n"
    if args.format == "csv" and not args.timing:
        body = "".join(l + "\n" for l in body.splitlines() if ",wall_time_seconds," not in l)
    return head + "\n" + body


def _parse_rules(s: str) -> list[str]:
    out = []
    for r in s.split(","):
        r = r.strip()
        full = MODE_ALIASES.get(r, r)
        if full not in ABLATION_MODES:
            raise ConfigError(f"--rules: unknown mode {r!r}")
        out.append(r)
    return out


def cmd_eval(args) -> str:
    rules = _parse_rules(args.rules)
    config = _experiment_config(args)
    for r in rules:
        _needs_gamma(r, config)
    data = _dataset(args)
    reports = []
    for r in rules:
        rep = run_ablation(r, data, config)
        rep.label = r
        reports.append(rep)
    if args.cmc_csv:
        Path(args.cmc_csv).write_text(reports[0].cmc_csv(), encoding="utf-8")
    return _report_output(reports, args, {**config.echo(), "rules": rules,
                                          "data": _data_echo(args)})


def _data_echo(args) -> dict:
    if args.query:
        return {"query": args.query, "gallery": args.gallery}
    return _synth_spec(args).echo()


def _parse_grid(axis: str, s: str) -> list:
    conv = float if axis == "gamma" else int
    try:
        return [conv(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--grid: cannot parse {s!r} for axis {axis}") from None


def cmd_sweep(args) -> str:
    grid = _parse_grid(args.axis, args.grid)
    if not grid:
        raise ConfigError("--grid is empty")
    (rule,) = _parse_rules(args.rules)
    fixed = _experiment_config(args)
    if args.axis != "gamma":
        # gamma matters as soon as any grid point has assists
        _needs_gamma(rule, replace(fixed, M=max(grid)) if args.axis == "M" else fixed)
    data = _dataset(args)
    sweep = run_sweep(args.axis, grid, data, fixed, mode=MODE_ALIASES.get(rule, rule))
    out = _report_output(sweep.reports, args, {**fixed.echo(), "axis": args.axis, "grid": grid,
                                               "rules": rule, "data": _data_echo(args)})
    for msg in sweep.skipped:
        out += f"# skipped {msg}\n"
    return out


def cmd_synth(args) -> str:
    spec = _synth_spec(args)
    data = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = "txt" if args.text else "bin"
    save_embeddings(data.query_entries(), out / f"query.{ext}", text=args.text)
    save_embeddings(list(data.gallery), out / f"gallery.{ext}", text=args.text)
    (out / "spec.json").write_text(json.dumps(spec.echo(), sort_keys=True) + "\n")
    return (f"wrote {len(data.query_entries())} query and {len(data.gallery)} gallery entries "
            f"to {out}\n")


# -- parser -----------------------------------------------------------------

def _common(p: argparse.ArgumentParser, fmt_choices=("table", "csv")) -> None:
    p.add_argument("--kappa", type=_kappa, default=math.inf,
                   help="similarity threshold (default inf: no threshold)")
    p.add_argument("--normalize", action="store_true", help="L2-normalise features first")
    p.add_argument("--format", choices=fmt_choices, default="table")
    p.add_argument("-o", "--output", help="write to this file instead of stdout")


def _rerank_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k1", type=_positive_int, default=70, help="main-list depth (default 70)")
    p.add_argument("--k2", type=_positive_int, default=2, help="assist-list depth (default 2)")
    p.add_argument("--eta-count", type=_positive_float,
                   help="scale for weight-derived list depths")
    p.add_argument("--derive-depths", action="store_true",
                   help="derive list depths from member weights and --eta-count")


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    _rerank_flags(p)
    p.add_argument("-M", type=_positive_int, default=3, help="pool capacity (default 3)")
    p.add_argument("--gamma", type=_positive_float, help="update threshold (rules modes)")
    p.add_argument("--beta", type=_positive_int, default=1, help="initial sampling stride")
    p.add_argument("--eta-scale", type=_positive_float, help="joint-distance scale")
    p.add_argument("--method", choices=("rerank", "jointdist", "baseline"), default="rerank")
    p.add_argument("--same-camera-relevant", action="store_true",
                   help="count same-camera true matches as relevant")
    p.add_argument("--rules", default="b",
                   help="pool modes: baseline,a,b,c,d or full names (comma separated)")
    p.add_argument("--timing", action="store_true", help="include wall time in output")
    p.add_argument("--cmc-csv", help="also write the first report's CMC curve as CSV")
    p.add_argument("--query", help="labeled query-side embedding file (tracks)")
    p.add_argument("--gallery", help="labeled gallery embedding file")
    _synth_flags(p)


def _synth_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic data (used when no files are given)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--identities", type=_positive_int, default=50)
    g.add_argument("--cameras", type=_positive_int, default=4)
    g.add_argument("--dim", type=_positive_int, default=32)
    g.add_argument("--frames", type=_positive_int, default=12,
                   help="frames per identity per camera")
    g.add_argument("--spread", type=float, default=0.5, help="within-identity noise scale")
    g.add_argument("--bias", type=float, default=2.0, help="camera bias norm")
    g.add_argument("--drift", type=float, default=0.0, help="camera bias drift over frames")
    g.add_argument("--gallery-frames", type=int, default=2,
                   help="trailing frames of each track placed in the gallery")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poolreid", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rank", help="baseline or joint-distance ranking")
    p.add_argument("--gallery", required=True)
    p.add_argument("--pool", required=True, help="pool file; first record is main")
    p.add_argument("-M", type=_positive_int, default=3, help="pool capacity (default 3)")
    p.add_argument("--mode", choices=("baseline", "jointdist"), default="baseline")
    p.add_argument("--eta-scale", type=_positive_float)
    p.add_argument("--exclude-main", action="store_true",
                   help="leave the main image out of the joint-distance sums")
    _common(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("rerank", help="joint re-ranking with a trace of T counts")
    p.add_argument("--gallery", required=True)
    p.add_argument("--pool", required=True, help="pool file; first record is main")
    p.add_argument("-M", type=_positive_int, default=3, help="pool capacity (default 3)")
    p.add_argument("--second-main", metavar="IMAGE_ID", help="assist to use as second main")
    _rerank_flags(p)
    _common(p)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("simulate", help="replay camera events through the update rules")
    p.add_argument("--pool", required=True, help="initial track (one camera)")
    p.add_argument("--events", required=True)
    p.add_argument("--gamma", type=_positive_float, required=True)
    p.add_argument("--beta", type=_positive_int, default=1)
    p.add_argument("-M", type=_positive_int, default=3)
    p.add_argument("--gallery", help="labeled gallery; enables rank-1 after each accepted update")
    p.add_argument("--same-camera-relevant", action="store_true")
    _rerank_flags(p)
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="evaluate pool-selection modes, one row each")
    p.add_argument("--mode", choices=("ablation",), default="ablation")
    _experiment_flags(p)
    _common(p, ("table", "csv", "json"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="one report per value of a parameter")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--grid", required=True, help="comma-separated values")
    _experiment_flags(p)
    _common(p, ("table", "csv", "json"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--text", action="store_true", help="text format instead of binary")
    _synth_flags(p)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.func(args)
    except ConfigError as exc:
        print(f"poolreid {args.command}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # parameter combinations rejected by the library validators
        print(f"poolreid {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"poolreid {args.command}: computation failed: {exc!r}", file=sys.stderr)
        return 1
    if args.command == "synth":
        sys.stderr.write(text)
        return 0
    try:
        _write(text, getattr(args, "output", None))
    except OSError as exc:
        print(f"poolreid {args.command}: cannot write output: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
