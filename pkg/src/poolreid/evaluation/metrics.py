"""CMC and mAP over per-query ranked label lists."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import GalleryEntry, RankedList

logger = logging.getLogger(__name__)

TABLE_RANKS = (1, 5, 10, 20)


@dataclass(frozen=True)
class QueryResult:
    query_id: str
    ranked_labels: tuple
    truth_label: str
    num_relevant: int

    def __post_init__(self):
        object.__setattr__(self, "ranked_labels", tuple(self.ranked_labels))
        if self.num_relevant < 0:
            raise ValueError("num_relevant must be >= 0")

    def hits(self) -> np.ndarray:
        return np.fromiter((lbl == self.truth_label for lbl in self.ranked_labels),
                           dtype=bool, count=len(self.ranked_labels))

    @property
    def first_match_rank(self) -> Optional[int]:
        """1-based rank of the first correct label, None if absent."""
        h = np.flatnonzero(self.hits())
        return int(h[0]) + 1 if h.size else None


def query_result(query_id: str, ranked: RankedList, gallery: Sequence[GalleryEntry],
                 truth_label: str, query_camera: Optional[int] = None,
                 cross_camera: bool = True) -> QueryResult:
    """Turn a ranking into labels, dropping same-camera true matches if asked.

    With ``cross_camera`` set, gallery entries sharing both the query's
    identity and its camera are neither relevant nor counted as errors.
    """
    labels = []
    for idx in ranked.indices:
        e = gallery[idx]
        if cross_camera and e.person_label == truth_label and e.camera_id == query_camera:
            continue
        labels.append(e.person_label)
    return QueryResult(query_id, tuple(labels), truth_label,
                       sum(lbl == truth_label for lbl in labels))


def _valid(results: Sequence[QueryResult], what: str) -> list[QueryResult]:
    valid = [r for r in results if r.num_relevant >= 1]
    dropped = len(results) - len(valid)
    if dropped:
        logger.warning("%s: excluded %d of %d queries with no relevant gallery entry",
                       what, dropped, len(results))
    return valid


def cmc_curve(results: Sequence[QueryResult], max_rank: int) -> dict[int, float]:
    """Fraction of queries whose first correct match is within each rank."""
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    valid = _valid(results, "cmc")
    if not valid:
        return {r: 0.0 for r in range(1, max_rank + 1)}
    hist = np.zeros(max_rank + 1, dtype=np.int64)
    for r in valid:
        first = r.first_match_rank
        if first is not None and first <= max_rank:
            hist[first] += 1
    acc = np.cumsum(hist)[1:] / len(valid)
    return {rank: float(a) for rank, a in enumerate(acc, start=1)}


def average_precision(result: QueryResult) -> float:
    """Mean of precision at each relevant position (no interpolation)."""
    if result.num_relevant < 1:
        raise ValueError("average precision undefined without relevant entries")
    positions = np.flatnonzero(result.hits()) + 1
    if positions.size == 0:
        return 0.0
    precisions = np.arange(1, positions.size + 1) / positions
    return float(precisions.sum() / result.num_relevant)


def mean_average_precision(results: Sequence[QueryResult]) -> float:
    valid = _valid(results, "mAP")
    if not valid:
        return 0.0
    return float(np.mean([average_precision(r) for r in valid]))


@dataclass
class EvalReport:
    cmc: dict
    map_score: float
    per_query_ap: list
    wall_time_seconds: float
    config_echo: dict
    first_match_ranks: list = field(default_factory=list)
    num_excluded: int = 0
    label: str = ""

    def rank(self, r: int) -> float:
        if r in self.cmc:
            return self.cmc[r]
        return self.cmc[max(self.cmc)] if r > max(self.cmc) else 0.0

    @property
    def rank1(self) -> float:
        return self.rank(1)

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "label": self.label,
            "cmc": {str(k): v for k, v in sorted(self.cmc.items())},
            "map": self.map_score,
            "per_query_ap": list(self.per_query_ap),
            "first_match_ranks": list(self.first_match_ranks),
            "num_excluded": self.num_excluded,
            "config": self.config_echo,
        }
        if timing:
            d["wall_time_seconds"] = self.wall_time_seconds
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True)

    def cmc_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "accuracy"])
        for k in sorted(self.cmc):
            w.writerow([k, repr(self.cmc[k])])
        return buf.getvalue()


def build_report(results: Sequence[QueryResult], config_echo: dict, wall_time: float,
                 max_rank: Optional[int] = None, label: str = "") -> EvalReport:
    valid = [r for r in results if r.num_relevant >= 1]
    if max_rank is None:
        max_rank = max([len(r.ranked_labels) for r in results] + [max(TABLE_RANKS)])
    return EvalReport(
        cmc=cmc_curve(results, max_rank),
        map_score=mean_average_precision(results),
        per_query_ap=[average_precision(r) for r in valid],
        wall_time_seconds=wall_time,
        config_echo=dict(config_echo),
        first_match_ranks=[r.first_match_rank for r in valid],
        num_excluded=len(results) - len(valid),
        label=label,
    )


def format_table(reports: Sequence[EvalReport], ranks=TABLE_RANKS, timing: bool = False) -> str:
    """Plain-text table with columns Rank-1, Rank-5, Rank-10, Rank-20, mAP (percent)."""
    header = ["Method"] + [f"Rank-{r}" for r in ranks] + ["mAP"] + (["Time"] if timing else [])
    rows = []
    for rep in reports:
        row = [rep.label or "-"] + [f"{100 * rep.rank(r):.6g}" for r in ranks]
        row.append(f"{100 * rep.map_score:.6g}")
        if timing:
            row.append(f"{rep.wall_time_seconds:.6g}")
        rows.append(row)
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(header, widths))]
    lines += ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


def format_records(reports: Sequence[EvalReport], ranks=TABLE_RANKS) -> str:
    """One CSV record per (report, metric) at full precision."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "metric", "value"])
    for rep in reports:
        for r in ranks:
            w.writerow([rep.label, f"rank-{r}", repr(rep.rank(r))])
        w.writerow([rep.label, "mAP", repr(rep.map_score)])
        w.writerow([rep.label, "wall_time_seconds", repr(rep.wall_time_seconds)])
    return buf.getvalue()
