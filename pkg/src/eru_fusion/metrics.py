"""Accuracy at IoU thresholds, overall and per object-size bucket.

Each scene yields exactly one final box, so the usual detection AP reduces to
the fraction of scenes whose box reaches IoU >= threshold with the ground
truth. Reports keep integer counts and derive accuracies from them.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

from .data import SIZE_CLASSES, SceneRecord
from .fusion import DEFAULT_CONFIG, FusionConfig, FusionError, fuse_scene
from .geometry import BoundingBox, GeometryError, Point2, area, iou

DEFAULT_THRESHOLDS = (0.25, 0.50, 0.75)
BUCKETS = ("all",) + SIZE_CLASSES

# a strategy is either a fusion rule name or ``record -> chosen box``
Strategy = Union[str, Callable[[SceneRecord], BoundingBox]]


@dataclass(frozen=True)
class BucketBoundaries:
    lower: float
    upper: float

    def classify(self, ratio: float) -> str:
        if ratio < self.lower:
            return "S"
        if ratio < self.upper:
            return "M"
        return "L"


def area_ratio(rec: SceneRecord) -> float:
    return area(rec.gt_box) / (rec.image_width * rec.image_height)


def bucket_boundaries(ratios: Sequence[float]) -> BucketBoundaries:
    """Tertile cut points: the sorted ratios at 0-based ranks n//3 and 2n//3."""
    if not ratios:
        raise ValueError("cannot bucket an empty record list")
    s = sorted(ratios)
    n = len(s)
    return BucketBoundaries(s[min(n - 1, n // 3)], s[min(n - 1, (2 * n) // 3)])


def assign_buckets(records: Sequence[SceneRecord]) -> tuple[list[SceneRecord], BucketBoundaries]:
    """Label each record S/M/L by GT-area / image-area tertiles.

    Records that already carry a size class keep it.
    """
    bounds = bucket_boundaries([area_ratio(r) for r in records])
    out = [
        r if r.size_class is not None else r.replace(size_class=bounds.classify(area_ratio(r)))
        for r in records
    ]
    return out, bounds


def score_scene(
    chosen: BoundingBox, gt: BoundingBox, thresholds: Sequence[float] = DEFAULT_THRESHOLDS
) -> tuple[bool, ...]:
    v = iou(chosen, gt)
    return tuple(v >= t for t in thresholds)


@dataclass(frozen=True)
class MetricsReport:
    thresholds: tuple[float, ...]
    counts: Mapping[str, int]
    # correct[threshold index][bucket]
    correct: tuple[Mapping[str, int], ...]
    failed_ids: tuple[str, ...] = field(default=())

    @property
    def total(self) -> int:
        return self.counts["all"]

    def accuracy(self, threshold: float, bucket: str = "all") -> float:
        i = self.thresholds.index(threshold)
        n = self.counts[bucket]
        return self.correct[i][bucket] / n if n else 0.0

    def table(self) -> list[list[float]]:
        """Accuracies as ``[threshold][All, S, M, L]``."""
        return [[self.accuracy(t, b) for b in BUCKETS] for t in self.thresholds]


def _choose(rec: SceneRecord, strategy: Strategy, cfg: FusionConfig) -> BoundingBox:
    if isinstance(strategy, str):
        return fuse_scene(rec, strategy, cfg).chosen_box
    return strategy(rec)


def _scene_outcome(args) -> tuple[bool, ...] | None:
    rec, strategy, cfg, thresholds = args
    try:
        chosen = _choose(rec, strategy, cfg)
    except (FusionError, GeometryError, KeyError):
        return None
    return score_scene(chosen, rec.gt_box, thresholds)


def evaluate(
    records: Sequence[SceneRecord],
    strategy: Strategy = "dadm",
    cfg: FusionConfig = DEFAULT_CONFIG,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    jobs: int = 1,
) -> MetricsReport:
    """Run ``strategy`` on every scene and aggregate accuracy per threshold and bucket.

    Scenes the strategy cannot process (e.g. a required model output is
    missing) count as wrong at every threshold and are listed in
    ``failed_ids``. Unbucketed records are bucketed first.
    """
    thresholds = tuple(float(t) for t in thresholds)
    if records and any(r.size_class is None for r in records):
        records, _ = assign_buckets(records)
    work = [(r, strategy, cfg, thresholds) for r in records]
    if jobs > 1 and isinstance(strategy, str) and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_scene_outcome, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        outcomes = [_scene_outcome(w) for w in work]

    counts = {b: 0 for b in BUCKETS}
    correct = [{b: 0 for b in BUCKETS} for _ in thresholds]
    failed = []
    for rec, hits in zip(records, outcomes):
        counts["all"] += 1
        counts[rec.size_class] += 1
        if hits is None:
            failed.append(rec.id)
            continue
        for i, hit in enumerate(hits):
            if hit:
                correct[i]["all"] += 1
                correct[i][rec.size_class] += 1
    return MetricsReport(thresholds, counts, tuple(correct), tuple(failed))


def alignment_cosine(eye: Point2, fingertip: Point2, object_center: Point2) -> float:
    """Cosine between the eye->fingertip and eye->object vectors."""
    ux, uy = fingertip.x - eye.x, fingertip.y - eye.y
    vx, vy = object_center.x - eye.x, object_center.y - eye.y
    nu = math.hypot(ux, uy)
    nv = math.hypot(vx, vy)
    if nu == 0 or nv == 0:
        raise GeometryError("alignment cosine undefined for a zero-length vector")
    c = (ux * vx + uy * vy) / (nu * nv)
    return max(-1.0, min(1.0, c))


# --- rendering --------------------------------------------------------------


def _columns(thresholds: Sequence[float]) -> list[str]:
    return ["strategy", "scenes"] + [f"{b if b != 'all' else 'All'}@{t:.2f}" for t in thresholds for b in BUCKETS]


def _row(name: str, report: MetricsReport) -> list[str]:
    cells = [name, str(report.total)]
    for t in report.thresholds:
        cells.extend(f"{100 * report.accuracy(t, b):.1f}" for b in BUCKETS)
    return cells


def render_reports(
    reports: Mapping[str, MetricsReport], fmt: str = "markdown", thresholds: Sequence[float] | None = None
) -> str:
    """One row per strategy; per threshold the columns are All, S, M, L (percent)."""
    if thresholds is None:
        thresholds = next(iter(reports.values())).thresholds if reports else DEFAULT_THRESHOLDS
    for name, rep in reports.items():
        if tuple(rep.thresholds) != tuple(thresholds):
            raise ValueError(f"report {name!r} uses thresholds {rep.thresholds}, expected {tuple(thresholds)}")
    header = _columns(thresholds)
    rows = [_row(name, rep) for name, rep in reports.items()]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * 2 + ["---:"] * (len(header) - 2)) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def render_report(report: MetricsReport, fmt: str = "markdown", name: str = "result") -> str:
    """Single-report table; a report over zero scenes renders as the header only."""
    if report.total == 0:
        return render_reports({}, fmt, report.thresholds)
    return render_reports({name: report}, fmt)
