"""Decision rules that pick one final box from two detectors' ranked outputs.

``dadm`` gates on the IoU of the two top-1 boxes and otherwise picks the
candidate whose center lies closest to the pointing ray. The remaining
strategies are the ablation alternatives it is compared against.

Every rule breaks ties by the fixed source priority
``b0_aug > b0_depth > b1_aug > b1_depth`` and, where a pointing ray is
needed but missing or degenerate, falls back to ``b0_aug``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

from .data import ModelOutput, SceneRecord
from .geometry import BoundingBox, PointingRay, area, center, distance_to_cone, iou, ray_pixels_in_box


class FusionError(ValueError):
    pass


class MissingModelError(FusionError):
    def __init__(self, scene_id: str, model: str):
        self.scene_id = scene_id
        self.model = model
        super().__init__(f"scene {scene_id!r} has no output for model {model!r}")


class Branch(str, enum.Enum):
    IOU_GATE = "IOU_GATE"
    DISTANCE = "DISTANCE"
    NO_RAY = "NO_RAY"
    OVERLAP = "OVERLAP"
    CONFIDENCE = "CONFIDENCE"
    GAP = "GAP"


@dataclass(frozen=True)
class FusionConfig:
    t1_iou: float = 0.9
    t2_conf: float = 0.6
    # cone used when measuring candidate distance; 0 = straight ray
    distance_half_angle_deg: float = 0.0
    # cone drawn for the pixel-overlap strategies
    raster_half_angle_deg: float = 5.0
    aug_model_name: str = "aug"
    depth_model_name: str = "depth"

    def __post_init__(self) -> None:
        # values above 1 are accepted: they switch the gate / filter off
        if self.t1_iou < 0 or self.t2_conf < 0:
            raise FusionError(f"thresholds must be >= 0, got t1={self.t1_iou}, t2={self.t2_conf}")
        if self.distance_half_angle_deg < 0 or self.raster_half_angle_deg < 0:
            raise FusionError("cone half angles must be >= 0")


DEFAULT_CONFIG = FusionConfig()


@dataclass(frozen=True)
class Candidate:
    source: str  # b0_aug, b0_depth, b1_aug, b1_depth
    box: BoundingBox
    confidence: float
    distance: float | None = None
    score: float | None = None


@dataclass(frozen=True)
class FusionTrace:
    chosen_box: BoundingBox
    chosen_source: str
    branch: Branch
    candidates: tuple[Candidate, ...]
    iou_top1: float
    warnings: tuple[str, ...] = ()


def _top(aug: ModelOutput, depth: ModelOutput) -> tuple[Candidate, Candidate]:
    if len(aug) == 0 or len(depth) == 0:
        raise FusionError("each model needs at least one prediction")
    return (
        Candidate("b0_aug", aug[0].box, aug[0].confidence),
        Candidate("b0_depth", depth[0].box, depth[0].confidence),
    )


def _usable_ray(ray: PointingRay | None) -> tuple[PointingRay | None, tuple[str, ...]]:
    if ray is None:
        return None, ("missing_ray",)
    if ray.is_degenerate:
        return None, ("degenerate_ray",)
    return ray, ()


def _fallback(cands: tuple[Candidate, ...], iou_top1: float, warnings: tuple[str, ...]) -> FusionTrace:
    return FusionTrace(cands[0].box, cands[0].source, Branch.NO_RAY, cands, iou_top1, warnings)


def _pick_min_distance(
    cands: list[Candidate], ray: PointingRay, cfg: FusionConfig, iou_top1: float
) -> FusionTrace:
    scored = tuple(
        Candidate(c.source, c.box, c.confidence, distance=distance_to_cone(center(c.box), ray, cfg.distance_half_angle_deg))
        for c in cands
    )
    best = scored[0]
    for c in scored[1:]:
        # strict: earlier (higher-priority) candidates keep ties
        if c.distance < best.distance:
            best = c
    return FusionTrace(best.box, best.source, Branch.DISTANCE, scored, iou_top1)


def dadm(
    aug: ModelOutput,
    depth: ModelOutput,
    ray: PointingRay | None,
    cfg: FusionConfig = DEFAULT_CONFIG,
) -> FusionTrace:
    """Depth-aware decision between the top-2 outputs of two models.

    If the two top-1 boxes overlap with IoU >= ``t1_iou`` the augmented
    model's top-1 is returned. Otherwise each model's second prediction
    joins the top-1 boxes as a candidate when its confidence is at least
    ``t2_conf``, and the candidate whose center is nearest the pointing ray
    wins.
    """
    b0_aug, b0_depth = _top(aug, depth)
    iou_top1 = iou(b0_aug.box, b0_depth.box)
    if iou_top1 >= cfg.t1_iou:
        return FusionTrace(b0_aug.box, b0_aug.source, Branch.IOU_GATE, (b0_aug, b0_depth), iou_top1)

    cands = [b0_aug, b0_depth]
    for tag, out in (("b1_aug", aug), ("b1_depth", depth)):
        if len(out) >= 2 and out[1].confidence >= cfg.t2_conf:
            cands.append(Candidate(tag, out[1].box, out[1].confidence))

    usable, warnings = _usable_ray(ray)
    if usable is None:
        return _fallback(tuple(cands), iou_top1, warnings)
    return _pick_min_distance(cands, usable, cfg, iou_top1)


def strategy_a_distance(
    aug: ModelOutput,
    depth: ModelOutput,
    ray: PointingRay | None,
    cfg: FusionConfig = DEFAULT_CONFIG,
) -> FusionTrace:
    """Top-1 box of either model closest to the pointing ray, no gating."""
    b0_aug, b0_depth = _top(aug, depth)
    iou_top1 = iou(b0_aug.box, b0_depth.box)
    usable, warnings = _usable_ray(ray)
    if usable is None:
        return _fallback((b0_aug, b0_depth), iou_top1, warnings)
    return _pick_min_distance([b0_aug, b0_depth], usable, cfg, iou_top1)


def _overlap_strategy(aug, depth, ray, cfg, image_size, normalize: bool) -> FusionTrace:
    b0_aug, b0_depth = _top(aug, depth)
    iou_top1 = iou(b0_aug.box, b0_depth.box)
    usable, warnings = _usable_ray(ray)
    if usable is None:
        return _fallback((b0_aug, b0_depth), iou_top1, warnings)
    if image_size is None:
        raise FusionError("pixel-overlap strategies need the image size")
    width, height = image_size
    scored = []
    for c in (b0_aug, b0_depth):
        n = ray_pixels_in_box(usable, c.box, width, height, cfg.raster_half_angle_deg)
        scored.append(Candidate(c.source, c.box, c.confidence, score=n / area(c.box) if normalize else float(n)))
    best = scored[1] if scored[1].score > scored[0].score else scored[0]
    return FusionTrace(best.box, best.source, Branch.OVERLAP, tuple(scored), iou_top1)


def strategy_b_overlap(aug, depth, ray, cfg=DEFAULT_CONFIG, image_size=None) -> FusionTrace:
    """Top-1 box covering the most pixels of the rasterized pointing cone."""
    return _overlap_strategy(aug, depth, ray, cfg, image_size, normalize=False)


def strategy_c_overlap_pct(aug, depth, ray, cfg=DEFAULT_CONFIG, image_size=None) -> FusionTrace:
    """Like :func:`strategy_b_overlap`, with the pixel count divided by box area."""
    return _overlap_strategy(aug, depth, ray, cfg, image_size, normalize=True)


def strategy_confidence(aug: ModelOutput, depth: ModelOutput) -> FusionTrace:
    b0_aug, b0_depth = _top(aug, depth)
    best = b0_depth if b0_depth.confidence > b0_aug.confidence else b0_aug
    scored = tuple(Candidate(c.source, c.box, c.confidence, score=c.confidence) for c in (b0_aug, b0_depth))
    return FusionTrace(best.box, best.source, Branch.CONFIDENCE, scored, iou(b0_aug.box, b0_depth.box))


def _gap(out: ModelOutput) -> float:
    # a lone prediction has nothing to be confused with
    return out[0].confidence - (out[1].confidence if len(out) >= 2 else 0.0)


def strategy_adaptive_depth(aug: ModelOutput, depth: ModelOutput) -> FusionTrace:
    """Top-1 box of the model with the larger gap between its first two confidences."""
    b0_aug, b0_depth = _top(aug, depth)
    gap_aug, gap_depth = _gap(aug), _gap(depth)
    scored = (
        Candidate(b0_aug.source, b0_aug.box, b0_aug.confidence, score=gap_aug),
        Candidate(b0_depth.source, b0_depth.box, b0_depth.confidence, score=gap_depth),
    )
    best = scored[1] if gap_depth > gap_aug else scored[0]
    return FusionTrace(best.box, best.source, Branch.GAP, scored, iou(b0_aug.box, b0_depth.box))


# --- scene-level entry point ------------------------------------------------

STRATEGY_NAMES = ("dadm", "a", "b", "c", "conf", "adaptive")

_RULES: dict[str, Callable[..., FusionTrace]] = {
    "dadm": lambda aug, depth, ray, cfg, size: dadm(aug, depth, ray, cfg),
    "a": lambda aug, depth, ray, cfg, size: strategy_a_distance(aug, depth, ray, cfg),
    "b": lambda aug, depth, ray, cfg, size: strategy_b_overlap(aug, depth, ray, cfg, size),
    "c": lambda aug, depth, ray, cfg, size: strategy_c_overlap_pct(aug, depth, ray, cfg, size),
    "conf": lambda aug, depth, ray, cfg, size: strategy_confidence(aug, depth),
    "adaptive": lambda aug, depth, ray, cfg, size: strategy_adaptive_depth(aug, depth),
}


def scene_ray(rec: SceneRecord) -> PointingRay | None:
    if rec.eye is None or rec.fingertip is None:
        return None
    return PointingRay(rec.eye, rec.fingertip)


def fuse_scene(rec: SceneRecord, strategy: str = "dadm", cfg: FusionConfig = DEFAULT_CONFIG) -> FusionTrace:
    """Apply a named strategy to one scene's ``aug`` / ``depth`` outputs."""
    try:
        rule = _RULES[strategy]
    except KeyError:
        raise FusionError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGY_NAMES)}") from None
    for name in (cfg.aug_model_name, cfg.depth_model_name):
        if name not in rec.outputs:
            raise MissingModelError(rec.id, name)
    return rule(
        rec.outputs[cfg.aug_model_name],
        rec.outputs[cfg.depth_model_name],
        scene_ray(rec),
        cfg,
        (rec.image_width, rec.image_height),
    )


def trace_to_dict(scene_id: str, trace: FusionTrace) -> dict:
    cands = []
    for c in trace.candidates:
        entry = {"source": c.source, "box": c.box.as_list(), "confidence": c.confidence}
        if c.distance is not None:
            entry["distance"] = c.distance
        if c.score is not None:
            entry["score"] = c.score
        cands.append(entry)
    out = {
        "id": scene_id,
        "chosen_box": trace.chosen_box.as_list(),
        "chosen_source": trace.chosen_source,
        "branch": trace.branch.value,
        "iou_top1": trace.iou_top1,
        "candidates": cands,
    }
    if trace.warnings:
        out["warnings"] = list(trace.warnings)
    return out
