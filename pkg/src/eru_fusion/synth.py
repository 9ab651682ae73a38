"""Seeded synthetic scenes with two simulated detectors.

Each scene holds one target and several same-category distractors, an eye
and a noisy fingertip aimed at the target, and ranked top-2 outputs for an
``aug`` model and a ``depth`` model. Their errors are box-level: a wrong
model ranks a distractor first and the target second.

In *depth-critical* scenes two distractors sit on the eye-target line, one
in front of the target and one behind it. The ``aug`` model always picks the
one behind, while the ``depth`` model always finds the target.

Per-scene decisions (criticality, which model errs) come from an RNG stream
keyed by ``(seed, index)`` and the layout from one keyed by
``(seed, index, attempt)``, so a dataset of ``n`` scenes is a prefix of the
dataset of ``n + 1``.
Geometry lives on the integer pixel grid and every sampled continuous value is
rounded to 4 decimals.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import ModelOutput, SceneRecord, ScoredPrediction
from .geometry import BoundingBox, Point2, center
from .metrics import DEFAULT_THRESHOLDS, MetricsReport, evaluate

CATEGORIES = (
    "mug", "cup", "bottle", "book", "chair", "bowl", "vase",
    "remote", "laptop", "lamp", "pillow", "box", "plant", "shoe",
)
SENTENCE_TEMPLATES = (
    "pass me the {obj}",
    "can you bring me that {obj}",
    "pick up the {obj} over there",
    "hand me the {obj} please",
    "look at that {obj}",
    "i want the {obj}",
)

MAX_ATTEMPTS = 100
_PLACEMENT_TRIES = 200
_GAP = 4  # min free pixels between objects


class SynthError(RuntimeError):
    pass


class _PlacementFailed(Exception):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_scenes: int
    seed: int
    image_width: int = 640
    image_height: int = 480
    objects_per_scene: tuple[int, int] = (3, 6)
    p_aug_correct: float = 0.8
    p_depth_correct: float = 0.65
    depth_critical_fraction: float = 0.2
    pointing_noise_deg: float = 3.0
    box_jitter_frac: float = 0.05

    def __post_init__(self) -> None:
        if self.n_scenes < 0:
            raise ValueError(f"n_scenes must be >= 0, got {self.n_scenes}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.image_width < 64 or self.image_height < 64:
            raise ValueError(f"image must be at least 64x64, got {self.image_width}x{self.image_height}")
        lo, hi = self.objects_per_scene
        if not 3 <= lo <= hi:
            raise ValueError(f"objects_per_scene must satisfy 3 <= min <= max, got {self.objects_per_scene}")
        for name in ("p_aug_correct", "p_depth_correct", "depth_critical_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.pointing_noise_deg < 0 or self.box_jitter_frac < 0:
            raise ValueError("pointing_noise_deg and box_jitter_frac must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objects_per_scene"] = list(self.objects_per_scene)
        return d


def _r4(x: float) -> float:
    return round(float(x), 4)


def _box(x0: int, y0: int, w: int, h: int) -> BoundingBox:
    return BoundingBox(float(x0), float(y0), float(x0 + w), float(y0 + h))


def _clear(b: BoundingBox, others: list[BoundingBox]) -> bool:
    return all(
        b.x_max + _GAP <= o.x_min or o.x_max + _GAP <= b.x_min or b.y_max + _GAP <= o.y_min or o.y_max + _GAP <= b.y_min
        for o in others
    )


def _contains(b: BoundingBox, p: Point2) -> bool:
    return b.x_min - _GAP <= p.x <= b.x_max + _GAP and b.y_min - _GAP <= p.y <= b.y_max + _GAP


class _Scene:
    """Sampling helpers bound to one scene's RNG stream."""

    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.W = cfg.image_width
        self.H = cfg.image_height

    def size(self) -> tuple[int, int]:
        lo = math.log(12)
        hi = math.log(max(16, min(self.W, self.H) // 4))
        side = math.exp(self.rng.uniform(lo, hi))
        aspect = math.exp(self.rng.uniform(-0.5, 0.5))
        w = max(6, int(round(side * aspect)))
        h = max(6, int(round(side / aspect)))
        return min(w, self.W - 1), min(h, self.H - 1)

    def free_box(self, placed: list[BoundingBox], eye: Point2 | None) -> BoundingBox:
        for _ in range(_PLACEMENT_TRIES):
            w, h = self.size()
            b = _box(int(self.rng.integers(0, self.W - w + 1)), int(self.rng.integers(0, self.H - h + 1)), w, h)
            if _clear(b, placed) and (eye is None or not _contains(b, eye)):
                return b
        raise _PlacementFailed

    def box_at(self, cx: float, cy: float, placed: list[BoundingBox], eye: Point2) -> BoundingBox:
        for _ in range(20):
            w, h = self.size()
            x0 = int(round(cx - w / 2))
            y0 = int(round(cy - h / 2))
            if x0 < 0 or y0 < 0 or x0 + w > self.W or y0 + h > self.H:
                continue
            b = _box(x0, y0, w, h)
            if _clear(b, placed) and not _contains(b, eye):
                return b
        raise _PlacementFailed

    def eye_for(self, target: BoundingBox) -> Point2:
        c = center(target)
        min_reach = 0.3 * min(self.W, self.H)
        for _ in range(_PLACEMENT_TRIES):
            eye = Point2(float(self.rng.integers(0, self.W)), float(self.rng.integers(0, self.H)))
            if math.hypot(c.x - eye.x, c.y - eye.y) >= min_reach and not _contains(target, eye):
                return eye
        raise _PlacementFailed

    def jitter(self, b: BoundingBox) -> BoundingBox:
        f = self.cfg.box_jitter_frac
        d = self.rng.uniform(-f, f, size=4) if f > 0 else np.zeros(4)
        x0 = min(max(0.0, _r4(b.x_min + d[0] * b.width)), float(self.W))
        y0 = min(max(0.0, _r4(b.y_min + d[1] * b.height)), float(self.H))
        x1 = min(max(0.0, _r4(b.x_max + d[2] * b.width)), float(self.W))
        y1 = min(max(0.0, _r4(b.y_max + d[3] * b.height)), float(self.H))
        if x0 < x1 and y0 < y1:
            return BoundingBox(x0, y0, x1, y1)
        return b

    def confidences(self) -> tuple[float, float]:
        c0 = _r4(self.rng.uniform(0.5, 0.99))
        c1 = min(c0, _r4(self.rng.uniform(0.05, c0)))
        return c0, c1


def _decision_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, 0)))


def _layout_rng(seed: int, index: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, 1 + attempt)))


@dataclass(frozen=True)
class _Decisions:
    critical: bool
    n_objects: int
    category: str
    sentence: str
    aug_correct: bool
    depth_correct: bool


def _decide(cfg: SynthConfig, index: int) -> _Decisions:
    # drawn once per scene index: layout retries must not re-roll these
    rng = _decision_rng(cfg.seed, index)
    critical = bool(rng.random() < cfg.depth_critical_fraction)
    n_objects = int(rng.integers(cfg.objects_per_scene[0], cfg.objects_per_scene[1] + 1))
    category = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
    sentence = SENTENCE_TEMPLATES[int(rng.integers(len(SENTENCE_TEMPLATES)))].format(obj=category)
    aug_coin = bool(rng.random() < cfg.p_aug_correct)
    depth_coin = bool(rng.random() < cfg.p_depth_correct)
    return _Decisions(critical, n_objects, category, sentence, aug_coin and not critical, depth_coin or critical)


def _build_scene(cfg: SynthConfig, index: int, attempt: int) -> SceneRecord:
    dec = _decide(cfg, index)
    s = _Scene(cfg, _layout_rng(cfg.seed, index, attempt))
    rng = s.rng
    critical = dec.critical

    gt = s.free_box([], None)
    eye = s.eye_for(gt)
    gc = center(gt)
    ux, uy = gc.x - eye.x, gc.y - eye.y
    reach = math.hypot(ux, uy)
    ux, uy = ux / reach, uy / reach

    placed = [gt]
    behind = None
    if critical:
        lam = rng.uniform(0.35, 0.65)
        front = s.box_at(eye.x + lam * (gc.x - eye.x), eye.y + lam * (gc.y - eye.y), placed, eye)
        placed.append(front)
        step = rng.uniform(0.25, 0.6) * reach
        behind = s.box_at(gc.x + step * ux, gc.y + step * uy, placed, eye)
        placed.append(behind)
    while len(placed) < dec.n_objects:
        placed.append(s.free_box(placed, eye))
    distractors = placed[1:]

    theta = math.radians(rng.normal(0.0, cfg.pointing_noise_deg)) if cfg.pointing_noise_deg > 0 else 0.0
    arm = rng.uniform(25.0, 60.0)
    dx = ux * math.cos(theta) - uy * math.sin(theta)
    dy = ux * math.sin(theta) + uy * math.cos(theta)
    fingertip = Point2(_r4(eye.x + arm * dx), _r4(eye.y + arm * dy))

    def model_output(correct: bool, wrong_pick: BoundingBox | None) -> ModelOutput:
        other = distractors[int(rng.integers(len(distractors)))]
        if correct:
            first, second = gt, other
        else:
            first, second = (wrong_pick if wrong_pick is not None else other), gt
        c0, c1 = s.confidences()
        return ModelOutput((ScoredPrediction(s.jitter(first), c0), ScoredPrediction(s.jitter(second), c1)))

    aug = model_output(dec.aug_correct, behind)
    depth = model_output(dec.depth_correct, None)
    return SceneRecord(
        id=f"synth-{cfg.seed}-{index:06d}",
        image_width=cfg.image_width,
        image_height=cfg.image_height,
        sentence=dec.sentence,
        gt_box=gt,
        outputs={"aug": aug, "depth": depth},
        eye=eye,
        fingertip=fingertip,
        target_object=dec.category,
        extras={"depth_critical": critical},
    )


def generate_scene(cfg: SynthConfig, index: int) -> SceneRecord:
    for attempt in range(MAX_ATTEMPTS):
        try:
            return _build_scene(cfg, index, attempt)
        except _PlacementFailed:
            continue
    raise SynthError(f"scene {index}: no valid layout after {MAX_ATTEMPTS} attempts")


def generate(cfg: SynthConfig) -> list[SceneRecord]:
    return [generate_scene(cfg, i) for i in range(cfg.n_scenes)]


class TopOne:
    """Strategy that trusts a single model's top-1 box."""

    def __init__(self, model_name: str):
        self.model_name = model_name

    def __call__(self, rec: SceneRecord) -> BoundingBox:
        return rec.outputs[self.model_name][0].box


def single_model_baseline(
    records: list[SceneRecord], model_name: str, thresholds=DEFAULT_THRESHOLDS
) -> MetricsReport:
    if records and not any(model_name in r.outputs for r in records):
        raise KeyError(f"model {model_name!r} not present in any record")
    return evaluate(records, TopOne(model_name), thresholds=thresholds)
