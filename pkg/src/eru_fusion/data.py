"""Scene records, the JSONL dataset format and PFM depth maps."""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from .geometry import BoundingBox, GeometryError, Point2

SIZE_CLASSES = ("S", "M", "L")

_KNOWN_KEYS = (
    "id",
    "image_width",
    "image_height",
    "sentence",
    "gt_box",
    "eye",
    "fingertip",
    "outputs",
    "depth_path",
    "size_class",
    "target_object",
)


class SceneFormatError(ValueError):
    """One or more JSONL lines failed to parse or validate.

    ``problems`` holds ``(line_number, message)`` pairs.
    """

    def __init__(self, problems: list[tuple[int, str]], path: str | os.PathLike | None = None):
        self.problems = problems
        self.path = path
        where = f"{path}: " if path is not None else ""
        lines = "; ".join(f"line {n}: {msg}" for n, msg in problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        super().__init__(f"{where}{len(problems)} invalid record(s): {lines}{more}")


class DepthFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredPrediction:
    box: BoundingBox
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ModelOutput:
    """Predictions of one model, highest confidence first."""

    predictions: tuple[ScoredPrediction, ...]

    def __post_init__(self) -> None:
        if len(self.predictions) == 0:
            raise ValueError("model output needs at least one prediction")
        confs = [p.confidence for p in self.predictions]
        if any(b > a for a, b in zip(confs, confs[1:])):
            raise ValueError(f"confidences not in descending order: {confs}")

    @classmethod
    def ranked(cls, predictions: Iterable[ScoredPrediction]) -> ModelOutput:
        # stable: equal confidences keep their input order
        return cls(tuple(sorted(predictions, key=lambda p: -p.confidence)))

    def __len__(self) -> int:
        return len(self.predictions)

    def __getitem__(self, i: int) -> ScoredPrediction:
        return self.predictions[i]


@dataclass(frozen=True)
class SceneRecord:
    id: str
    image_width: int
    image_height: int
    sentence: str
    gt_box: BoundingBox
    outputs: Mapping[str, ModelOutput] = field(default_factory=dict)
    eye: Point2 | None = None
    fingertip: Point2 | None = None
    depth_path: str | None = None
    size_class: str | None = None
    target_object: str | None = None
    # unrecognised JSONL keys, carried through untouched
    extras: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError(f"image dimensions must be positive, got {self.image_width}x{self.image_height}")
        if not _within(self.gt_box, self.image_width, self.image_height):
            raise ValueError(f"gt_box {self.gt_box.as_list()} outside image {self.image_width}x{self.image_height}")
        if (self.eye is None) != (self.fingertip is None):
            raise ValueError("eye and fingertip must be given together")
        if self.size_class is not None and self.size_class not in SIZE_CLASSES:
            raise ValueError(f"size_class must be one of {SIZE_CLASSES}, got {self.size_class!r}")
        for name, out in self.outputs.items():
            for p in out.predictions:
                if not _within(p.box, self.image_width, self.image_height):
                    raise ValueError(f"prediction of {name!r} outside image: {p.box.as_list()}")

    def replace(self, **changes: Any) -> SceneRecord:
        return replace(self, **changes)


def _within(b: BoundingBox, width: int, height: int) -> bool:
    return b.x_min >= 0 and b.y_min >= 0 and b.x_max <= width and b.y_max <= height


def _parse_point(value: Any, name: str) -> Point2:
    if not (isinstance(value, list) and len(value) == 2):
        raise ValueError(f"{name} must be [x, y]")
    return Point2(_number(value[0], name), _number(value[1], name))


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{name} must be numeric, got {value!r}")
    return float(value)


def _parse_box(value: Any, name: str) -> BoundingBox:
    if not (isinstance(value, list) and len(value) == 4):
        raise ValueError(f"{name} must be [x_min, y_min, x_max, y_max]")
    try:
        return BoundingBox(*(_number(v, name) for v in value))
    except GeometryError as exc:
        raise ValueError(f"{name}: {exc}") from None


def scene_from_dict(obj: Any) -> SceneRecord:
    """Validate one decoded JSON object. Prediction boxes are clipped to the image."""
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    for key in ("id", "image_width", "image_height", "sentence", "gt_box"):
        if key not in obj:
            raise ValueError(f"missing required field {key!r}")
    width, height = obj["image_width"], obj["image_height"]
    for key, v in (("image_width", width), ("image_height", height)):
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ValueError(f"{key} must be a positive integer, got {v!r}")
    if not isinstance(obj["sentence"], str):
        raise ValueError("sentence must be a string")

    outputs: dict[str, ModelOutput] = {}
    raw_outputs = obj.get("outputs", {})
    if not isinstance(raw_outputs, dict):
        raise ValueError("outputs must be an object mapping model name to predictions")
    for name, preds in raw_outputs.items():
        if not isinstance(preds, list) or not preds:
            raise ValueError(f"outputs.{name} must be a non-empty list")
        parsed = []
        for i, p in enumerate(preds):
            where = f"outputs.{name}[{i}]"
            if not isinstance(p, dict) or "box" not in p or "score" not in p:
                raise ValueError(f"{where} needs 'box' and 'score'")
            score = _number(p["score"], f"{where}.score")
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"{where}.score = {score} outside [0, 1]")
            box = _parse_box(p["box"], f"{where}.box")
            try:
                box = box.clip(width, height)
            except GeometryError:
                raise ValueError(f"{where}.box {p['box']} lies entirely outside the image") from None
            parsed.append(ScoredPrediction(box, score))
        outputs[name] = ModelOutput.ranked(parsed)

    eye = _parse_point(obj["eye"], "eye") if "eye" in obj else None
    fingertip = _parse_point(obj["fingertip"], "fingertip") if "fingertip" in obj else None
    for key in ("depth_path", "size_class", "target_object"):
        if key in obj and not isinstance(obj[key], str):
            raise ValueError(f"{key} must be a string")
    if not isinstance(obj["id"], str):
        raise ValueError("id must be a string")
    return SceneRecord(
        id=obj["id"],
        image_width=width,
        image_height=height,
        sentence=obj["sentence"],
        gt_box=_parse_box(obj["gt_box"], "gt_box"),
        outputs=outputs,
        eye=eye,
        fingertip=fingertip,
        depth_path=obj.get("depth_path"),
        size_class=obj.get("size_class"),
        target_object=obj.get("target_object"),
        extras={k: v for k, v in obj.items() if k not in _KNOWN_KEYS},
    )


def scene_to_dict(rec: SceneRecord) -> dict[str, Any]:
    """Canonical form: fixed key order, optional fields omitted when unset."""
    out: dict[str, Any] = {
        "id": rec.id,
        "image_width": rec.image_width,
        "image_height": rec.image_height,
        "sentence": rec.sentence,
        "gt_box": rec.gt_box.as_list(),
    }
    if rec.eye is not None:
        out["eye"] = rec.eye.as_list()
        out["fingertip"] = rec.fingertip.as_list()
    out["outputs"] = {
        name: [{"box": p.box.as_list(), "score": p.confidence} for p in mo.predictions]
        for name, mo in rec.outputs.items()
    }
    for key in ("depth_path", "size_class", "target_object"):
        value = getattr(rec, key)
        if value is not None:
            out[key] = value
    for key in sorted(rec.extras):
        out[key] = rec.extras[key]
    return out


def iter_scenes(path: str | os.PathLike) -> Iterator[tuple[int, SceneRecord]]:
    """Yield ``(line_number, record)``; blank lines are skipped.

    All bad lines are collected first and raised together as one
    ``SceneFormatError``.
    """
    records: list[tuple[int, SceneRecord]] = []
    problems: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                problems.append((lineno, f"JSON syntax error: {exc.msg} (column {exc.colno})"))
                continue
            try:
                records.append((lineno, scene_from_dict(obj)))
            except (ValueError, GeometryError) as exc:
                problems.append((lineno, str(exc)))
    if problems:
        raise SceneFormatError(problems, path)
    return iter(records)


def read_scenes(path: str | os.PathLike) -> list[SceneRecord]:
    return [rec for _, rec in iter_scenes(path)]


def dumps_scene(rec: SceneRecord) -> str:
    return json.dumps(scene_to_dict(rec), ensure_ascii=False, allow_nan=False)


def write_scenes(records: Iterable[SceneRecord], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(dumps_scene(rec))
            f.write("\n")


# --- depth maps -------------------------------------------------------------


@dataclass(frozen=True)
class DepthMap:
    width: int
    height: int
    values: np.ndarray  # (height, width) float32, row 0 at the top of the image

    def __post_init__(self) -> None:
        if self.values.shape != (self.height, self.width):
            raise DepthFormatError(f"values shape {self.values.shape} != ({self.height}, {self.width})")

    def at(self, x: int, y: int) -> float:
        return float(self.values[y, x])


_DIMS_RE = re.compile(rb"^\s*(\d+)\s+(\d+)\s*$")


def read_depth(path: str | os.PathLike) -> DepthMap:
    """Load a single-channel PFM file as metric depth."""
    data = Path(path).read_bytes()
    lines = data.split(b"\n", 3)
    if len(lines) < 4:
        raise DepthFormatError(f"{path}: incomplete PFM header")
    magic, dims, scale_line, payload = lines
    magic = magic.strip()
    if magic == b"PF":
        raise DepthFormatError(f"{path}: 3-channel PFM ('PF'); depth maps must be single channel ('Pf')")
    if magic != b"Pf":
        raise DepthFormatError(f"{path}: bad magic {magic[:8]!r}, expected b'Pf'")
    m = _DIMS_RE.match(dims)
    if not m:
        raise DepthFormatError(f"{path}: bad dimensions line {dims[:40]!r}")
    width, height = int(m.group(1)), int(m.group(2))
    if width < 1 or height < 1:
        raise DepthFormatError(f"{path}: empty image {width}x{height}")
    try:
        scale = float(scale_line.strip())
    except ValueError:
        raise DepthFormatError(f"{path}: bad scale line {scale_line[:40]!r}") from None
    if scale == 0 or not math.isfinite(scale):
        raise DepthFormatError(f"{path}: scale must be finite and non-zero, got {scale}")
    expected = width * height * 4
    if len(payload) != expected:
        raise DepthFormatError(
            f"{path}: expected {expected} bytes of float data for {width}x{height}, found {len(payload)}"
        )
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    values = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    # PFM stores rows bottom-up
    values = np.flipud(values).astype(np.float32)
    if not np.all(np.isfinite(values)):
        raise DepthFormatError(f"{path}: non-finite depth values")
    if np.any(values < 0):
        raise DepthFormatError(f"{path}: negative depth values")
    return DepthMap(width, height, values)


def write_depth(depth: DepthMap | np.ndarray, path: str | os.PathLike, little_endian: bool = True) -> None:
    values = depth.values if isinstance(depth, DepthMap) else np.asarray(depth, dtype=np.float32)
    if values.ndim != 2:
        raise DepthFormatError(f"depth must be 2-D, got shape {values.shape}")
    height, width = values.shape
    dtype = np.dtype("<f4") if little_endian else np.dtype(">f4")
    header = f"Pf\n{width} {height}\n{-1.0 if little_endian else 1.0}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.flipud(values).astype(dtype).tobytes())
