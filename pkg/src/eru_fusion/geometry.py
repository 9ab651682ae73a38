"""Box and pointing-ray geometry.

Coordinates are continuous pixel coordinates with the origin at the top-left
corner, x growing rightward and y growing downward. Integer pixel ``(ix, iy)``
covers ``[ix, ix + 1) x [iy, iy + 1)`` and is represented by its center
``(ix + 0.5, iy + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class GeometryError(ValueError):
    """Raised for invalid boxes, degenerate rays and empty images."""


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")

    def as_list(self) -> list[float]:
        return [self.x, self.y]


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise GeometryError(f"non-finite box {list(coords)}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GeometryError(f"degenerate box {list(coords)}: need x_min < x_max and y_min < y_max")

    @classmethod
    def from_list(cls, coords: Iterable[float]) -> BoundingBox:
        values = [float(c) for c in coords]
        if len(values) != 4:
            raise GeometryError(f"box needs 4 coordinates, got {len(values)}")
        return cls(*values)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def clip(self, width: float, height: float) -> BoundingBox:
        """Clip to ``[0, width] x [0, height]``; raises if nothing is left."""
        return BoundingBox(
            max(0.0, self.x_min), max(0.0, self.y_min), min(float(width), self.x_max), min(float(height), self.y_max)
        )


@dataclass(frozen=True)
class PointingRay:
    """Ray starting at the eye and passing through the fingertip.

    Construction does not reject a degenerate ray, so that callers holding
    noisy keypoints can detect it (``is_degenerate``) and fall back. Every
    geometric operation on a degenerate ray raises ``GeometryError``.
    """

    eye: Point2
    fingertip: Point2

    @property
    def is_degenerate(self) -> bool:
        return math.hypot(self.fingertip.x - self.eye.x, self.fingertip.y - self.eye.y) <= 1e-9

    def direction(self) -> tuple[float, float]:
        """Unit vector from eye to fingertip."""
        if self.is_degenerate:
            raise GeometryError(f"degenerate ray: eye {self.eye} coincides with fingertip {self.fingertip}")
        dx = self.fingertip.x - self.eye.x
        dy = self.fingertip.y - self.eye.y
        n = math.sqrt(dx * dx + dy * dy)
        return dx / n, dy / n


def area(b: BoundingBox) -> float:
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def hull(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    """Smallest box enclosing both inputs."""
    return BoundingBox(min(a.x_min, b.x_min), min(a.y_min, b.y_min), max(a.x_max, b.x_max), max(a.y_max, b.y_max))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    union = area(a) + area(b) - inter
    return inter / union


def giou(a: BoundingBox, b: BoundingBox) -> float:
    """Generalized IoU, in (-1, 1]."""
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    union = area(a) + area(b) - inter
    enclosing = area(hull(a, b))
    # rounding in the union can otherwise exceed the hull under containment
    return inter / union - max(0.0, enclosing - union) / enclosing


def l1_box_distance(a: BoundingBox, b: BoundingBox) -> float:
    return (
        abs(a.x_min - b.x_min) + abs(a.y_min - b.y_min) + abs(a.x_max - b.x_max) + abs(a.y_max - b.y_max)
    )


def center(b: BoundingBox) -> Point2:
    return Point2((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0)


def forward_param(p: Point2, r: PointingRay) -> float:
    """Signed distance of ``p``'s projection along the ray, measured from the eye."""
    dx, dy = r.direction()
    return (p.x - r.eye.x) * dx + (p.y - r.eye.y) * dy


def distance_to_ray(p: Point2, r: PointingRay) -> float:
    """Distance from ``p`` to the forward-unbounded ray.

    Points in front of the eye get their perpendicular distance to the
    supporting line; points behind it are measured to the eye itself.
    """
    dx, dy = r.direction()
    vx = p.x - r.eye.x
    vy = p.y - r.eye.y
    t = vx * dx + vy * dy
    if t >= 0:
        return abs(vx * dy - vy * dx)
    return math.sqrt(vx * vx + vy * vy)


def distance_to_cone(p: Point2, r: PointingRay, half_angle_deg: float = 0.0) -> float:
    """Euclidean distance from ``p`` to the forward cone around the ray.

    Zero inside the cone. With ``half_angle_deg == 0`` this is exactly
    :func:`distance_to_ray`.
    """
    if half_angle_deg < 0:
        raise GeometryError(f"half angle must be >= 0, got {half_angle_deg}")
    if half_angle_deg == 0:
        return distance_to_ray(p, r)
    dx, dy = r.direction()
    vx = p.x - r.eye.x
    vy = p.y - r.eye.y
    rho = math.sqrt(vx * vx + vy * vy)
    if rho == 0:
        return 0.0
    phi = math.atan2(abs(vx * dy - vy * dx), vx * dx + vy * dy)
    excess = phi - math.radians(min(half_angle_deg, 90.0))
    if excess <= 0:
        return 0.0
    if excess >= math.pi / 2:
        return rho
    return rho * math.sin(excess)


def _cone_radius(t, half_angle_deg: float):
    """Allowed distance at forward parameter ``t`` (scalar or array)."""
    if half_angle_deg >= 90.0:
        return np.where(np.asarray(t) >= 0, np.inf, 0.5)
    return np.maximum(0.5, np.asarray(t) * math.tan(math.radians(half_angle_deg)))


def _member_mask(xs: np.ndarray, ys: np.ndarray, r: PointingRay, half_angle_deg: float) -> np.ndarray:
    dx, dy = r.direction()
    vx = xs - r.eye.x
    vy = ys - r.eye.y
    t = vx * dx + vy * dy
    dist = np.where(t >= 0, np.abs(vx * dy - vy * dx), np.sqrt(vx * vx + vy * vy))
    return dist <= _cone_radius(t, half_angle_deg)


def _check_raster_args(r: PointingRay, width: int, height: int, half_angle_deg: float) -> None:
    if width < 1 or height < 1:
        raise GeometryError(f"empty image {width}x{height}")
    if half_angle_deg < 0:
        raise GeometryError(f"half angle must be >= 0, got {half_angle_deg}")
    r.direction()


def rasterize_ray_mask(r: PointingRay, width: int, height: int, half_angle_deg: float = 0.0) -> np.ndarray:
    """Boolean ``(height, width)`` mask of pixels covered by the pointing cone.

    A pixel is covered when its center lies within ``max(0.5, t * tan(half_angle))``
    of the ray, ``t`` being the center's forward parameter. Angles of 90 degrees
    or more cover the whole forward half-plane.
    """
    _check_raster_args(r, width, height, half_angle_deg)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64) + 0.5
    return _member_mask(xs, ys, r, half_angle_deg)


def rasterize_ray(r: PointingRay, width: int, height: int, half_angle_deg: float = 0.0) -> set[tuple[int, int]]:
    mask = rasterize_ray_mask(r, width, height, half_angle_deg)
    iys, ixs = np.nonzero(mask)
    return {(int(ix), int(iy)) for ix, iy in zip(ixs, iys)}


def _pixel_span(lo: float, hi: float, limit: int) -> range:
    """Integer pixels whose centers satisfy ``lo <= i + 0.5 < hi``, within ``[0, limit)``."""
    start = max(0, math.ceil(lo - 0.5) - 1)
    stop = min(limit, math.ceil(hi - 0.5) + 1)
    return range(start, max(start, stop))


def _inside(b: BoundingBox, ix: int, iy: int) -> bool:
    cx = ix + 0.5
    cy = iy + 0.5
    return b.x_min <= cx < b.x_max and b.y_min <= cy < b.y_max


def overlap_pixels(b: BoundingBox, line_pixels: Iterable[tuple[int, int]]) -> int:
    """Number of pixels in ``line_pixels`` whose centers fall inside ``b`` (half-open)."""
    return sum(1 for ix, iy in line_pixels if _inside(b, ix, iy))


def ray_pixels_in_box(
    r: PointingRay, b: BoundingBox, width: int, height: int, half_angle_deg: float = 0.0
) -> int:
    """Same as ``overlap_pixels(b, rasterize_ray(r, width, height, half_angle_deg))``.

    Only the pixels under ``b`` are evaluated, which keeps per-scene cost
    proportional to box size instead of image size.
    """
    _check_raster_args(r, width, height, half_angle_deg)
    xr = _pixel_span(b.x_min, b.x_max, width)
    yr = _pixel_span(b.y_min, b.y_max, height)
    if not xr or not yr:
        return 0
    ys, xs = np.mgrid[yr.start:yr.stop, xr.start:xr.stop].astype(np.float64) + 0.5
    in_box = (xs >= b.x_min) & (xs < b.x_max) & (ys >= b.y_min) & (ys < b.y_max)
    return int(np.count_nonzero(in_box & _member_mask(xs, ys, r, half_angle_deg)))
