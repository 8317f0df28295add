"""Concentric-circle scenes: region classification, walk radii and local frames.

Everything downstream (walk, estimators) only asks this module for distances,
projections and frames, so the restriction to concentric circles lives here.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

# points that escape the outer circle by less than this are clamped back onto it
CLAMP_TOL = 1e-12
# layer tests accept distances this far beyond eps, so 1 - 0.999999 still counts as 1e-6
LAYER_TOL = 1e-14


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")

    @property
    def r(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y)

    @property
    def angle(self) -> float:
        return math.atan2(self.y, self.x)


ORIGIN = Point(0.0, 0.0)


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError(f"circle radius must be positive, got {self.radius}")

    def distance(self, p: Point) -> float:
        """Unsigned distance from ``p`` to the circle line."""
        return abs(math.hypot(p.x - self.center.x, p.y - self.center.y) - self.radius)


class Region(enum.Enum):
    BULK_OUTER = "BulkOuter"
    BULK_INNER = "BulkInner"
    BOUNDARY_LAYER = "BoundaryLayer"
    INCLUSION_LAYER = "InclusionLayer"
    INTERFACE_LAYER = "InterfaceLayer"
    INSIDE_INCLUSION = "InsideInclusion"

    @property
    def is_bulk(self) -> bool:
        return self in (Region.BULK_OUTER, Region.BULK_INNER)


@dataclass(frozen=True)
class SceneGeometry:
    """Unit-disk style scene with an optional inclusion and an optional layer interface.

    All circles share the outer circle's center. ``eps`` is the thickness of
    the layers around every circle; it must be below half of the smallest gap
    between two circles so the layers never touch.
    """

    outer: Circle = Circle(ORIGIN, 1.0)
    inclusion: Optional[Circle] = None
    interface: Optional[Circle] = None
    eps: float = 1e-6

    def __post_init__(self):
        if not self.eps > 0:
            raise GeometryError(f"eps must be positive, got {self.eps}")
        for name, c in (("inclusion", self.inclusion), ("interface", self.interface)):
            if c is None:
                continue
            if c.center != self.outer.center:
                raise GeometryError(f"{name} must be concentric with the outer circle")
            if not c.radius < self.outer.radius:
                raise GeometryError(f"{name} radius {c.radius} must be < outer radius {self.outer.radius}")
        if self.inclusion is not None and self.interface is not None:
            if not self.inclusion.radius < self.interface.radius:
                raise GeometryError("inclusion radius must be smaller than the interface radius")
        if not self.eps < 0.5 * self.min_gap:
            raise GeometryError(
                f"eps={self.eps} too large: layers overlap (minimal circle gap {self.min_gap})"
            )

    @property
    def center(self) -> Point:
        return self.outer.center

    @property
    def radii(self) -> list[float]:
        """Radii of all present circles, innermost first."""
        out = []
        if self.inclusion is not None:
            out.append(self.inclusion.radius)
        if self.interface is not None:
            out.append(self.interface.radius)
        out.append(self.outer.radius)
        return out

    @property
    def min_gap(self) -> float:
        rs = self.radii
        gaps = [b - a for a, b in zip(rs, rs[1:])]
        # with an inclusion the innermost region is the inclusion itself; without
        # one the innermost circle still has its full radius of room
        if self.inclusion is None:
            gaps.append(rs[0])
        return min(gaps)

    def radial(self, p: Point) -> float:
        # sqrt of the sum of squares (not hypot) so the compiled kernel can match it bit for bit
        dx, dy = p.x - self.center.x, p.y - self.center.y
        return math.sqrt(dx * dx + dy * dy)

    def clamp(self, p: Point) -> Point:
        """Pull a point that escaped the outer circle by rounding back onto it."""
        r = self.radial(p)
        R = self.outer.radius
        if r <= R:
            return p
        if r > R + CLAMP_TOL + self.eps:
            raise GeometryError(f"point {p} is outside the scene (r={r})")
        s = R / r
        c = self.center
        return Point(c.x + (p.x - c.x) * s, c.y + (p.y - c.y) * s)


def classify(p: Point, g: SceneGeometry, inclusion_active: bool = True) -> Region:
    """Region tag of ``p``; layer tags take precedence over bulk tags.

    With ``inclusion_active=False`` the inclusion is ignored (the chain walks
    through it) and its interior is classified as bulk.
    """
    r = g.radial(p)
    eps = g.eps + LAYER_TOL
    if g.outer.radius - r <= eps:
        return Region.BOUNDARY_LAYER
    if g.inclusion is not None and inclusion_active:
        d = r - g.inclusion.radius
        if abs(d) <= eps:
            return Region.INCLUSION_LAYER
        if d < 0:
            return Region.INSIDE_INCLUSION
    if g.interface is not None:
        d = r - g.interface.radius
        if abs(d) <= eps:
            return Region.INTERFACE_LAYER
        return Region.BULK_OUTER if d > 0 else Region.BULK_INNER
    return Region.BULK_OUTER


def walk_radius(p: Point, g: SceneGeometry, inclusion_active: bool = True) -> float:
    """Radius of the largest circle about ``p`` that crosses no scene circle."""
    r = g.radial(p)
    d = g.outer.radius - r
    if g.inclusion is not None and inclusion_active:
        d = min(d, r - g.inclusion.radius)
    if g.interface is not None:
        d = min(d, abs(r - g.interface.radius))
    if not d > 0:
        raise GeometryError(f"degenerate walk radius {d} at {p}")
    return d


@dataclass(frozen=True)
class Frame:
    foot: Point
    normal: tuple[float, float]
    tangent: tuple[float, float]


def project_with_frame(p: Point, c: Circle, toward_center: bool = True) -> Frame:
    """Radial projection of ``p`` onto ``c`` with a local orthonormal frame.

    ``toward_center=True`` gives the normal pointing into the circle (use it at
    the outer boundary); ``False`` gives the normal pointing away from the
    center (use it at the inclusion, where the walk lives outside). The tangent
    is always the counterclockwise direction.
    """
    dx, dy = p.x - c.center.x, p.y - c.center.y
    r = math.sqrt(dx * dx + dy * dy)
    if r == 0.0:
        raise GeometryError("projection from the circle center is undefined")
    ex, ey = dx / r, dy / r
    foot = Point(c.center.x + c.radius * ex, c.center.y + c.radius * ey)
    n = (-ex, -ey) if toward_center else (ex, ey)
    return Frame(foot=foot, normal=n, tangent=(-ey, ex))


def scene(
    inclusion_radius: Optional[float] = None,
    interface_radius: Optional[float] = None,
    eps: float = 1e-6,
    outer_radius: float = 1.0,
) -> SceneGeometry:
    """Shorthand for an origin-centered scene."""
    inc = Circle(ORIGIN, inclusion_radius) if inclusion_radius else None
    itf = Circle(ORIGIN, interface_radius) if interface_radius else None
    return SceneGeometry(outer=Circle(ORIGIN, outer_radius), inclusion=inc, interface=itf, eps=eps)
