"""The partially reflecting walk on spheres.

Bulk moves are exact sphere exits (centered, or via the Poisson kernel of an
origin-centered disk). Inside the boundary layer a finite-difference
replacement either absorbs the walker or reflects it diagonally inward;
inside an interface layer a two-sided replacement picks a side with the
transmission-consistent probability.

This module is also the pure-Python backend: :func:`simulate` is the reference
trajectory driver and ``_kernels.pyx`` reproduces it operation for operation.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

from .geometry import GeometryError, Point, Region, SceneGeometry, classify, walk_radius
from .medium import CEM, Dirichlet, ForwardModel, MediumRealization, electrode_index
from .rngstreams import Stream

_TWO_PI = 2.0 * math.pi
MAX_HALVINGS = 6


class Sampler(enum.IntEnum):
    CENTERED = 0
    UNCENTERED = 1


class InterfaceScheme(enum.IntEnum):
    EQUAL_FLUX = 0   # (i)   p = 1/2
    EQUAL_STEP = 1   # (ii)  p = k_out / (k_out + k_in)
    SQRT_SCALED = 2  # (iii) p = sqrt(k_out) / (sqrt(k_out) + sqrt(k_in))


class ChainMode(enum.IntEnum):
    DIRECT = 0   # absorbed on entering the inclusion layer
    THROUGH = 1  # first inclusion hit recorded, then walks on through the inclusion


class ScoreKind(enum.Enum):
    U0 = "u0"
    U1 = "u1"
    V = "v"
    IDEALIZED = "idealized"


class Terminal(enum.IntEnum):
    ABSORBED = 0
    HIT_INCLUSION = 1
    CENSORED = 2


@dataclass(frozen=True)
class WalkParams:
    h: float
    eps: float
    sampler: Sampler = Sampler.CENTERED
    interface_scheme: InterfaceScheme = InterfaceScheme.EQUAL_STEP
    chain_mode: ChainMode = ChainMode.DIRECT
    max_steps: int = 10_000_000
    allow_coarse_eps: bool = False

    def __post_init__(self):
        if not self.h > 0 or not self.eps > 0:
            raise ValueError("h and eps must be positive")
        if self.eps > self.h ** 3 and not self.allow_coarse_eps:
            raise ValueError(
                f"eps={self.eps} exceeds h^3={self.h ** 3}; pass allow_coarse_eps=True to override"
            )
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def check_geometry(self, g: SceneGeometry, interface_support: Optional[tuple[float, float]] = None):
        """Stencils from any layer must stay clear of every other circle."""
        gap = g.min_gap
        if interface_support is not None and g.interface is not None:
            lo, hi = interface_support
            inner = g.inclusion.radius if g.inclusion is not None else 0.0
            gap = min(gap, g.outer.radius - hi, lo - inner)
        if not self.h < gap / 4:
            raise ValueError(f"h={self.h} too large for circle gap {gap} (need h < gap/4)")


def default_eps(h: float) -> float:
    return min(1e-6, h ** 3)


@dataclass(frozen=True)
class Absorb:
    score: float
    electrode: Optional[int]


@dataclass(frozen=True)
class Move:
    to: Point
    score: float = 0.0


ReplacementAction = Union[Absorb, Move]


@dataclass
class TrajectoryOutcome:
    score_sum: float
    terminal: Terminal
    boundary_hits: int
    steps: int
    point: Point
    electrode: Optional[int] = None
    hit_point: Optional[Point] = None  # projection onto the inclusion circle
    score_before_hit: Optional[float] = None


def sphere_exit_centered(p: Point, radius: float, rng: Stream) -> Point:
    if not radius > 0:
        raise GeometryError("sphere radius must be positive")
    a = _TWO_PI * rng.uniform()
    return Point(p.x + radius * math.cos(a), p.y + radius * math.sin(a))


def uncentered_angle(theta: float, r: float, R: float, u: float) -> float:
    """Exit angle on a circle of radius ``R`` for a start at polar (``r``, ``theta``)."""
    return theta + 2.0 * math.atan(((R - r) / (R + r)) * math.tan(math.pi * u))


def sphere_exit_uncentered(radius: float, p: Point, rng: Stream) -> Point:
    """Exact exit position from the origin-centered disk of ``radius``."""
    r = math.sqrt(p.x * p.x + p.y * p.y)
    if not r < radius:
        raise GeometryError(f"start {p} is not strictly inside the disk of radius {radius}")
    a = uncentered_angle(math.atan2(p.y, p.x), r, radius, rng.uniform())
    return Point(radius * math.cos(a), radius * math.sin(a))


def _boundary_data(theta: float, bc) -> tuple[float, float, Optional[int]]:
    if isinstance(bc, CEM):
        l = electrode_index(theta, bc.layout)
        if l is None:
            return 0.0, 0.0, None
        return 1.0, bc.pattern.U[l - 1], l
    return 1.0, bc.phi(theta), None


def boundary_replacement(
    p: Point,
    model: ForwardModel,
    realization: MediumRealization,
    params: WalkParams,
    rng: Stream,
    geometry: Optional[SceneGeometry] = None,
) -> ReplacementAction:
    """One visit to the boundary layer.

    The visit always earns ``h g / (f h + z)`` (z scaled by the outer
    conductivity); the walker is then absorbed with probability
    ``f h / (f h + z)`` or moved to ``p + h (n +/- t)`` with equal odds.
    """
    g = geometry or model.geometry
    if classify(p, g) is not Region.BOUNDARY_LAYER:
        raise GeometryError(f"{p} is not in the boundary layer")
    bc = model.bc
    R0 = g.outer.radius
    r = g.radial(p)
    ex, ey = p.x / r, p.y / r
    theta = math.atan2(p.y, p.x)
    f, gv, l = _boundary_data(theta, bc)
    ze = bc.z * realization.kappa_outer
    h = params.h
    # shrink until the 5-point stencil lies in the closed disk
    for _ in range(MAX_HALVINGS):
        xa, ya = p.x + h * (-ex - ey), p.y + h * (-ey + ex)
        xb, yb = p.x + h * (-ex + ey), p.y + h * (-ey - ex)
        xc, yc = p.x - 2.0 * h * ex, p.y - 2.0 * h * ey
        if max(xa * xa + ya * ya, xb * xb + yb * yb, xc * xc + yc * yc) <= R0 * R0:
            break
        h = 0.5 * h
    s = h * gv / (f * h + ze)
    pa = f * h / (f * h + ze)
    u = rng.uniform()
    if u < pa:
        return Absorb(score=s, electrode=l)
    if u < pa + 0.5 * (1.0 - pa):
        return Move(Point(p.x + h * (-ex - ey), p.y + h * (-ey + ex)), score=s)
    return Move(Point(p.x + h * (-ex + ey), p.y + h * (-ey - ex)), score=s)


def interface_steps(kappa_out: float, kappa_in: float, h: float, scheme: InterfaceScheme) -> tuple[float, float]:
    """Step lengths (outer side, inner side)."""
    if scheme is InterfaceScheme.EQUAL_FLUX:
        return h / kappa_in, h / kappa_out
    if scheme is InterfaceScheme.SQRT_SCALED:
        return h / math.sqrt(kappa_in), h / math.sqrt(kappa_out)
    return h, h


def interface_outer_probability(kappa_out: float, kappa_in: float, h_out: float, h_in: float) -> float:
    return kappa_out * h_in / (kappa_out * h_in + kappa_in * h_out)


def interface_replacement(
    p: Point,
    realization: MediumRealization,
    params: WalkParams,
    rng: Stream,
    geometry: SceneGeometry,
    inclusion_active: bool = True,
) -> Point:
    """Two-sided diagonal move from the foot of ``p`` on the interface circle."""
    if classify(p, geometry, inclusion_active) is not Region.INTERFACE_LAYER:
        raise GeometryError(f"{p} is not in the interface layer")
    Rif = geometry.interface.radius
    R0 = geometry.outer.radius
    rho = geometry.inclusion.radius if (geometry.inclusion is not None and inclusion_active) else 0.0
    r = geometry.radial(p)
    ex, ey = p.x / r, p.y / r
    fx, fy = Rif * ex, Rif * ey
    ko, ki = realization.kappa_outer, realization.kappa_inner
    ha, hb = interface_steps(ko, ki, params.h, params.interface_scheme)
    for _ in range(MAX_HALVINGS):
        if (Rif + ha) * (Rif + ha) + ha * ha < R0 * R0 and Rif - hb > rho:
            break
        ha, hb = 0.5 * ha, 0.5 * hb
    pa = interface_outer_probability(ko, ki, ha, hb)
    u = rng.uniform()
    if u < 0.5 * pa:
        return Point(fx + ha * (ex - ey), fy + ha * (ey + ex))
    if u < pa:
        return Point(fx + ha * (ex + ey), fy + ha * (ey - ex))
    if u < pa + 0.5 * (1.0 - pa):
        return Point(fx + hb * (-ex - ey), fy + hb * (-ey + ex))
    return Point(fx + hb * (-ex + ey), fy + hb * (-ey - ex))


def _uncentered_disk(g: SceneGeometry, r: float, inclusion_active: bool) -> float:
    """Radius of the origin-centered disk that is the walker's whole layer, or 0."""
    if g.inclusion is not None and inclusion_active:
        return 0.0
    if g.interface is not None:
        return g.interface.radius if r < g.interface.radius else 0.0
    return g.outer.radius


def simulate(
    start: Point,
    model: ForwardModel,
    realization: MediumRealization,
    params: WalkParams,
    rng: Stream,
    score_kind: ScoreKind = ScoreKind.U0,
    inclusion_credit: float = 0.0,
) -> TrajectoryOutcome:
    """Run one trajectory until absorption, inclusion hit (direct chain) or censoring.

    ``score_sum`` collects the per-visit boundary scores; for ``U1`` those are
    zero (its boundary data vanish) and the caller credits inclusion hits.
    ``inclusion_credit`` is added on an inclusion hit (the known potential
    of the inclusion for idealized point values).
    """
    g = model.realization_geometry(realization)
    bc = model.bc
    inc_active = g.inclusion is not None and score_kind is not ScoreKind.V
    through = params.chain_mode is ChainMode.THROUGH
    use_g = score_kind is not ScoreKind.U1
    dirichlet = isinstance(bc, Dirichlet)
    p = start
    score = 0.0
    hits = 0
    steps = 0
    hit_point = None
    score_before = None
    while True:
        if steps >= params.max_steps:
            return TrajectoryOutcome(score, Terminal.CENSORED, hits, steps, p, None, hit_point, score_before)
        steps += 1
        p = g.clamp(p)
        region = classify(p, g, inc_active)
        if region is Region.BOUNDARY_LAYER:
            hits += 1
            if dirichlet:
                score += bc.phi(math.atan2(p.y, p.x)) if use_g else 0.0
                return TrajectoryOutcome(score, Terminal.ABSORBED, hits, steps, p, None, hit_point, score_before)
            act = boundary_replacement(p, model, realization, params, rng, geometry=g)
            if use_g:
                score += act.score
            if isinstance(act, Absorb):
                return TrajectoryOutcome(
                    score, Terminal.ABSORBED, hits, steps, p, act.electrode, hit_point, score_before
                )
            p = act.to
        elif region in (Region.INCLUSION_LAYER, Region.INSIDE_INCLUSION):
            r = g.radial(p)
            s = g.inclusion.radius / r
            hit_point = Point(p.x * s, p.y * s)
            score_before = score
            if not through:
                score += inclusion_credit
                return TrajectoryOutcome(
                    score, Terminal.HIT_INCLUSION, hits, steps, p, None, hit_point, score_before
                )
            inc_active = False
        elif region is Region.INTERFACE_LAYER:
            p = interface_replacement(p, realization, params, rng, g, inc_active)
        else:
            r = g.radial(p)
            Rd = _uncentered_disk(g, r, inc_active) if params.sampler is Sampler.UNCENTERED else 0.0
            if Rd > 0.0:
                p = sphere_exit_uncentered(Rd, p, rng)
            else:
                p = sphere_exit_centered(p, walk_radius(p, g, inc_active), rng)
