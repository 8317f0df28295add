"""Conductivity fields, electrode layouts, boundary data and the bundled forward model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .geometry import GeometryError, Point, SceneGeometry, scene


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class UniformInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ModelError(f"interval endpoints out of order: [{self.lo}, {self.hi}]")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo


Scalar = Union[float, UniformInterval]


def _bounds(v: Scalar) -> tuple[float, float]:
    if isinstance(v, UniformInterval):
        return v.lo, v.hi
    return float(v), float(v)


@dataclass(frozen=True)
class ElectrodeLayout:
    """Equal-width electrodes on the outer circle.

    ``centers`` are polar angles; electrodes are closed arcs
    ``[center - half_width, center + half_width]``.
    """

    centers: tuple[float, ...]
    half_width: float
    radius: float = 1.0

    def __post_init__(self):
        if len(self.centers) < 1:
            raise ModelError("need at least one electrode")
        if not self.half_width > 0:
            raise ModelError("electrode half width must be positive")
        order = sorted(c % (2 * math.pi) for c in self.centers)
        gaps = [b - a for a, b in zip(order, order[1:])] + [order[0] + 2 * math.pi - order[-1]]
        if len(order) > 1 and min(gaps) <= 2 * self.half_width:
            raise ModelError("electrode arcs overlap")

    @property
    def count(self) -> int:
        return len(self.centers)

    @property
    def arc_length(self) -> float:
        """|E|, identical for every electrode."""
        return 2 * self.half_width * self.radius

    @classmethod
    def default(cls, count: int = 8, width: float = 0.1, radius: float = 1.0,
                offset: Optional[float] = None) -> "ElectrodeLayout":
        """``count`` electrodes numbered clockwise from the top.

        ``width`` is arc length. By default the electrode with index
        ``count // 4 + 1`` (E3 for eight electrodes) sits at angle 0.
        """
        step = 2 * math.pi / count
        if offset is None:
            offset = (count // 4) * step
        centers = tuple(offset - l * step for l in range(count))
        return cls(centers=centers, half_width=0.5 * width / radius, radius=radius)


def electrode_index(theta: float, layout: ElectrodeLayout) -> Optional[int]:
    """1-based index of the electrode covering polar angle ``theta``, or None."""
    for l, c in enumerate(layout.centers):
        if abs(math.remainder(theta - c, 2 * math.pi)) <= layout.half_width:
            return l + 1
    return None


@dataclass(frozen=True)
class VoltagePattern:
    U: tuple[float, ...]

    def __post_init__(self):
        if abs(math.fsum(self.U)) > 1e-12:
            raise ModelError(f"voltage pattern must sum to zero (ground), got sum {math.fsum(self.U)}")

    @classmethod
    def alternating(cls, count: int = 8) -> "VoltagePattern":
        return cls(tuple(float((-1) ** j) for j in range(1, count + 1)))


@dataclass(frozen=True)
class IdealizedRobin:
    """``z * kappa * du/dn + u = phi`` on the whole boundary.

    ``phi`` is given by cosine/sine coefficients: ``phi(t) = sum a[k] cos(k t) + b[k] sin(k t)``.
    """

    a: tuple[float, ...]
    b: tuple[float, ...]
    z: float

    def __post_init__(self):
        if not self.z > 0:
            raise ModelError("contact impedance must be positive")
        if len(self.a) != len(self.b):
            raise ModelError("cosine and sine coefficient lists differ in length")

    @classmethod
    def cos_mode(cls, k: int, z: float, amplitude: float = 1.0) -> "IdealizedRobin":
        a = [0.0] * (k + 1)
        a[k] = amplitude
        return cls(a=tuple(a), b=tuple([0.0] * (k + 1)), z=z)

    def phi(self, theta: float) -> float:
        s = 0.0
        for k in range(len(self.a)):
            s += self.a[k] * math.cos(k * theta) + self.b[k] * math.sin(k * theta)
        return s


@dataclass(frozen=True)
class CEM:
    layout: ElectrodeLayout
    pattern: VoltagePattern
    z: float

    def __post_init__(self):
        if not self.z > 0:
            raise ModelError("contact impedance must be positive")
        if len(self.pattern.U) != self.layout.count:
            raise ModelError(
                f"pattern has {len(self.pattern.U)} voltages for {self.layout.count} electrodes"
            )


@dataclass(frozen=True)
class Dirichlet:
    """``u = phi`` on the boundary. Used to check the plain walk on spheres."""

    a: tuple[float, ...]
    b: tuple[float, ...]

    def phi(self, theta: float) -> float:
        return IdealizedRobin(self.a, self.b, 1.0).phi(theta)


BoundaryCondition = Union[IdealizedRobin, CEM, Dirichlet]


def boundary_fg(theta: float, bc: BoundaryCondition) -> tuple[float, float]:
    """Coefficients ``(f, g)`` of ``z du/dn + f u = g`` at boundary angle ``theta``."""
    if isinstance(bc, IdealizedRobin):
        return 1.0, bc.phi(theta)
    if isinstance(bc, CEM):
        l = electrode_index(theta, bc.layout)
        if l is None:
            return 0.0, 0.0
        return 1.0, bc.pattern.U[l - 1]
    raise ModelError(f"no (f, g) form for {type(bc).__name__}")


@dataclass(frozen=True)
class ConductivityField:
    """Piecewise-constant conductivity by layer position (outer / inner), never by subscript."""

    outer_kappa: Scalar = 1.0
    inner_kappa: Scalar = 1.0
    interface_radius: Optional[Scalar] = None

    def __post_init__(self):
        for name in ("outer_kappa", "inner_kappa"):
            lo, _ = _bounds(getattr(self, name))
            if not lo > 0:
                raise ModelError(f"{name} must be strictly positive")
        if self.interface_radius is not None:
            lo, _ = _bounds(self.interface_radius)
            if not lo > 0:
                raise ModelError("interface radius must be positive")

    @property
    def is_random(self) -> bool:
        return any(
            isinstance(v, UniformInterval) and v.width > 0
            for v in (self.outer_kappa, self.inner_kappa, self.interface_radius)
        )

    @property
    def layered(self) -> bool:
        return self.interface_radius is not None

    def bounds(self) -> np.ndarray:
        """Rows (lo, hi) for outer kappa, inner kappa, interface radius (0 if absent)."""
        r = self.interface_radius if self.interface_radius is not None else 0.0
        return np.array([_bounds(self.outer_kappa), _bounds(self.inner_kappa), _bounds(r)])

    def mean_realization(self) -> "MediumRealization":
        b = self.bounds().mean(axis=1)
        return MediumRealization(float(b[0]), float(b[1]), float(b[2]))


@dataclass(frozen=True)
class MediumRealization:
    kappa_outer: float
    kappa_inner: float
    interface_radius: float  # 0.0 when the scene has no interface


def sample_medium(fld: ConductivityField, rng) -> MediumRealization:
    """Draw every interval-valued parameter independently; constants pass through.

    Three uniforms are always consumed (outer, inner, radius) so the stream
    position does not depend on which parameters are random.
    """
    vals = []
    for lo, hi in fld.bounds():
        vals.append(lo + (hi - lo) * rng.uniform())
    return MediumRealization(*vals)


def sample_on_electrode(l: int, layout: ElectrodeLayout, rng) -> Point:
    if not 1 <= l <= layout.count:
        raise ModelError(f"electrode index {l} out of range 1..{layout.count}")
    u = rng.uniform()
    theta = layout.centers[l - 1] + layout.half_width * (2.0 * u - 1.0)
    return Point(layout.radius * math.cos(theta), layout.radius * math.sin(theta))


@dataclass(frozen=True)
class ForwardModel:
    geometry: SceneGeometry
    conductivity: ConductivityField = field(default_factory=ConductivityField)
    bc: BoundaryCondition = field(default_factory=lambda: IdealizedRobin((0.0,), (0.0,), 1.0))

    def __post_init__(self):
        g = self.geometry
        if g.interface is None and self.conductivity.layered:
            raise ModelError("conductivity has an interface radius but the scene has none")
        if g.interface is not None:
            if not self.conductivity.layered:
                raise ModelError("scene has an interface but the conductivity is not layered")
            lo, hi = _bounds(self.conductivity.interface_radius)
            if not lo <= g.interface.radius <= hi:
                raise ModelError("scene interface radius lies outside the conductivity's radius support")
            # every admissible interface radius must keep the layers apart
            inner = g.inclusion.radius if g.inclusion is not None else 0.0
            if not (lo - inner > 2 * g.eps and g.outer.radius - hi > 2 * g.eps):
                raise ModelError("random interface radius support lets layers overlap")
        if isinstance(self.bc, CEM) and abs(self.bc.layout.radius - g.outer.radius) > 1e-14:
            raise ModelError("electrodes must sit on the outer circle")

    @property
    def has_inclusion(self) -> bool:
        return self.geometry.inclusion is not None

    def without_inclusion(self) -> "ForwardModel":
        g = self.geometry
        return ForwardModel(
            geometry=SceneGeometry(outer=g.outer, inclusion=None, interface=g.interface, eps=g.eps),
            conductivity=self.conductivity,
            bc=self.bc,
        )

    def realization_geometry(self, m: MediumRealization) -> SceneGeometry:
        g = self.geometry
        if g.interface is None:
            return g
        return scene(
            inclusion_radius=g.inclusion.radius if g.inclusion else None,
            interface_radius=m.interface_radius,
            eps=g.eps,
            outer_radius=g.outer.radius,
        )


def standard_cem_model(
    inclusion_radius: Optional[float] = 0.3,
    z: float = 0.1,
    eps: float = 1e-6,
    layered: bool = False,
    conductivity: Optional[ConductivityField] = None,
    pattern: Optional[Sequence[float]] = None,
) -> ForwardModel:
    """Eight 0.1-wide electrodes, alternating pattern, optional 1.5 / 1.0 layering at R = 0.9."""
    if conductivity is None:
        conductivity = ConductivityField(1.5, 1.0, 0.9) if layered else ConductivityField()
    R = conductivity.interface_radius
    R0 = None
    if R is not None:
        R0 = R.mean if isinstance(R, UniformInterval) else float(R)
    layout = ElectrodeLayout.default()
    U = VoltagePattern(tuple(pattern)) if pattern is not None else VoltagePattern.alternating(layout.count)
    try:
        geo = scene(inclusion_radius=inclusion_radius, interface_radius=R0, eps=eps)
    except GeometryError as e:
        raise ModelError(str(e)) from e
    return ForwardModel(geometry=geo, conductivity=conductivity, bc=CEM(layout, U, z))
