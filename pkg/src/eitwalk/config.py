"""Experiment configuration files.

Format (version 1): INI sections with ``key = value`` lines, ``#`` comments.
Lists are comma separated, ``none`` marks an absent value and an
interval-valued (uniformly random) parameter is written ``uniform(lo, hi)``.

    [experiment]
    kind = currents
    seed = 1

    [scene]
    inclusion_radii = 0.9, 0.8, 0.7, 0.5, 0.3

    [bc]
    kind = cem
    z = 0.1

    [walk]
    h = 0.004
    allow_coarse_eps = true

Every key has a default; :func:`serialize` writes all of them, so
``serialize(parse(text))`` is a canonical form.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .geometry import GeometryError, scene
from .medium import (
    CEM,
    ConductivityField,
    ElectrodeLayout,
    ForwardModel,
    IdealizedRobin,
    ModelError,
    UniformInterval,
    VoltagePattern,
)
from .walk import InterfaceScheme, Sampler, WalkParams

FORMAT_VERSION = 1
KINDS = ("potential", "currents", "bias", "efficiency", "random_medium", "field")
METHODS = ("direct", "reference_vr", "rw1", "rw2", "rw10", "uw1", "uw2", "uw10")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points into the source text when known."""

    def __init__(self, msg: str, line: Optional[int] = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + msg)


Scalar = Union[float, UniformInterval]


@dataclass(frozen=True)
class ExperimentSection:
    kind: str = "currents"
    seed: int = 1
    workers: int = 1
    output: str = ""


@dataclass(frozen=True)
class SceneSection:
    inclusion_radii: tuple = (0.3,)  # None entries mean "no inclusion"
    eps: float = 1e-6


@dataclass(frozen=True)
class MediumSection:
    kappa_outer: Scalar = 1.0
    kappa_inner: Scalar = 1.0
    interface_radius: Optional[Scalar] = None


@dataclass(frozen=True)
class BcSection:
    kind: str = "cem"
    z: float = 0.1
    electrodes: int = 8
    width: float = 0.1
    pattern: tuple = ()  # empty: alternating (-1)^j
    report_electrode: int = 3
    mode: int = 4  # idealized data cos(mode * theta)
    amplitude: float = 1.0
    point: tuple = (0.99361, 0.11286)
    core_value: float = 0.0


@dataclass(frozen=True)
class WalkSection:
    h: tuple = (0.004,)
    sampler: str = "centered"
    interface_scheme: str = "equal_step"
    max_steps: int = 10_000_000
    allow_coarse_eps: bool = False
    allow_coarse_h: bool = False


@dataclass(frozen=True)
class PlanSection:
    M1: int = 1
    M2: int = 100_000
    independent_c: bool = False


@dataclass(frozen=True)
class VrSection:
    provider: str = "reference"
    nested_k: int = 10  # nested walks per inclusion hit
    sampler: str = "uncentered"
    modes: int = 64  # truncation K of the control-variate solve
    electrode_term: str = "exact"
    exact_modes: int = 256  # truncation for the exact electrode term
    quadrature_nodes: int = 4


@dataclass(frozen=True)
class ReferenceSection:
    modes: int = 256


@dataclass(frozen=True)
class OutputSection:
    methods: tuple = METHODS
    covariance_draws: int = 0
    n_r: int = 20
    n_theta: int = 256
    timing: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    scene: SceneSection = field(default_factory=SceneSection)
    medium: MediumSection = field(default_factory=MediumSection)
    bc: BcSection = field(default_factory=BcSection)
    walk: WalkSection = field(default_factory=WalkSection)
    plan: PlanSection = field(default_factory=PlanSection)
    vr: VrSection = field(default_factory=VrSection)
    reference: ReferenceSection = field(default_factory=ReferenceSection)
    output: OutputSection = field(default_factory=OutputSection)

    # ---- builders -------------------------------------------------------
    def conductivity(self) -> ConductivityField:
        m = self.medium
        return ConductivityField(m.kappa_outer, m.kappa_inner, m.interface_radius)

    def boundary_condition(self):
        b = self.bc
        if b.kind == "idealized":
            return IdealizedRobin.cos_mode(b.mode, b.z, b.amplitude)
        layout = ElectrodeLayout.default(b.electrodes, b.width)
        pat = VoltagePattern(tuple(b.pattern)) if b.pattern else VoltagePattern.alternating(b.electrodes)
        return CEM(layout, pat, b.z)

    def model(self, inclusion_radius: Optional[float], conductivity: Optional[ConductivityField] = None) -> ForwardModel:
        fld = conductivity or self.conductivity()
        R = fld.interface_radius
        R0 = None if R is None else (R.mean if isinstance(R, UniformInterval) else float(R))
        geo = scene(inclusion_radius=inclusion_radius, interface_radius=R0, eps=self.scene.eps)
        return ForwardModel(geometry=geo, conductivity=fld, bc=self.boundary_condition())

    def params(self, h: float) -> WalkParams:
        w = self.walk
        return WalkParams(
            h,
            self.scene.eps,
            Sampler[w.sampler.upper()],
            InterfaceScheme[w.interface_scheme.upper()],
            max_steps=w.max_steps,
            allow_coarse_eps=w.allow_coarse_eps,
        )

    def checked_params(self, h: float, model: ForwardModel) -> WalkParams:
        p = self.params(h)
        if not self.walk.allow_coarse_h:
            R = self.medium.interface_radius
            sup = (R.lo, R.hi) if isinstance(R, UniformInterval) else None
            p.check_geometry(model.geometry, sup)
        return p


# ---- value codecs -------------------------------------------------------

_UNIFORM = re.compile(r"^uniform\(\s*([^,]+?)\s*,\s*([^)]+?)\s*\)$")


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _parse_float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"not a finite number: {s!r}")
    return v


def _parse_bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_scalar(s: str) -> Scalar:
    m = _UNIFORM.match(s.strip())
    if m:
        return UniformInterval(_parse_float(m.group(1)), _parse_float(m.group(2)))
    return _parse_float(s)


def _fmt_scalar(v) -> str:
    if isinstance(v, UniformInterval):
        return f"uniform({_fmt_float(v.lo)}, {_fmt_float(v.hi)})"
    return _fmt_float(v)


def _parse_opt(inner):
    def f(s):
        return None if s.strip().lower() == "none" else inner(s)
    return f


def _fmt_opt(inner):
    def f(v):
        return "none" if v is None else inner(v)
    return f


def _parse_list(inner):
    def f(s):
        parts = [p.strip() for p in s.split(",") if p.strip()]
        return tuple(inner(p) for p in parts)
    return f


def _fmt_list(inner):
    def f(v):
        return ", ".join(inner(x) for x in v)
    return f


def _choice(*allowed):
    def f(s):
        t = s.strip().lower()
        if t not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}, got {s!r}")
        return t
    return f


_str = (lambda s: s.strip(), str)
_int = (lambda s: int(s.strip()), str)
_float = (_parse_float, _fmt_float)
_bool = (_parse_bool, lambda b: "true" if b else "false")
_scalar = (_parse_scalar, _fmt_scalar)
_floats = (_parse_list(_parse_float), _fmt_list(_fmt_float))

# (section, attribute) -> (parse, format); the order here is the serialization order
SCHEMA = {
    "experiment": {
        "kind": (_choice(*KINDS), str),
        "seed": _int,
        "workers": _int,
        "output": _str,
    },
    "scene": {
        "inclusion_radii": (_parse_list(_parse_opt(_parse_float)), _fmt_list(_fmt_opt(_fmt_float))),
        "eps": _float,
    },
    "medium": {
        "kappa_outer": _scalar,
        "kappa_inner": _scalar,
        "interface_radius": (_parse_opt(_parse_scalar), _fmt_opt(_fmt_scalar)),
    },
    "bc": {
        "kind": (_choice("cem", "idealized"), str),
        "z": _float,
        "electrodes": _int,
        "width": _float,
        "pattern": (lambda s: () if s.strip().lower() == "alternating" else _floats[0](s),
                    lambda v: "alternating" if not v else _floats[1](v)),
        "report_electrode": _int,
        "mode": _int,
        "amplitude": _float,
        "point": _floats,
        "core_value": _float,
    },
    "walk": {
        "h": _floats,
        "sampler": (_choice("centered", "uncentered"), str),
        "interface_scheme": (_choice("equal_flux", "equal_step", "sqrt_scaled"), str),
        "max_steps": _int,
        "allow_coarse_eps": _bool,
        "allow_coarse_h": _bool,
    },
    "plan": {"M1": _int, "M2": _int, "independent_c": _bool},
    "vr": {
        "provider": (_choice("none", "reference", "nested"), str),
        "nested_k": _int,
        "sampler": (_choice("centered", "uncentered"), str),
        "modes": _int,
        "electrode_term": (_choice("exact", "sampled"), str),
        "exact_modes": _int,
        "quadrature_nodes": _int,
    },
    "reference": {"modes": _int},
    "output": {
        "methods": (_parse_list(_choice(*METHODS)), _fmt_list(str)),
        "covariance_draws": _int,
        "n_r": _int,
        "n_theta": _int,
        "timing": _bool,
    },
}


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number; (section, None) for headers."""
    out = {}
    sec = None
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            sec = s[1:-1].strip()
            out.setdefault((sec, None), i)
        elif "=" in s and sec is not None:
            out.setdefault((sec, s.split("=", 1)[0].strip().lower()), i)
    return out


def parse(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate; every error names the offending line."""
    lines = _line_index(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(str(e).splitlines()[0], getattr(e, "lineno", None), source) from e
    sections = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, None)), source)
        keys = {k.lower(): k for k in SCHEMA[sec]}
        vals = {}
        for key, raw in cp.items(sec):
            if key == "format":
                if sec == "experiment" and raw.strip() != str(FORMAT_VERSION):
                    raise ConfigError(f"unsupported format version {raw.strip()}", lines.get((sec, key)), source)
                continue
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", lines.get((sec, key)), source)
            attr = keys[key]
            try:
                vals[attr] = SCHEMA[sec][attr][0](raw)
            except (ValueError, ModelError) as e:
                raise ConfigError(f"[{sec}] {key}: {e}", lines.get((sec, key)), source) from e
        sections[sec] = vals
    try:
        cfg = ExperimentConfig(**{
            sec: type(getattr(ExperimentConfig(), sec))(**sections.get(sec, {})) for sec in SCHEMA
        })
    except (ValueError, ModelError) as e:
        raise ConfigError(str(e), None, source) from e
    validate(cfg, lines, source)
    return cfg


def _where(lines: dict, sec: str, key: str) -> Optional[int]:
    return lines.get((sec, key.lower()), lines.get((sec, None)))


def validate(cfg: ExperimentConfig, lines: Optional[dict] = None, source: str = "<config>") -> None:
    """Check the cross-field rules by building every model the experiment needs."""
    lines = lines or {}

    def fail(msg, sec, key):
        raise ConfigError(msg, _where(lines, sec, key), source)

    e, s, b, w, pl, vr = cfg.experiment, cfg.scene, cfg.bc, cfg.walk, cfg.plan, cfg.vr
    if e.workers < 1:
        fail("workers must be >= 1", "experiment", "workers")
    if e.seed < 0:
        fail("seed must be non-negative", "experiment", "seed")
    if not s.inclusion_radii:
        fail("need at least one inclusion radius (or none)", "scene", "inclusion_radii")
    if not w.h:
        fail("need at least one step size", "walk", "h")
    if pl.M1 < 1 or pl.M2 < 1:
        fail("M1 and M2 must be positive", "plan", "M1" if pl.M1 < 1 else "M2")
    if pl.M1 * pl.M2 < 2:
        fail("need at least two paths per electrode", "plan", "M2")
    if vr.nested_k < 1:
        fail("nested_k must be >= 1", "vr", "nested_k")
    for sec, key, v in (("vr", "modes", vr.modes), ("vr", "exact_modes", vr.exact_modes),
                        ("reference", "modes", cfg.reference.modes)):
        if v < 1:
            fail(f"{key} must be >= 1", sec, key)
    if e.kind == "potential" and b.kind != "idealized":
        fail("the potential experiment needs bc kind = idealized", "bc", "kind")
    if e.kind in ("currents", "bias", "efficiency", "random_medium", "field") and b.kind != "cem":
        fail(f"the {e.kind} experiment needs bc kind = cem", "bc", "kind")
    if e.kind == "bias" and len(w.h) < 2:
        fail("a bias study needs at least two step sizes", "walk", "h")
    if b.kind == "idealized" and len(b.point) != 2:
        fail("point needs two coordinates", "bc", "point")
    if b.kind == "cem" and not 1 <= b.report_electrode <= b.electrodes:
        fail("report_electrode out of range", "bc", "report_electrode")
    if e.kind == "random_medium" and vr.provider == "reference":
        fail("random media need a nested provider (the reference solver needs a fixed medium)", "vr", "provider")
    try:
        fld = cfg.conductivity()
    except ModelError as ex:
        fail(str(ex), "medium", "kappa_outer")
    if e.kind != "random_medium" and fld.is_random:
        fail("interval-valued media belong to the random_medium experiment", "medium", "kappa_outer")
    try:
        cfg.boundary_condition()
    except ModelError as ex:
        fail(str(ex), "bc", "pattern" if "pattern" in str(ex) or "voltage" in str(ex) else "width")
    for r in s.inclusion_radii:
        try:
            m = cfg.model(r, fld)
        except (ModelError, GeometryError) as ex:
            fail(f"inclusion radius {r}: {ex}", "scene", "inclusion_radii")
        for h in w.h:
            try:
                cfg.checked_params(h, m)
            except ValueError as ex:
                key = "eps" if "eps" in str(ex) and "gap" not in str(ex) else "h"
                fail(str(ex), "walk" if key == "h" else "scene", key)


def serialize(cfg: ExperimentConfig) -> str:
    out = []
    for sec, fields in SCHEMA.items():
        out.append(f"[{sec}]")
        if sec == "experiment":
            out.append(f"format = {FORMAT_VERSION}")
        obj = getattr(cfg, sec)
        for attr, (_, fmt) in fields.items():
            out.append(f"{attr} = {fmt(getattr(obj, attr))}".rstrip())
        out.append("")
    return "\n".join(out)


def config_hash(cfg: ExperimentConfig) -> str:
    """Digest of the canonical text with the run-only fields (workers, output) blanked."""
    c = dataclasses.replace(cfg, experiment=dataclasses.replace(cfg.experiment, workers=1, output=""))
    return hashlib.sha256(serialize(c).encode()).hexdigest()[:16]


def load(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        return parse(f.read(), source=path)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    """Replace ``section__attr`` fields, e.g. ``experiment__seed=3``."""
    by_sec = {}
    for k, v in kw.items():
        sec, attr = k.split("__", 1)
        by_sec.setdefault(sec, {})[attr] = v
    return dataclasses.replace(
        cfg, **{sec: dataclasses.replace(getattr(cfg, sec), **vals) for sec, vals in by_sec.items()}
    )
