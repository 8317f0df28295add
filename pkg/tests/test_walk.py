import math

import numpy as np
import pytest
from scipy import integrate

from eitwalk.backend import PathJob, simulate_batch
from eitwalk.geometry import GeometryError, Point, scene
from eitwalk.medium import (
    ConductivityField, Dirichlet, ForwardModel, IdealizedRobin, MediumRealization, standard_cem_model,
)
from eitwalk.rngstreams import path_stream
from eitwalk.walk import (
    Absorb, InterfaceScheme, Move, Sampler, ScoreKind, Terminal, WalkParams, boundary_replacement,
    interface_outer_probability, interface_replacement, interface_steps, simulate, sphere_exit_centered,
    sphere_exit_uncentered, uncentered_angle,
)

UNIT = MediumRealization(1.0, 1.0, 0.0)


class Fixed:
    def __init__(self, u):
        self.u = u

    def uniform(self):
        return self.u


class NumpyUniforms:
    """Fast uniform source for moment checks of the samplers."""

    def __init__(self, seed, n):
        self.u = np.random.default_rng(seed).random(n)
        self.i = 0

    def uniform(self):
        v = self.u[self.i]
        self.i += 1
        return v


def test_sphere_exit_centered():
    rng = NumpyUniforms(0, 1_000_000)
    vals = np.empty(1_000_000)
    for i in range(vals.size):
        q = sphere_exit_centered(Point(0, 0), 0.5, rng)
        vals[i] = q.x * q.x - q.y * q.y
    assert abs(vals.mean()) < 3 * vals.std() / 1e3
    s = path_stream(0, 0)
    for _ in range(1000):
        q = sphere_exit_centered(Point(0.5, 0), 0.2, s)
        assert math.hypot(q.x - 0.5, q.y) == pytest.approx(0.2, abs=1e-15)
        assert q.r < 1.0


def test_uncentered_angle_limits():
    assert uncentered_angle(0.3, 0.0, 1.0, 0.25) == pytest.approx(0.3 + math.pi / 2)
    assert uncentered_angle(0.7, 0.5, 1.0, 1e-12) == pytest.approx(0.7, abs=1e-9)
    # U = 0.5 lands opposite the start
    a = uncentered_angle(0.2, 0.5, 1.0, 0.5)
    assert math.cos(a - 0.2) == pytest.approx(-1.0)
    with pytest.raises(GeometryError):
        sphere_exit_uncentered(1.0, Point(1.0, 0.0), Fixed(0.3))


def test_uncentered_half_circle_mass():
    rng = NumpyUniforms(1, 1_000_000)
    alphas = np.array([sphere_exit_uncentered(1.0, Point(0.5, 0.0), rng).angle for _ in range(1_000_000)])
    p = np.mean(np.abs(alphas) <= math.pi / 2)
    exact = 2 * math.atan(3) / math.pi
    kernel, _ = integrate.quad(lambda a: (1 - 0.25) / (2 * math.pi * (1 - math.cos(a) + 0.25)), -math.pi / 2, math.pi / 2)
    assert exact == pytest.approx(kernel, abs=1e-12)
    assert abs(p - exact) < 0.002


def _model_robin(a0=1.0, z=0.5):
    return ForwardModel(scene(eps=1e-6), bc=IdealizedRobin((a0,), (0.0,), z))


def test_boundary_replacement_probabilities():
    m = _model_robin(z=0.5)
    p = WalkParams(0.1, 1e-6, allow_coarse_eps=True)
    x = Point(1 - 5e-7, 0.0)
    pa = 0.1 / 0.6
    act = boundary_replacement(x, m, UNIT, p, Fixed(pa - 1e-12))
    assert isinstance(act, Absorb)
    assert act.score == pytest.approx(0.1 / 0.6)
    up = boundary_replacement(x, m, UNIT, p, Fixed(pa + 1e-9))
    down = boundary_replacement(x, m, UNIT, p, Fixed(pa + 0.5 * (1 - pa) + 1e-9))
    assert isinstance(up, Move) and isinstance(down, Move)
    assert (up.to.x, up.to.y) == pytest.approx((x.x - 0.1, 0.1))
    assert (down.to.x, down.to.y) == pytest.approx((x.x - 0.1, -0.1))
    # each reflection has probability z / (2 (h + z)) = 5/12
    assert 0.5 * (1 - pa) == pytest.approx(5 / 12)


def test_boundary_score_example():
    m = _model_robin(z=0.1)
    act = boundary_replacement(Point(1.0, 0.0), m, UNIT, WalkParams(0.1, 1e-6, allow_coarse_eps=True), Fixed(0.9))
    assert act.score == pytest.approx(0.5)


def test_gap_always_reflects():
    m = standard_cem_model(None)
    th = -math.pi / 8  # between E3 and E4
    x = Point(math.cos(th), math.sin(th))
    for u in (0.0, 1e-9, 0.3, 0.7, 1 - 1e-12):
        act = boundary_replacement(x, m, UNIT, WalkParams(0.05, 1e-6, allow_coarse_eps=True), Fixed(u))
        assert isinstance(act, Move) and act.score == 0.0


def test_interface_probabilities():
    ho, hi = interface_steps(1.5, 1.0, 0.1, InterfaceScheme.EQUAL_STEP)
    assert interface_outer_probability(1.5, 1.0, ho, hi) == pytest.approx(0.6)
    ho, hi = interface_steps(1.5, 1.0, 0.1, InterfaceScheme.EQUAL_FLUX)
    assert interface_outer_probability(1.5, 1.0, ho, hi) == pytest.approx(0.5)
    for s in InterfaceScheme:
        ho, hi = interface_steps(1.3, 1.3, 0.1, s)
        assert interface_outer_probability(1.3, 1.3, ho, hi) == pytest.approx(0.5)


def test_interface_replacement_moves():
    g = scene(0.3, 0.9, eps=1e-6)
    med = MediumRealization(1.5, 1.0, 0.9)
    p = WalkParams(0.02, 1e-6)
    x = Point(0.9, 0.0)
    # diagonals: 0.3, 0.3 outside, 0.2, 0.2 inside
    targets = [interface_replacement(x, med, p, Fixed(u), g) for u in (0.1, 0.4, 0.7, 0.9)]
    assert [t.r > 0.9 for t in targets] == [True, True, False, False]
    for t in targets:
        assert abs(abs(t.y) - 0.02) < 1e-15
        assert abs(abs(t.x - 0.9) - 0.02) < 1e-15
    with pytest.raises(GeometryError):
        interface_replacement(Point(0.5, 0), med, p, Fixed(0.1), g)


def test_u1_has_no_boundary_score(fast_backend):
    m = standard_cem_model(0.3)
    res = simulate_batch(m, WalkParams(0.02, 1e-6, allow_coarse_eps=True),
                         PathJob(seed=3, first=0, n=4000, electrode=3, score_kind=ScoreKind.U1), backend=fast_backend)
    assert np.all(res.data["score"] == 0.0)
    assert res.data["hit"].sum() > 0


def test_boundary_hits_geometric(fast_backend):
    z, h = 0.5, 0.05
    m = _model_robin(z=z)
    res = simulate_batch(m, WalkParams(h, h**3), PathJob(seed=4, first=0, n=1_000_000, start=Point(0.5, 0.2),
                                                         score_kind=ScoreKind.IDEALIZED), backend=fast_backend)
    assert np.all(res.data["terminal"] == Terminal.ABSORBED)
    mean_hits = res.data["boundary_hits"].mean()
    assert abs(mean_hits / (1 + z / h) - 1) < 0.05


@pytest.mark.parametrize("k", [1, 2, 3])
def test_dirichlet_martingale(k, fast_backend):
    """Plain walk on spheres reproduces harmonic polynomials Re (x + iy)^k."""
    a = [0.0] * (k + 1)
    a[k] = 1.0
    m = ForwardModel(scene(eps=1e-6), bc=Dirichlet(tuple(a), tuple([0.0] * (k + 1))))
    for x in (Point(0.3, 0.2), Point(-0.5, 0.6)):
        res = simulate_batch(m, WalkParams(0.01, 1e-6), PathJob(seed=5, first=0, n=1_000_000, start=x,
                                                                 score_kind=ScoreKind.IDEALIZED), backend=fast_backend)
        s = res.data["score"]
        exact = (complex(x.x, x.y) ** k).real
        assert abs(s.mean() - exact) < 3 * s.std() / 1e3 + 1e-5


def test_samplers_agree(fast_backend):
    z = 0.5
    m = ForwardModel(scene(eps=1e-6), bc=IdealizedRobin.cos_mode(4, z))
    x = Point(0.99361, 0.11286)
    est = []
    for smp in Sampler:
        res = simulate_batch(m, WalkParams(0.05, 1e-6, smp), PathJob(seed=6, first=0, n=200_000, start=x,
                                                                      score_kind=ScoreKind.IDEALIZED),
                             backend=fast_backend)
        s = res.data["score"]
        est.append((s.mean(), s.std() / math.sqrt(s.size)))
    (m0, s0), (m1, s1) = est
    assert abs(m0 - m1) < 3 * math.hypot(s0, s1)


def test_probability_conservation_in_replacements():
    """Absorption plus both reflections cover [0, 1) exactly."""
    for z in (0.01, 0.1, 0.5, 2.0):
        m = _model_robin(z=z)
        p = WalkParams(0.05, 1e-6, allow_coarse_eps=True)
        grid = np.linspace(0, 1, 2001, endpoint=False)
        kinds = []
        for u in grid:
            a = boundary_replacement(Point(1.0, 0.0), m, UNIT, p, Fixed(u))
            kinds.append(0 if isinstance(a, Absorb) else (1 if a.to.y > 0 else 2))
        frac = np.bincount(kinds, minlength=3) / grid.size
        pa = 0.05 / (0.05 + z)
        assert frac == pytest.approx([pa, (1 - pa) / 2, (1 - pa) / 2], abs=1e-3)
    g = scene(0.3, 0.9, eps=1e-6)
    for scheme in InterfaceScheme:
        med = MediumRealization(1.5, 1.0, 0.9)
        p = WalkParams(0.02, 1e-6, interface_scheme=scheme)
        grid = np.linspace(0, 1, 4001, endpoint=False)
        pts = [interface_replacement(Point(0.9, 0), med, p, Fixed(u), g) for u in grid]
        keys = [(t.r > 0.9, t.y > 0) for t in pts]
        fr = {k: keys.count(k) / grid.size for k in set(keys)}
        assert len(fr) == 4 and sum(fr.values()) == pytest.approx(1.0)
        ho, hi = interface_steps(1.5, 1.0, 0.02, scheme)
        po = interface_outer_probability(1.5, 1.0, ho, hi)
        assert fr[(True, True)] == pytest.approx(po / 2, abs=1e-3)
        assert fr[(False, False)] == pytest.approx((1 - po) / 2, abs=1e-3)


def test_censoring_is_reported():
    from eitwalk.backend import CensoringError

    m = _model_robin(z=0.5)
    with pytest.raises(CensoringError):
        simulate_batch(m, WalkParams(0.05, 1e-6, max_steps=3), PathJob(seed=1, first=0, n=100, start=Point(0, 0),
                                                                       score_kind=ScoreKind.IDEALIZED))
    out = simulate(Point(0, 0), m, UNIT, WalkParams(0.05, 1e-6, max_steps=3), path_stream(1, 0), ScoreKind.IDEALIZED)
    assert out.terminal is Terminal.CENSORED and out.steps == 3


def test_walk_params_validation():
    with pytest.raises(ValueError):
        WalkParams(0.1, 1e-2)
    WalkParams(0.1, 1e-2, allow_coarse_eps=True)
    with pytest.raises(ValueError):
        WalkParams(0.2, 1e-6).check_geometry(scene(0.3))
    WalkParams(0.1, 1e-6).check_geometry(scene(0.3))
    fld = ConductivityField(1.5, 1.0, 0.9)
    assert fld.layered
