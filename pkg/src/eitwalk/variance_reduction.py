"""Control-variate conditional sampling.

The chain with the inclusion agrees with the chain of the problem without
inclusion until it first reaches the inclusion layer. Conditioning on that
time, the electrode integral of u0 equals the integral of the known
no-inclusion solution v minus v at the hit point, so only the hit event is
sampled and the long boundary tail of every path drops out.

Three ways to get v: a closed-form Fourier solution, the semi-analytic
reference solver, or nested no-inclusion walks from the hit point.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .backend import BatchResult
from .estimators import CurrentEstimate, DoubleRandomizationPlan, _require_cem, assemble, run_electrode
from .geometry import Point
from .medium import CEM, ForwardModel, MediumRealization, ModelError
from .reference_solver import FourierSolution, medium_nodes, solve_cem, solve_idealized
from .rngstreams import Stream
from .walk import ChainMode, Sampler, ScoreKind, WalkParams, simulate

ELECTRODE_EXACT = "exact"  # electrode mean of v from the reference solver
ELECTRODE_SAMPLED = "sampled"  # v at the sampled start point


@dataclass(frozen=True)
class AnalyticFourier:
    solution: FourierSolution


@dataclass(frozen=True)
class Reference:
    K: int = 64  # v is only needed on the inclusion circle, where high modes are damped


@dataclass(frozen=True)
class NestedWalk:
    k: int = 10
    sampler: Sampler = Sampler.UNCENTERED

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("nested walk count k must be >= 1")


ControlVariateProvider = Union[AnalyticFourier, Reference, NestedWalk]


@dataclass(frozen=True)
class VRSample:
    eta_hat_0: float
    eta_hat_1: float
    hit: bool
    hit_point: Optional[Point] = None


@lru_cache(maxsize=64)
def _v_solution(model: ForwardModel, K: int, realization: Optional[MediumRealization] = None) -> FourierSolution:
    m = model.without_inclusion()
    if isinstance(m.bc, CEM):
        return solve_cem(m, K, realization=realization, residual=False)[0]
    return solve_idealized(m, K, realization=realization)


def _solution_for(provider, model: ForwardModel) -> FourierSolution:
    if isinstance(provider, AnalyticFourier):
        return provider.solution
    if model.conductivity.is_random:
        raise ModelError("random media need a NestedWalk provider")
    return _v_solution(model, provider.K)


def cv_value(provider: ControlVariateProvider, point: Point, model: ForwardModel, params: WalkParams,
             nested_rng: Optional[Sequence] = None, realization: Optional[MediumRealization] = None) -> float:
    """v(point) for the model without its inclusion.

    For ``NestedWalk`` give ``nested_rng`` as a sequence of k independent streams.
    """
    if isinstance(provider, NestedWalk):
        if nested_rng is None or len(nested_rng) < provider.k:
            raise ValueError("NestedWalk needs k nested streams")
        m = model.without_inclusion()
        med = realization or m.conductivity.mean_realization()
        p = WalkParams(params.h, params.eps, provider.sampler, params.interface_scheme,
                       ChainMode.DIRECT, params.max_steps, allow_coarse_eps=True)
        acc = 0.0
        for j in range(provider.k):
            acc += simulate(point, m, med, p, nested_rng[j], ScoreKind.V).score_sum
        return acc / provider.k
    return _solution_for(provider, model).value(point.r, point.angle)


def vr_sample(x0: Point, model: ForwardModel, realization: MediumRealization, params: WalkParams,
              provider: ControlVariateProvider, rng: Stream, nested_streams: Optional[tuple] = None) -> VRSample:
    """One conditional sample started at ``x0`` (the pure-Python reference path).

    ``nested_streams`` = (streams for x_tau, streams for x0), each of length k,
    for NestedWalk providers.
    """
    bc = _require_cem(model)
    if not model.has_inclusion:
        raise ModelError("variance reduction needs an inclusion")
    w = bc.layout.arc_length / bc.z
    out = simulate(x0, model, realization, params, rng, ScoreKind.U0)
    ns_hit, ns_x0 = nested_streams if nested_streams is not None else (None, None)
    v0 = cv_value(provider, x0, model, params, ns_x0, realization)
    if out.hit_point is None:
        return VRSample(w * v0, 0.0, False, None)
    vt = cv_value(provider, out.hit_point, model, params, ns_hit, realization)
    return VRSample(w * (v0 - vt), w, True, out.hit_point)


def electrode_means_of_v(model: ForwardModel, K: int = 256, nodes: int = 4) -> np.ndarray:
    """Mean of v over each electrode; averaged over the medium for random media.

    The medium average uses tensor Gauss-Legendre quadrature over the
    uniformly distributed parameters.
    """
    bc = _require_cem(model)
    out = np.zeros(bc.layout.count)
    for m, w in medium_nodes(model.conductivity, nodes):
        sol = _v_solution(model, K, m)
        out += w * np.array([sol.arc_mean(c, bc.layout.half_width) for c in bc.layout.centers])
    return out


def _eta_hat(res: BatchResult, bc: CEM, l: int, provider, model: ForwardModel, electrode_term: str,
             vbar: Optional[np.ndarray]):
    d = res.data
    w = bc.layout.arc_length / bc.z
    hit = d["hit"].astype(bool)
    if isinstance(provider, NestedWalk):
        vt = np.where(hit, d["nested_v"], 0.0)
    else:
        sol = _solution_for(provider, model)
        vt = np.zeros(hit.size)
        th = np.arctan2(d["hit_y"][hit], d["hit_x"][hit])
        vt[hit] = sol.values_on_circle(model.geometry.inclusion.radius, th)
    if electrode_term == ELECTRODE_EXACT:
        v0 = np.full(hit.size, vbar[l - 1])
    elif isinstance(provider, NestedWalk):
        v0 = d["nested_v0"]
    else:
        sol = _solution_for(provider, model)
        v0 = np.array([sol.value(math.hypot(x, y), math.atan2(y, x)) for x, y in zip(d["x0"], d["y0"])])
    return w * (v0 - vt), w * hit.astype(float)


def vr_params(params: WalkParams, provider: ControlVariateProvider) -> WalkParams:
    """Nested providers run the main chain with their own sampler as well."""
    if isinstance(provider, NestedWalk):
        return WalkParams(params.h, params.eps, provider.sampler, params.interface_scheme, params.chain_mode,
                          params.max_steps, allow_coarse_eps=True)
    return params


def vr_runs(model: ForwardModel, params: WalkParams, plan: DoubleRandomizationPlan,
            provider: ControlVariateProvider, seed: int, electrode_term: str = ELECTRODE_EXACT,
            workers: int = 1, backend: Optional[str] = None) -> list:
    """Per-electrode trajectory runs feeding :func:`estimate_currents_vr`."""
    bc = _require_cem(model)
    nested = isinstance(provider, NestedWalk)
    p = vr_params(params, provider)
    return [
        run_electrode(model, p, l, plan, seed, workers=workers, backend=backend,
                      nested_k=provider.k if nested else 0,
                      nested_x0=nested and electrode_term == ELECTRODE_SAMPLED)
        for l in range(1, bc.layout.count + 1)
    ]


def estimate_currents_vr(
    model: ForwardModel,
    params: WalkParams,
    plan: DoubleRandomizationPlan,
    provider: ControlVariateProvider,
    seed: int,
    electrode_term: str = ELECTRODE_EXACT,
    K_exact: int = 256,
    workers: int = 1,
    backend: Optional[str] = None,
    runs: Optional[list] = None,
    quadrature_nodes: int = 4,
) -> CurrentEstimate:
    """Variance-reduced currents; the assembly is the one of the direct estimator.

    ``runs`` may pass in the per-electrode direct runs (same trajectories up
    to the first inclusion hit) to reuse them with an exact provider.
    Reported CPU time covers the walks and the v evaluations, not the
    one-off solve for v.
    """
    bc = _require_cem(model)
    if not model.has_inclusion:
        raise ModelError("variance reduction needs an inclusion")
    if params.chain_mode is not ChainMode.DIRECT:
        raise ValueError("the conditional estimator stops at the first inclusion hit (direct chain)")
    nested = isinstance(provider, NestedWalk)
    if model.conductivity.is_random and not nested:
        raise ModelError("random media need a NestedWalk provider")
    if electrode_term not in (ELECTRODE_EXACT, ELECTRODE_SAMPLED):
        raise ValueError(f"unknown electrode term {electrode_term!r}")
    vbar = electrode_means_of_v(model, K_exact, quadrature_nodes) if electrode_term == ELECTRODE_EXACT else None
    if not nested:
        _solution_for(provider, model)  # precompute outside the timed part
    if runs is None:
        runs = vr_runs(model, params, plan, provider, seed, electrode_term, workers, backend)
    e0, e1, times = [], [], []
    for l, r in enumerate(runs, start=1):
        t0 = time.process_time()
        a, b = _eta_hat(r, bc, l, provider, model, electrode_term, vbar)
        e0.append(a)
        e1.append(b)
        times.append(r.cpu_time + time.process_time() - t0)
    est = assemble(e0, e1, bc, times, True)
    est.censored = sum(r.censored for r in runs)
    return est
