"""Electrode-current estimators built on the u = u0 + c u1 split.

Each electrode gets its own block of path ids. Every trajectory started on
electrode l yields both samples at once: the boundary score (for u0) and the
inclusion-hit indicator (for u1, whose boundary data vanish and whose value
on the inclusion is 1). The currents then follow from the charge balance.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .backend import BatchResult, PathJob, simulate_batch
from .medium import CEM, ConductivityField, ForwardModel, MediumRealization, ModelError, sample_on_electrode
from .rngstreams import start_stream
from .stats import RunningMoments
from .walk import ScoreKind, WalkParams

# path ids: electrode l of ensemble e owns [(e * 64 + l) << 40, ... + 2^40)
_ID_SHIFT = 40
ID_SPAN = 1 << _ID_SHIFT


class EstimationError(RuntimeError):
    pass


def path_block(l: int, ensemble: int = 0) -> int:
    return (ensemble * 64 + l) << _ID_SHIFT


@dataclass(frozen=True)
class DoubleRandomizationPlan:
    M1: int = 1  # chains per start point
    M2: int = 1000  # start points per electrode

    def __post_init__(self):
        if self.M1 < 1 or self.M2 < 1:
            raise ValueError("M1 and M2 must be positive")

    @property
    def total(self) -> int:
        return self.M1 * self.M2

    @classmethod
    def pooled(cls, n: int) -> "DoubleRandomizationPlan":
        return cls(1, n)


@dataclass(frozen=True)
class XiEstimate:
    electrode: int
    kind: ScoreKind
    mean: float
    variance: float
    n: int

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n > 0 else float("nan")


@dataclass
class CurrentEstimate:
    J: np.ndarray
    c_hat: float
    charge_residual: float
    per_electrode: list  # (mean, variance, n) of the electrode-integral samples
    wall_time: float  # summed CPU seconds of the trajectory runs
    J_stderr: np.ndarray = None
    sigma: np.ndarray = None  # per-path std of eta0 + c eta1
    xi0: list = field(default_factory=list)
    xi1: list = field(default_factory=list)
    cpu_times: np.ndarray = None  # per electrode
    censored: int = 0


def _require_cem(model: ForwardModel) -> CEM:
    if not isinstance(model.bc, CEM):
        raise ModelError("electrode currents need a CEM boundary condition")
    return model.bc


def fixed_medium(model: ForwardModel, realization: MediumRealization) -> ForwardModel:
    """The same model with its conductivity pinned to one realization."""
    fld = model.conductivity
    pinned = ConductivityField(
        realization.kappa_outer,
        realization.kappa_inner,
        realization.interface_radius if fld.interface_radius is not None else None,
    )
    return dataclasses.replace(model, conductivity=pinned)


def run_electrode(
    model: ForwardModel,
    params: WalkParams,
    l: int,
    plan: DoubleRandomizationPlan,
    seed: int,
    ensemble: int = 0,
    workers: int = 1,
    backend: Optional[str] = None,
    nested_k: int = 0,
    nested_x0: bool = False,
    medium_pairs: bool = False,
) -> BatchResult:
    """All trajectories of one electrode under ``plan``.

    With M1 = 1 each path draws its own start on E_l. With M1 > 1 the M2
    start points come from dedicated start streams and each feeds M1 chains.
    ``medium_pairs`` makes paths 2i and 2i + 1 of every electrode share one
    medium draw (conditionally independent pairs for covariances).
    """
    first = path_block(l, ensemble)
    mk = dict(medium_mod=ID_SPAN, medium_div=2) if medium_pairs else {}
    common = dict(seed=seed, nested_k=nested_k, nested_x0=nested_x0, **mk)
    if plan.M1 == 1:
        return simulate_batch(model, params, PathJob(first=first, n=plan.M2, electrode=l, **common),
                              workers=workers, backend=backend)
    bc = _require_cem(model)
    parts = []
    for m2 in range(plan.M2):
        x0 = sample_on_electrode(l, bc.layout, start_stream(seed, first + m2))
        job = PathJob(first=first + m2 * plan.M1, n=plan.M1, start=x0, **common)
        parts.append(simulate_batch(model, params, job, workers=workers, backend=backend))
    data = {k: np.concatenate([p.data[k] for p in parts]) for k in parts[0].data}
    return BatchResult(data, math.fsum(p.cpu_time for p in parts))


def eta_direct(res: BatchResult, bc: CEM):
    """Per-path samples (eta0, eta1) of the direct estimator."""
    w = bc.layout.arc_length / bc.z
    d = res.data
    return w * d["score"], w * d["hit"].astype(float)


def xi_from_samples(l: int, kind: ScoreKind, x: np.ndarray) -> XiEstimate:
    m = RunningMoments.of(x)
    return XiEstimate(l, kind, m.mean, m.variance, m.n)


def estimate_xi(
    l: int,
    kind: ScoreKind,
    model: ForwardModel,
    realization: Optional[MediumRealization],
    params: WalkParams,
    plan: DoubleRandomizationPlan,
    seed: int,
    workers: int = 1,
    backend: Optional[str] = None,
) -> XiEstimate:
    """Estimate of the integral of u_kind / z over electrode l."""
    bc = _require_cem(model)
    if kind not in (ScoreKind.U0, ScoreKind.U1):
        raise ValueError("kind must be U0 or U1")
    if realization is not None:
        model = fixed_medium(model, realization)
    res = run_electrode(model, params, l, plan, seed, workers=workers, backend=backend)
    e0, e1 = eta_direct(res, bc)
    return xi_from_samples(l, kind, e0 if kind is ScoreKind.U0 else e1)


def estimate_c(xi0: Sequence[XiEstimate], xi1: Sequence[XiEstimate], pattern, z: float, layout) -> float:
    E = layout.arc_length
    num = sum(E * U / z - x.mean for U, x in zip(pattern.U, xi0))
    den = sum(x.mean for x in xi1)
    se = math.sqrt(sum(x.variance / x.n for x in xi1 if x.n > 0))
    if den == 0.0 or abs(den) <= 3.0 * se:
        raise EstimationError("inclusion unreachable / no inclusion: u1 integrals vanish within noise")
    return num / den


def _grads(m1_l: float, S1: float, c: float, E: float, l: int, N: int):
    """Gradients of J_l: (d/d xi0, d/d xi1) of its own ensemble, then of the c ensemble.

    J_l = U_l/z - (xi0_l + c xi1_l)/E with c = (sum_m |E| U_m/z - xi0_m) / S1.
    """
    g0 = np.zeros(N)
    g1 = np.zeros(N)
    g0[l] = -1.0 / E
    g1[l] = -c / E
    h0 = np.full(N, m1_l / (E * S1))
    h1 = np.full(N, m1_l * c / (E * S1))
    return g0, g1, h0, h1


def assemble(
    eta0: Sequence[np.ndarray],
    eta1: Sequence[np.ndarray],
    bc: CEM,
    cpu_times: Sequence[float],
    has_inclusion: bool = True,
    c_eta: Optional[tuple] = None,
) -> CurrentEstimate:
    """Currents from per-electrode sample arrays (direct or variance reduced).

    ``c_eta`` optionally supplies an independent ensemble (eta0, eta1) for c.
    """
    N = bc.layout.count
    E = bc.layout.arc_length
    U = np.asarray(bc.pattern.U, dtype=float)
    xi0 = [xi_from_samples(l + 1, ScoreKind.U0, eta0[l]) for l in range(N)]
    xi1 = [xi_from_samples(l + 1, ScoreKind.U1, eta1[l]) for l in range(N)]
    m0 = np.array([x.mean for x in xi0])
    m1 = np.array([x.mean for x in xi1])
    if has_inclusion:
        if c_eta is None:
            cx0, cx1 = xi0, xi1
        else:
            cx0 = [xi_from_samples(l + 1, ScoreKind.U0, c_eta[0][l]) for l in range(N)]
            cx1 = [xi_from_samples(l + 1, ScoreKind.U1, c_eta[1][l]) for l in range(N)]
        c = estimate_c(cx0, cx1, bc.pattern, bc.z, bc.layout)
        cm1 = np.array([x.mean for x in cx1])
    else:
        c = 0.0
    J = U / bc.z - (m0 + c * m1) / E
    # delta-method standard errors; electrodes are independent ensembles
    covs = [np.cov(np.vstack([eta0[l], eta1[l]])) / len(eta0[l]) for l in range(N)]
    if c_eta is not None and has_inclusion:
        ccovs = [np.cov(np.vstack([c_eta[0][l], c_eta[1][l]])) / len(c_eta[0][l]) for l in range(N)]
    se = np.zeros(N)
    for l in range(N):
        if has_inclusion:
            S1 = float(np.sum(m1 if c_eta is None else cm1))
            g0, g1, h0, h1 = _grads(m1[l], S1, c, E, l, N)
        else:
            g0, g1, h0, h1 = _grads(0.0, 1.0, 0.0, E, l, N)
        var = 0.0
        for m in range(N):
            if c_eta is None:
                a = np.array([g0[m] + h0[m], g1[m] + h1[m]])
                var += a @ covs[m] @ a
            else:
                a = np.array([g0[m], g1[m]])
                b = np.array([h0[m], h1[m]])
                var += a @ covs[m] @ a + b @ ccovs[m] @ b
        se[l] = math.sqrt(max(var, 0.0))
    sig = np.array([np.std(eta0[l] + c * eta1[l], ddof=1) for l in range(N)])
    per = [(x.mean, x.variance, x.n) for x in xi0]
    return CurrentEstimate(
        J=J,
        c_hat=c,
        charge_residual=float(np.sum(J)),
        per_electrode=per,
        wall_time=float(math.fsum(cpu_times)),
        J_stderr=se,
        sigma=sig,
        xi0=xi0,
        xi1=xi1,
        cpu_times=np.asarray(cpu_times, dtype=float),
    )


def estimate_currents(
    model: ForwardModel,
    params: WalkParams,
    plan: DoubleRandomizationPlan,
    seed: int,
    workers: int = 1,
    backend: Optional[str] = None,
    independent_c: bool = False,
) -> CurrentEstimate:
    """Direct estimator of all electrode currents.

    Random media need nothing special: every path draws its own realization,
    so the pooled samples estimate the mean currents.
    """
    bc = _require_cem(model)
    N = bc.layout.count
    runs = [run_electrode(model, params, l, plan, seed, workers=workers, backend=backend) for l in range(1, N + 1)]
    c_runs = None
    if independent_c and model.has_inclusion:
        c_runs = [run_electrode(model, params, l, plan, seed, ensemble=1, workers=workers, backend=backend)
                  for l in range(1, N + 1)]
    return currents_from_runs(model, runs, c_runs)


def currents_from_runs(model: ForwardModel, runs: Sequence[BatchResult],
                       c_runs: Optional[Sequence[BatchResult]] = None) -> CurrentEstimate:
    """Direct currents from per-electrode runs (electrode order)."""
    bc = _require_cem(model)
    etas = [eta_direct(r, bc) for r in runs]
    times = [r.cpu_time for r in runs]
    c_eta = None
    if c_runs is not None:
        ce = [eta_direct(r, bc) for r in c_runs]
        c_eta = ([e[0] for e in ce], [e[1] for e in ce])
        times += [r.cpu_time for r in c_runs]
    est = assemble([e[0] for e in etas], [e[1] for e in etas], bc, times, model.has_inclusion, c_eta)
    est.cpu_times = np.array([r.cpu_time for r in runs])
    est.censored = sum(r.censored for r in runs)
    return est


def medium_covariance(
    model: ForwardModel,
    params: WalkParams,
    n_draws: int,
    seed: int,
    c_hat: float = 0.0,
    workers: int = 1,
    backend: Optional[str] = None,
    ensemble: int = 2,
) -> np.ndarray:
    """Covariance over the medium of the electrode currents.

    For each medium draw, every electrode runs two trajectories that share
    the draw but nothing else; the product of the two single-path current
    samples is unbiased for E[J_l J_m | medium]. ``c_hat`` is held fixed.
    """
    bc = _require_cem(model)
    N = bc.layout.count
    E = bc.layout.arc_length
    U = np.asarray(bc.pattern.U, dtype=float)
    plan = DoubleRandomizationPlan.pooled(2 * n_draws)
    samples = []
    for l in range(1, N + 1):
        r = run_electrode(model, params, l, plan, seed, ensemble=ensemble, workers=workers,
                          backend=backend, medium_pairs=True)
        e0, e1 = eta_direct(r, bc)
        samples.append(U[l - 1] / bc.z - (e0 + c_hat * e1) / E)
    S = np.array(samples)  # (N, 2 n_draws)
    A, B = S[:, 0::2], S[:, 1::2]
    second = 0.5 * (A @ B.T + B @ A.T) / n_draws
    mean = 0.5 * (A.mean(axis=1) + B.mean(axis=1))
    return second - np.outer(mean, mean)
