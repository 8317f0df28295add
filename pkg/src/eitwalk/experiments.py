"""The experiment families behind the command line.

Each ``run_*`` takes an :class:`ExperimentConfig` and returns an
:class:`OutputTable`; the result is a pure function of the config and seed
(timing columns aside, see ``output.timing``).
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import __version__
from .backend import BACKEND, PathJob, simulate_batch
from .config import ExperimentConfig, config_hash
from .estimators import DoubleRandomizationPlan, currents_from_runs, medium_covariance, run_electrode
from .geometry import Point
from .reference_solver import evaluate, expected_reference_currents, polar_field, solve_cem, solve_idealized
from .stats import RunningMoments, efficiency, fit_eoc
from .variance_reduction import NestedWalk, Reference, estimate_currents_vr, vr_runs
from .walk import Sampler, ScoreKind

log = logging.getLogger(__name__)


@dataclass
class OutputTable:
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)  # name -> OutputTable, written next to the main file

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([np.nan if r[i] is None else r[i] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}: {_cell(v)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_cell(x) for x in r])
        return buf.getvalue()


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _header(cfg: ExperimentConfig) -> dict:
    meta = {
        "eitwalk": __version__,
        "experiment": cfg.experiment.kind,
        "config_hash": config_hash(cfg),
        "seed": cfg.experiment.seed,
    }
    if cfg.output.timing:
        meta["backend"] = BACKEND
    return meta


def _plan(cfg: ExperimentConfig) -> DoubleRandomizationPlan:
    return DoubleRandomizationPlan(cfg.plan.M1, cfg.plan.M2)


def _steps(runs, l: int) -> float:
    d = runs[l - 1].data
    return float(np.sum(d["steps"]) + np.sum(d["nested_steps"]))


def _cost_per_sample(cfg: ExperimentConfig, est, runs, l: int) -> float:
    """CPU seconds per sample, or walk steps per sample with timing off."""
    n = len(runs[l - 1])
    if cfg.output.timing:
        return float(est.cpu_times[l - 1]) / n
    return _steps(runs, l) / n


def _C(sigma: float, n: int, cost: float) -> float:
    m = RunningMoments(n, 0.0, sigma * sigma * (n - 1))
    return efficiency(m, cost).C


def _eoc_meta(meta: dict, pairs) -> None:
    try:
        fit = fit_eoc(pairs)
    except ValueError as e:
        log.warning("no EOC fit: %s", e)
        return
    meta["eoc"] = fit.slope
    meta["eoc_intercept"] = fit.intercept
    meta["eoc_residual"] = fit.residual


def _r_label(r: Optional[float]):
    return "none" if r is None else r


def run_potential(cfg: ExperimentConfig, backend: Optional[str] = None) -> OutputTable:
    """Point values of the idealized Robin problem, one row per step size."""
    t0 = time.perf_counter()
    b = cfg.bc
    model = cfg.model(cfg.scene.inclusion_radii[0])
    x = Point(*b.point)
    ref = evaluate(solve_idealized(model, cfg.reference.modes, core_value=b.core_value), x)
    n = cfg.plan.M1 * cfg.plan.M2
    tab = OutputTable(["h", "estimate", "std_error", "bias_vs_reference", "n"], meta=_header(cfg))
    pairs = []
    for h in cfg.walk.h:
        params = cfg.checked_params(h, model)
        job = PathJob(seed=cfg.experiment.seed, first=0, n=n, start=x, score_kind=ScoreKind.IDEALIZED,
                      inclusion_credit=b.core_value)
        res = simulate_batch(model, params, job, workers=cfg.experiment.workers, backend=backend)
        m = RunningMoments.of(res.data["score"])
        tab.rows.append([h, m.mean, m.stderr, m.mean - ref, n])
        pairs.append((h, m.mean - ref))
    tab.meta["reference"] = ref
    if len(pairs) >= 2:
        _eoc_meta(tab.meta, pairs)
    if cfg.output.timing:
        tab.meta["wall_time"] = time.perf_counter() - t0
    return tab


def _provider(cfg: ExperimentConfig):
    v = cfg.vr
    if v.provider == "reference":
        return Reference(v.modes)
    return NestedWalk(v.nested_k, Sampler[v.sampler.upper()])


def run_currents(cfg: ExperimentConfig, backend: Optional[str] = None) -> OutputTable:
    """Reference, direct and variance-reduced currents through one electrode, per inclusion radius."""
    t0 = time.perf_counter()
    l = cfg.bc.report_electrode
    seed, workers = cfg.experiment.seed, cfg.experiment.workers
    plan = _plan(cfg)
    with_vr = cfg.vr.provider != "none" and any(r is not None for r in cfg.scene.inclusion_radii)
    cols = ["r", "J_ref", "J_direct", "se_direct", "sigma_direct"]
    if with_vr:
        cols += ["J_vr", "se_vr", "sigma_vr"]
    cols += ["c_hat", "charge_residual"]
    tab = OutputTable(cols, meta=_header(cfg))
    tab.meta["electrode"] = l
    for r in cfg.scene.inclusion_radii:
        model = cfg.model(r)
        params = cfg.checked_params(cfg.walk.h[0], model)
        J_ref = solve_cem(model, cfg.reference.modes, residual=False)[1].J_ref
        runs = [run_electrode(model, params, m, plan, seed, workers=workers, backend=backend)
                for m in range(1, cfg.bc.electrodes + 1)]
        c_runs = None
        if cfg.plan.independent_c and model.has_inclusion:
            c_runs = [run_electrode(model, params, m, plan, seed, ensemble=1, workers=workers, backend=backend)
                      for m in range(1, cfg.bc.electrodes + 1)]
        d = currents_from_runs(model, runs, c_runs)
        row = [_r_label(r), J_ref[l - 1], d.J[l - 1], d.J_stderr[l - 1], d.sigma[l - 1]]
        if with_vr:
            if model.has_inclusion:
                prov = _provider(cfg)
                v = estimate_currents_vr(model, params, plan, prov, seed, cfg.vr.electrode_term, cfg.vr.exact_modes,
                                         workers, backend, runs=runs if isinstance(prov, Reference) else None,
                                         quadrature_nodes=cfg.vr.quadrature_nodes)
                row += [v.J[l - 1], v.J_stderr[l - 1], v.sigma[l - 1]]
            else:
                row += [None, None, None]
        row += [d.c_hat, d.charge_residual]
        tab.rows.append(row)
    if cfg.output.timing:
        tab.meta["wall_time"] = time.perf_counter() - t0
    return tab


def run_bias_study(cfg: ExperimentConfig, backend: Optional[str] = None) -> OutputTable:
    """Bias of the direct current estimate over a step-size sweep, with the fitted order."""
    t0 = time.perf_counter()
    l = cfg.bc.report_electrode
    model = cfg.model(cfg.scene.inclusion_radii[0])
    J_ref = solve_cem(model, cfg.reference.modes, residual=False)[1].J_ref[l - 1]
    plan = _plan(cfg)
    tab = OutputTable(["h", "J", "std_error", "bias", "log_h", "log_abs_bias"], meta=_header(cfg))
    tab.meta["electrode"] = l
    tab.meta["J_ref"] = J_ref
    pairs = []
    for h in cfg.walk.h:
        params = cfg.checked_params(h, model)
        runs = [run_electrode(model, params, m, plan, cfg.experiment.seed, workers=cfg.experiment.workers,
                              backend=backend) for m in range(1, cfg.bc.electrodes + 1)]
        d = currents_from_runs(model, runs)
        bias = d.J[l - 1] - J_ref
        lb = math.log(abs(bias)) if bias != 0 else None
        tab.rows.append([h, d.J[l - 1], d.J_stderr[l - 1], bias, math.log(h), lb])
        pairs.append((h, bias))
    _eoc_meta(tab.meta, pairs)
    if cfg.output.timing:
        tab.meta["wall_time"] = time.perf_counter() - t0
    return tab


def _method_spec(name: str):
    """(kind, k, sampler) for a method name such as uw10."""
    if name in ("direct", "reference_vr"):
        return name, None, None
    return "nested", int(name[2:]), "centered" if name.startswith("rw") else "uncentered"


def run_efficiency(cfg: ExperimentConfig, backend: Optional[str] = None) -> OutputTable:
    """Variance times cost per sample, C = sigma^2 t, for every method and radius.

    ``rw<k>`` / ``uw<k>`` continue each inclusion hit with k nested walks on
    spheres (centered / uncentered sampling).
    """
    t0 = time.perf_counter()
    l = cfg.bc.report_electrode
    seed, workers = cfg.experiment.seed, cfg.experiment.workers
    plan = _plan(cfg)
    methods = list(cfg.output.methods)
    cols = ["r"] + [f"C_{m}" for m in methods] + [f"sigma_{m}" for m in methods]
    tab = OutputTable(cols, meta=_header(cfg))
    tab.meta["electrode"] = l
    tab.meta["cost_unit"] = "cpu_seconds" if cfg.output.timing else "walk_steps"
    for r in cfg.scene.inclusion_radii:
        model = cfg.model(r)
        params = cfg.checked_params(cfg.walk.h[0], model)
        runs = None
        C, S = {}, {}
        for name in methods:
            kind, k, smp = _method_spec(name)
            if kind != "nested" and runs is None:
                # the exact-provider estimator reuses the direct trajectories
                runs = [run_electrode(model, params, m, plan, seed, workers=workers, backend=backend)
                        for m in range(1, cfg.bc.electrodes + 1)]
            if kind == "direct":
                est, used = currents_from_runs(model, runs), runs
            elif not model.has_inclusion:
                C[name] = S[name] = None
                continue
            elif kind == "reference_vr":
                est = estimate_currents_vr(model, params, plan, Reference(cfg.vr.modes), seed, cfg.vr.electrode_term,
                                           cfg.vr.exact_modes, workers, backend, runs=runs)
                used = runs
            else:
                prov = NestedWalk(k, Sampler[smp.upper()])
                used = vr_runs(model, params, plan, prov, seed, cfg.vr.electrode_term, workers, backend)
                est = estimate_currents_vr(model, params, plan, prov, seed, cfg.vr.electrode_term, cfg.vr.exact_modes,
                                           workers, backend, runs=used, quadrature_nodes=cfg.vr.quadrature_nodes)
            sig = float(est.sigma[l - 1])
            S[name] = sig
            C[name] = _C(sig, len(used[l - 1]), _cost_per_sample(cfg, est, used, l))
        tab.rows.append([_r_label(r)] + [C[m] for m in methods] + [S[m] for m in methods])
    if cfg.output.timing:
        tab.meta["wall_time"] = time.perf_counter() - t0
    return tab


def run_random_medium(cfg: ExperimentConfig, backend: Optional[str] = None) -> OutputTable:
    """Mean currents over a random medium: direct and nested-walk variance reduction."""
    t0 = time.perf_counter()
    l = cfg.bc.report_electrode
    seed, workers = cfg.experiment.seed, cfg.experiment.workers
    plan = _plan(cfg)
    nodes = cfg.vr.quadrature_nodes
    with_vr = cfg.vr.provider != "none"
    cols = ["r", "E_J_ref", "E_J", "se_direct", "sigma_direct", "C_direct"]
    if with_vr:
        cols += ["E_J_vr", "se_vr", "sigma_vr", "C_vr"]
    tab = OutputTable(cols, meta=_header(cfg))
    tab.meta["electrode"] = l
    tab.meta["cost_unit"] = "cpu_seconds" if cfg.output.timing else "walk_steps"
    cov = OutputTable(["r", "l", "m", "cov"], meta=dict(tab.meta))
    for r in cfg.scene.inclusion_radii:
        model = cfg.model(r)
        params = cfg.checked_params(cfg.walk.h[0], model)
        E_ref = expected_reference_currents(model, cfg.reference.modes, nodes)
        runs = [run_electrode(model, params, m, plan, seed, workers=workers, backend=backend)
                for m in range(1, cfg.bc.electrodes + 1)]
        d = currents_from_runs(model, runs)
        n = len(runs[l - 1])
        row = [_r_label(r), E_ref[l - 1], d.J[l - 1], d.J_stderr[l - 1], d.sigma[l - 1],
               _C(d.sigma[l - 1], n, _cost_per_sample(cfg, d, runs, l))]
        if with_vr:
            if model.has_inclusion:
                prov = _provider(cfg)
                used = vr_runs(model, params, plan, prov, seed, cfg.vr.electrode_term, workers, backend)
                v = estimate_currents_vr(model, params, plan, prov, seed, cfg.vr.electrode_term, cfg.vr.exact_modes,
                                         workers, backend, runs=used, quadrature_nodes=nodes)
                row += [v.J[l - 1], v.J_stderr[l - 1], v.sigma[l - 1],
                        _C(v.sigma[l - 1], n, _cost_per_sample(cfg, v, used, l))]
            else:
                row += [None] * 4
        tab.rows.append(row)
        if cfg.output.covariance_draws > 0:
            S = medium_covariance(model, params, cfg.output.covariance_draws, seed,
                                  c_hat=d.c_hat if model.has_inclusion else 0.0, workers=workers, backend=backend)
            for i in range(S.shape[0]):
                for j in range(S.shape[1]):
                    cov.rows.append([_r_label(r), i + 1, j + 1, S[i, j]])
    if cov.rows:
        tab.extras["covariance"] = cov
    if cfg.output.timing:
        tab.meta["wall_time"] = time.perf_counter() - t0
    return tab


def boundary_current_density(sol, model, theta: np.ndarray) -> np.ndarray:
    """Outward current density from the boundary condition: (U_l - u) / z on E_l, zero in the gaps.

    More accurate than the truncated flux series, whose partial sums carry
    Gibbs tails from the jumps at the electrode edges.
    """
    bc = model.bc
    lay = bc.layout
    out = np.zeros(np.shape(theta))
    u = sol.trace(theta)
    for l, c in enumerate(lay.centers):
        on = np.abs(np.remainder(theta - c + math.pi, 2 * math.pi) - math.pi) <= lay.half_width
        out[on] = (bc.pattern.U[l] - u[on]) / bc.z
    return out


def run_field_export(cfg: ExperimentConfig, backend: Optional[str] = None) -> OutputTable:
    """Reference potential on a polar grid and the boundary current density.

    Rows of kind ``current_density`` use the boundary condition; ``flux_series``
    is the truncated Dirichlet-to-Neumann series of the same solution.
    """
    tab = OutputTable(["r_inclusion", "kind", "radius", "theta", "value"], meta=_header(cfg))
    o = cfg.output
    worst = worst_series = 0.0
    gx, gw = leggauss(64)
    for r in cfg.scene.inclusion_radii:
        model = cfg.model(r)
        sol, ref = solve_cem(model, cfg.reference.modes, residual=False)
        rl = _r_label(r)
        for rad, th, u in polar_field(sol, o.n_r, o.n_theta):
            tab.rows.append([rl, "potential", float(rad), float(th), float(u)])
        th = np.linspace(-math.pi, math.pi, o.n_theta, endpoint=False)
        for t, q in zip(th, boundary_current_density(sol, model, th)):
            tab.rows.append([rl, "current_density", 1.0, float(t), float(q)])
        for t, q in zip(th, sol.flux(th)):
            tab.rows.append([rl, "flux_series", 1.0, float(t), float(q)])
        # the mean outward current over each electrode is its current J_l
        lay = model.bc.layout
        for i, c in enumerate(lay.centers):
            tt = c + lay.half_width * gx
            worst = max(worst, abs(0.5 * float(gw @ boundary_current_density(sol, model, tt)) - ref.J_ref[i]))
            worst_series = max(worst_series, abs(0.5 * float(gw @ sol.flux(tt)) - ref.J_ref[i]))
    tab.meta["max_flux_integral_error"] = worst
    tab.meta["max_flux_series_integral_error"] = worst_series
    return tab


EXPERIMENTS = {
    "potential": run_potential,
    "currents": run_currents,
    "bias": run_bias_study,
    "efficiency": run_efficiency,
    "random_medium": run_random_medium,
    "field": run_field_export,
}


def run(cfg: ExperimentConfig, backend: Optional[str] = None) -> OutputTable:
    return EXPERIMENTS[cfg.experiment.kind](cfg, backend)
