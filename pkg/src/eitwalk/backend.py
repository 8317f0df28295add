"""Batch trajectory runner: compiled kernel when available, pure Python otherwise.

The backend is chosen once at import. ``EITWALK_BACKEND=python`` forces the
fallback; ``EITWALK_BACKEND=compiled`` makes a missing extension an error.

A batch is a contiguous range of path ids. Each path owns the streams keyed by
its id, so splitting the range over workers never changes a single number.
"""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .geometry import LAYER_TOL, Point
from .medium import CEM, Dirichlet, ForwardModel, IdealizedRobin, sample_medium, sample_on_electrode
from .rngstreams import medium_stream, nested_stream, path_stream
from .walk import ChainMode, ScoreKind, Terminal, WalkParams, simulate

log = logging.getLogger(__name__)

_forced = os.environ.get("EITWALK_BACKEND", "").lower()
try:
    if _forced == "python":
        raise ImportError("python backend forced")
    from . import _kernels  # type: ignore[attr-defined]
except ImportError:
    if _forced == "compiled":
        raise
    _kernels = None

BACKEND = "compiled" if _kernels is not None else "python"

# chunk boundaries are fixed in path-id space, independent of the worker count
CHUNK = 4096

FIELDS = {
    "score": np.float64,
    "score_pre": np.float64,
    "terminal": np.int8,
    "hit": np.int8,
    "hit_x": np.float64,
    "hit_y": np.float64,
    "electrode": np.int16,
    "boundary_hits": np.int64,
    "steps": np.int64,
    "x0": np.float64,
    "y0": np.float64,
    "kappa_outer": np.float64,
    "kappa_inner": np.float64,
    "interface_radius": np.float64,
    "nested_v": np.float64,
    "nested_v0": np.float64,
    "nested_steps": np.int64,
}


class CensoringError(RuntimeError):
    pass


@dataclass(frozen=True)
class PathJob:
    """What to simulate for path ids ``first, ..., first + n - 1``.

    Exactly one of ``start`` (fixed point) and ``electrode`` (uniform start on
    that electrode, 1-based) is set. ``nested_k`` > 0 runs that many
    no-inclusion continuation walks from every inclusion hit point (and, with
    ``nested_x0``, as many again from the start point).
    """

    seed: int
    first: int
    n: int
    start: Optional[Point] = None
    electrode: Optional[int] = None
    score_kind: ScoreKind = ScoreKind.U0
    inclusion_credit: float = 0.0
    nested_k: int = 0
    nested_x0: bool = False
    # medium draw of path p is keyed by ((p % medium_mod) if medium_mod else p) // medium_div
    medium_mod: int = 0
    medium_div: int = 1

    def __post_init__(self):
        if (self.start is None) == (self.electrode is None):
            raise ValueError("give exactly one of start and electrode")
        if self.n < 0 or self.first < 0:
            raise ValueError("path range must be non-negative")
        if self.medium_mod < 0 or self.medium_div < 1:
            raise ValueError("bad medium keying")

    def medium_key(self, pid: int) -> int:
        if self.medium_mod:
            pid = pid % self.medium_mod
        return pid // self.medium_div


def _empty(n: int) -> dict:
    out = {k: np.zeros(n, dtype=t) for k, t in FIELDS.items()}
    out["nested_v"][:] = np.nan
    out["nested_v0"][:] = np.nan
    return out


def run_paths_python(model: ForwardModel, params: WalkParams, job: PathJob) -> dict:
    out = _empty(job.n)
    field = model.conductivity
    through = params.chain_mode is ChainMode.THROUGH
    for i in range(job.n):
        pid = job.first + i
        med = sample_medium(field, medium_stream(job.seed, job.medium_key(pid)))
        rng = path_stream(job.seed, pid)
        if job.electrode is not None:
            x0 = sample_on_electrode(job.electrode, model.bc.layout, rng)
        else:
            x0 = job.start
        res = simulate(x0, model, med, params, rng, job.score_kind, job.inclusion_credit)
        out["score"][i] = res.score_sum
        out["score_pre"][i] = res.score_before_hit if res.hit_point is not None else res.score_sum
        out["terminal"][i] = int(res.terminal)
        out["boundary_hits"][i] = res.boundary_hits
        out["steps"][i] = res.steps
        out["electrode"][i] = res.electrode or 0
        out["x0"][i], out["y0"][i] = x0.x, x0.y
        out["kappa_outer"][i] = med.kappa_outer
        out["kappa_inner"][i] = med.kappa_inner
        out["interface_radius"][i] = med.interface_radius
        if res.hit_point is not None:
            out["hit"][i] = 1
            out["hit_x"][i], out["hit_y"][i] = res.hit_point.x, res.hit_point.y
        if job.nested_k and not through:
            nsteps = 0
            if res.hit_point is not None:
                acc = 0.0
                for j in range(job.nested_k):
                    sub = simulate(res.hit_point, model, med, params, nested_stream(job.seed, pid, j), ScoreKind.V)
                    acc += sub.score_sum
                    nsteps += sub.steps
                out["nested_v"][i] = acc / job.nested_k
            if job.nested_x0:
                acc = 0.0
                for j in range(job.nested_k):
                    sub = simulate(
                        x0, model, med, params, nested_stream(job.seed, pid, job.nested_k + j), ScoreKind.V
                    )
                    acc += sub.score_sum
                    nsteps += sub.steps
                out["nested_v0"][i] = acc / job.nested_k
            out["nested_steps"][i] = nsteps
    return out


def _flatten(model: ForwardModel, params: WalkParams, job: PathJob) -> dict:
    g = model.geometry
    if g.center.x != 0.0 or g.center.y != 0.0:
        raise ValueError("the compiled kernel needs origin-centered scenes")
    bc = model.bc
    if isinstance(bc, CEM):
        kind, ca, cb = 1, np.zeros(1), np.zeros(1)
        centers = np.asarray(bc.layout.centers, dtype=np.float64)
        U = np.asarray(bc.pattern.U, dtype=np.float64)
        hw, z = bc.layout.half_width, bc.z
    elif isinstance(bc, (IdealizedRobin, Dirichlet)):
        kind = 0 if isinstance(bc, IdealizedRobin) else 2
        ca = np.asarray(bc.a, dtype=np.float64)
        cb = np.asarray(bc.b, dtype=np.float64)
        centers, U, hw = np.zeros(1), np.zeros(1), 0.0
        z = bc.z if isinstance(bc, IdealizedRobin) else 1.0
    else:
        raise TypeError(f"unsupported boundary condition {type(bc).__name__}")
    if isinstance(bc, CEM) and bc.layout.radius != g.outer.radius:
        raise ValueError("electrodes must sit on the outer circle")
    start = job.start or Point(0.0, 0.0)
    return dict(
        R0=g.outer.radius,
        rho=g.inclusion.radius if g.inclusion is not None else 0.0,
        has_inc=int(g.inclusion is not None),
        has_if=int(g.interface is not None),
        eps=g.eps + LAYER_TOL,  # the kernel compares against the widened threshold directly
        bc_kind=kind,
        ca=ca,
        cb=cb,
        centers=centers,
        U=U,
        hw=hw,
        z=z,
        bounds=np.ascontiguousarray(model.conductivity.bounds(), dtype=np.float64),
        h=params.h,
        sampler=int(params.sampler),
        scheme=int(params.interface_scheme),
        through=int(params.chain_mode is ChainMode.THROUGH),
        max_steps=int(params.max_steps),
        credit=float(job.inclusion_credit),
        use_g=int(job.score_kind is not ScoreKind.U1),
        no_inclusion=int(job.score_kind is ScoreKind.V),
        electrode=int(job.electrode or 0),
        sx=float(start.x),
        sy=float(start.y),
        nested_k=int(job.nested_k),
        nested_x0=int(job.nested_x0),
        seed=int(job.seed),
        medium_mod=int(job.medium_mod),
        medium_div=int(job.medium_div),
    )


def run_paths_compiled(model: ForwardModel, params: WalkParams, job: PathJob) -> dict:
    out = _empty(job.n)
    _kernels.run_paths(_flatten(model, params, job), job.first, job.n, out)
    return out


def run_paths(model: ForwardModel, params: WalkParams, job: PathJob, backend: Optional[str] = None) -> dict:
    """Simulate one contiguous batch in the current process."""
    backend = backend or BACKEND
    if backend == "compiled":
        if _kernels is None:
            raise RuntimeError("compiled kernel not available")
        return run_paths_compiled(model, params, job)
    return run_paths_python(model, params, job)


def _chunk_worker(args):
    model, params, job, backend = args
    t0 = time.process_time()
    res = run_paths(model, params, job, backend)
    return res, time.process_time() - t0


@dataclass
class BatchResult:
    data: dict
    cpu_time: float  # summed single-worker CPU seconds

    def __len__(self):
        return len(self.data["score"])

    @property
    def censored(self) -> int:
        return int(np.count_nonzero(self.data["terminal"] == Terminal.CENSORED))


def simulate_batch(
    model: ForwardModel,
    params: WalkParams,
    job: PathJob,
    workers: int = 1,
    backend: Optional[str] = None,
    max_censored_fraction: float = 1e-6,
) -> BatchResult:
    """Run ``job`` split into fixed chunks, optionally over a process pool.

    Results are concatenated in path-id order, so the output does not depend
    on ``workers``.
    """
    starts = list(range(job.first, job.first + job.n, CHUNK))
    jobs = [replace(job, first=s, n=min(CHUNK, job.first + job.n - s)) for s in starts]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_worker, [(model, params, j, backend) for j in jobs]))
    else:
        parts = [_chunk_worker((model, params, j, backend)) for j in jobs]
    if parts:
        data = {k: np.concatenate([p[0][k] for p in parts]) for k in FIELDS}
    else:
        data = _empty(0)
    res = BatchResult(data, math.fsum(p[1] for p in parts))
    n_cens = res.censored
    if job.n and n_cens > max_censored_fraction * job.n:
        raise CensoringError(f"{n_cens} of {job.n} trajectories hit max_steps={params.max_steps}")
    if n_cens:
        log.warning("%d censored trajectories", n_cens)
    return res
