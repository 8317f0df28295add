"""Compiled kernel vs pure-Python fallback on the same path ranges.

    python benchmarks/bench_backends.py [--paths N] [--h H]

Runs every scenario through both backends, checks that the per-path records
are identical and reports paths per second and the speedup.
"""
import argparse
import time

import numpy as np

from eitwalk.backend import FIELDS, PathJob, _kernels, run_paths
from eitwalk.geometry import Point, scene
from eitwalk.medium import ConductivityField, ForwardModel, IdealizedRobin, UniformInterval, standard_cem_model
from eitwalk.walk import Sampler, ScoreKind, WalkParams


def scenarios(h):
    p = WalkParams(h, 1e-6, allow_coarse_eps=True)
    yield "idealized point, r=0.3", ForwardModel(scene(0.3, eps=1e-6), bc=IdealizedRobin.cos_mode(4, 0.5)), p, \
        dict(start=Point(0.99361, 0.11286), score_kind=ScoreKind.IDEALIZED)
    yield "CEM electrode 3, r=0.3", standard_cem_model(0.3), p, dict(electrode=3)
    yield "CEM layered, r=0.5", standard_cem_model(0.5, layered=True), p, dict(electrode=3)
    rnd = ConductivityField(UniformInterval(1.3, 1.7), UniformInterval(0.8, 1.2), UniformInterval(0.89, 0.91))
    yield "CEM random medium + 2 nested UWOS", standard_cem_model(0.3, conductivity=rnd), \
        WalkParams(h, 1e-6, Sampler.UNCENTERED, allow_coarse_eps=True), dict(electrode=3, nested_k=2)


def timed(model, params, job, backend):
    t0 = time.perf_counter()
    out = run_paths(model, params, job, backend)
    return out, time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=200)
    ap.add_argument("--h", type=float, default=0.02)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled kernel not built; run: pip install -e . --no-build-isolation")
    print(f"{'scenario':40s} {'python/s':>10s} {'compiled/s':>11s} {'speedup':>8s}  identical")
    for name, model, params, kw in scenarios(args.h):
        job = PathJob(seed=2024, first=1 << 40, n=args.paths, **kw)
        py, tp = timed(model, params, job, "python")
        # the compiled kernel is fast enough to repeat for a stable timing
        reps = 20
        t = 0.0
        for _ in range(reps):
            cc, dt = timed(model, params, job, "compiled")
            t += dt
        tc = t / reps
        same = all(np.array_equal(py[k], cc[k], equal_nan=True) for k in FIELDS)
        print(f"{name:40s} {args.paths / tp:10.0f} {args.paths / tc:11.0f} {tp / tc:8.1f}  {same}")


if __name__ == "__main__":
    main()
