import numpy as np
import pytest

from eitwalk.backend import CHUNK, FIELDS, PathJob, _kernels, run_paths, simulate_batch
from eitwalk.geometry import Point, scene
from eitwalk.medium import ConductivityField, Dirichlet, ForwardModel, IdealizedRobin, UniformInterval, standard_cem_model
from eitwalk.walk import ChainMode, InterfaceScheme, Sampler, ScoreKind, WalkParams

RANDOM = ConductivityField(UniformInterval(1.3, 1.7), UniformInterval(0.8, 1.2), UniformInterval(0.89, 0.91))


def scenarios():
    p = WalkParams(0.05, 1e-6, allow_coarse_eps=True)
    yield "idealized", ForwardModel(scene(0.3, eps=1e-6), bc=IdealizedRobin.cos_mode(4, 0.5)), p, \
        dict(start=Point(0.99361, 0.11286), score_kind=ScoreKind.IDEALIZED, inclusion_credit=0.25)
    yield "dirichlet", ForwardModel(scene(eps=1e-6), bc=Dirichlet((0, 0, 1.0), (0, 0, 0.5))), p, \
        dict(start=Point(0.2, -0.3), score_kind=ScoreKind.IDEALIZED)
    yield "cem", standard_cem_model(0.3), p, dict(electrode=3)
    yield "cem u1", standard_cem_model(0.5), p, dict(electrode=2, score_kind=ScoreKind.U1)
    for s in InterfaceScheme:
        yield f"layered {s.name}", standard_cem_model(0.5, layered=True), \
            WalkParams(0.02, 1e-6, interface_scheme=s), dict(electrode=7)
    yield "through chain", standard_cem_model(0.3), \
        WalkParams(0.05, 1e-6, chain_mode=ChainMode.THROUGH, allow_coarse_eps=True), dict(electrode=3)
    yield "uwos no inclusion", standard_cem_model(None), WalkParams(0.05, 1e-6, Sampler.UNCENTERED, allow_coarse_eps=True), \
        dict(electrode=1, score_kind=ScoreKind.V)
    yield "random medium nested", standard_cem_model(0.3, conductivity=RANDOM), \
        WalkParams(0.05, 1e-6, Sampler.UNCENTERED, allow_coarse_eps=True), dict(electrode=3, nested_k=2, nested_x0=True)


@pytest.mark.skipif(_kernels is None, reason="compiled kernel not built")
@pytest.mark.parametrize("name,model,params,kw", list(scenarios()), ids=[s[0] for s in scenarios()])
def test_backends_bit_identical(name, model, params, kw):
    job = PathJob(seed=17, first=(5 << 40) + 123, n=60, **kw)
    py = run_paths(model, params, job, "python")
    cc = run_paths(model, params, job, "compiled")
    for k in FIELDS:
        assert np.array_equal(py[k], cc[k], equal_nan=True), k


def test_python_backend_runs_standalone():
    job = PathJob(seed=1, first=0, n=20, electrode=3)
    out = run_paths(standard_cem_model(0.3), WalkParams(0.05, 1e-6, allow_coarse_eps=True), job, "python")
    assert out["score"].shape == (20,)


def test_worker_count_does_not_change_results(fast_backend):
    m = standard_cem_model(0.3)
    p = WalkParams(0.05, 1e-6, allow_coarse_eps=True)
    job = PathJob(seed=9, first=7 << 40, n=2 * CHUNK + 100, electrode=3)
    a = simulate_batch(m, p, job, workers=1, backend=fast_backend)
    b = simulate_batch(m, p, job, workers=3, backend=fast_backend)
    for k in FIELDS:
        assert np.array_equal(a.data[k], b.data[k], equal_nan=True)


def test_path_ranges_compose(fast_backend):
    """A batch equals the concatenation of its sub-ranges."""
    m = standard_cem_model(0.3)
    p = WalkParams(0.05, 1e-6, allow_coarse_eps=True)
    whole = run_paths(m, p, PathJob(seed=2, first=100, n=50, electrode=4), fast_backend)
    a = run_paths(m, p, PathJob(seed=2, first=100, n=20, electrode=4), fast_backend)
    b = run_paths(m, p, PathJob(seed=2, first=120, n=30, electrode=4), fast_backend)
    assert np.array_equal(whole["score"], np.concatenate([a["score"], b["score"]]))


def test_job_validation():
    with pytest.raises(ValueError):
        PathJob(seed=1, first=0, n=1)
    with pytest.raises(ValueError):
        PathJob(seed=1, first=0, n=1, start=Point(0, 0), electrode=1)
