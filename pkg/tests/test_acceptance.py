"""End-to-end acceptance criteria C1..C11.

Each test evaluates every part of its criterion before asserting, records a
one-line verdict (shown in the terminal summary) and fails if any part fails.
Set EITWALK_FULL=1 for the full-budget discrete-electrode EOC sweeps.
"""
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, stats

from eitwalk.config import parse
from eitwalk.experiments import run
from eitwalk.geometry import Point
from eitwalk.medium import standard_cem_model
from eitwalk.reference_solver import solve_cem
from eitwalk.rngstreams import path_stream
from eitwalk.walk import sphere_exit_uncentered

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

FULL = os.environ.get("EITWALK_FULL", "") not in ("", "0")
RADII = (0.9, 0.8, 0.7, 0.5, 0.3)
X_POINT = (0.99361, 0.11286)

# published electrode-3 values, by inclusion radius
TARGET_FIXED = {  # J_ref, J_direct, sigma_direct, J_vr, sigma_vr
    0.9: (0.976, 0.974, 0.445, 0.974, 0.161),
    0.8: (0.902, 0.896, 0.517, 0.904, 0.098),
    0.7: (0.874, 0.868, 0.612, 0.876, 0.054),
    0.5: (0.864, 0.872, 0.681, 0.865, 0.015),
    0.3: (0.862, 0.871, 0.751, 0.862, 0.001),
}
TARGET_RANDOM = {  # E[J_ref], J_direct, sigma_direct, J_vr, sigma_vr
    0.7: (0.902, 0.896, 0.654, 0.902, 0.225),
    0.6: (0.874, 0.874, 0.703, 0.872, 0.207),
    0.5: (0.864, 0.860, 0.747, 0.865, 0.153),
    0.3: (0.862, 0.860, 0.830, 0.860, 0.102),
    0.2: (0.862, 0.860, 0.899, 0.863, 0.057),
}


def verdict(request, n, checks):
    """checks: (label, ok, detail) triples."""
    ok = all(c[1] for c in checks)
    parts = [f"{lab} {det}" + ("" if good else " <-- fail") for lab, good, det in checks]
    line = f"C{n} {'PASS' if ok else 'FAIL'}: " + "; ".join(parts)
    print(line)
    request.node.user_properties.append(("criterion", line))
    assert ok, line


def run_text(text):
    return run(parse(text))


def rows(tab):
    return [dict(zip(tab.columns, r)) for r in tab.rows]


def potential_cfg(z, h, M2, eps, extra=""):
    return f"""[experiment]
kind = potential
[scene]
inclusion_radii = 0.3
eps = {eps}
[bc]
kind = idealized
z = {z}
mode = 4
point = {X_POINT[0]}, {X_POINT[1]}
[walk]
h = {h}
allow_coarse_h = true
[plan]
M2 = {M2}
{extra}"""


def analytic_cos4(p, z, rho=0.3):
    """Idealized Robin solution for cos 4theta data, zero on the inclusion."""
    r, t = math.hypot(*p), math.atan2(p[1], p[0])
    A = 1.0 / (1.0 - rho**8 + 4 * z * (1.0 + rho**8))
    return A * (r**4 - rho**8 * r**-4) * math.cos(4 * t)


# ---- C1 -----------------------------------------------------------------

def test_c1_idealized_point_values(request):
    checks = []
    for z, published in ((0.5, 0.299), (0.1, 0.642)):
        oracle = analytic_cos4(X_POINT, z)
        tab = run_text(potential_cfg(z, 0.05, 1_000_000, 0.05**3))
        (row,) = rows(tab)
        est, se = row["estimate"], row["std_error"]
        checks.append((f"z={z} vs {published}", abs(est - published) <= 3 * se + 0.01,
                       f"u={est:.4f} se={se:.1e}"))
        checks.append((f"z={z} vs analytic", abs(est - oracle) <= 0.01, f"oracle={oracle:.4f}"))
        checks.append((f"z={z} solver", abs(tab.meta["reference"] - oracle) < 1e-10, ""))
    verdict(request, 1, checks)


# ---- C2 -----------------------------------------------------------------

def test_c2_idealized_eoc(request):
    hs = ", ".join(f"{h:g}" for h in np.linspace(0.08, 0.2, 5))
    out = {}
    checks = []
    for z in (0.5, 0.1):
        tab = run_text(potential_cfg(z, hs, 4_000_000, 1e-4))
        out[z] = tab
        eoc = tab.meta["eoc"]
        checks.append((f"EOC z={z}", 1.7 <= eoc <= 2.4, f"{eoc:.3f}"))
    b5, b1 = out[0.5].column("bias_vs_reference"), out[0.1].column("bias_vs_reference")
    se = np.hypot(out[0.5].column("std_error"), out[0.1].column("std_error"))
    checks.append(("bias grows with z", bool(np.all(b5 > b1 - 3 * se)) and b5.mean() > b1.mean(),
                   f"{np.round(b5, 4).tolist()} vs {np.round(b1, 4).tolist()}"))
    verdict(request, 2, checks)


# ---- C3 -----------------------------------------------------------------

def test_c3_reference_currents(request):
    checks = []
    for r in RADII:
        _, ref = solve_cem(standard_cem_model(r), 256, residual=False)
        J3 = ref.J_ref[2]
        # targets are magnitudes; J3 itself is negative under the (-1)^j pattern
        checks.append((f"r={r}", abs(abs(J3) - TARGET_FIXED[r][0]) <= 0.01, f"J3={J3:.4f} target={TARGET_FIXED[r][0]}"))
        checks.append((f"r={r} sum", abs(ref.J_ref.sum()) < 1e-8, f"{abs(ref.J_ref.sum()):.1e}"))
    verdict(request, 3, checks)


# ---- C4 / C5 ------------------------------------------------------------

@pytest.fixture(scope="module")
def currents():
    # 10^6 trajectories per radius, spread over the eight electrodes
    return rows(run_text("""[experiment]
kind = currents
[scene]
inclusion_radii = 0.9, 0.8, 0.7, 0.5, 0.3
[bc]
z = 0.1
[walk]
h = 0.004
allow_coarse_eps = true
[plan]
M2 = 125000
[vr]
provider = reference
"""))


def test_c4_direct_currents(request, currents):
    checks = []
    for row in currents:
        r = row["r"]
        dev = abs(row["J_direct"] - row["J_ref"])
        checks.append((f"r={r} J", dev <= 3 * row["se_direct"],
                       f"{row['J_direct']:.4f}+-{row['se_direct']:.4f} ref {row['J_ref']:.4f}"))
        q = row["sigma_direct"] / TARGET_FIXED[r][2]
        checks.append((f"r={r} sigma", 0.5 <= q <= 2.0, f"{row['sigma_direct']:.3f} ({q:.2f}x)"))
    verdict(request, 4, checks)


def test_c5_variance_reduction(request, currents):
    by_r = {row["r"]: row for row in currents}
    ratio = {r: by_r[r]["sigma_vr"] / by_r[r]["sigma_direct"] for r in RADII}
    s_vr = [by_r[r]["sigma_vr"] for r in RADII]
    checks = [
        ("ratio r=0.9", ratio[0.9] < 0.5, f"{ratio[0.9]:.3f}"),
        ("ratio r=0.3", ratio[0.3] < 0.05, f"{ratio[0.3]:.4f}"),
        ("sigma_vr decreasing", all(a > b for a, b in zip(s_vr, s_vr[1:])), str(np.round(s_vr, 4).tolist())),
    ]
    for r in RADII:
        row = by_r[r]
        checks.append((f"r={r} J_vr", abs(row["J_vr"] - row["J_ref"]) <= 3 * row["se_vr"] + 1e-4,
                       f"{row['J_vr']:.4f}"))
    verdict(request, 5, checks)


# ---- C6 -----------------------------------------------------------------

EFF = """[experiment]
kind = efficiency
[scene]
inclusion_radii = {radii}
[bc]
z = 0.1
[walk]
h = 0.004
allow_coarse_eps = true
[plan]
M2 = 5000
[output]
methods = {methods}
timing = false
{medium}"""


def test_c6_efficiency_orderings(request):
    unit = rows(run_text(EFF.format(radii="0.9, 0.8, 0.7, 0.5, 0.3", methods="direct, reference_vr, uw1, uw2, uw10",
                                    medium="")))
    layered = rows(run_text(EFF.format(radii="0.8, 0.7, 0.5, 0.3", methods="direct",
                                       medium="[medium]\nkappa_outer = 1.5\nkappa_inner = 1.0\ninterface_radius = 0.9")))
    checks = []
    for row in unit:
        r = row["r"]
        checks.append((f"r={r} ref<direct", row["C_reference_vr"] < row["C_direct"],
                       f"{row['C_reference_vr']:.3g}<{row['C_direct']:.3g}"))
        c = [row["C_uw1"], row["C_uw2"], row["C_uw10"]]
        checks.append((f"r={r} uw1>uw2>uw10", c[0] > c[1] > c[2], "/".join(f"{x:.0f}" for x in c)))
    u = {row["r"]: row["C_direct"] for row in unit}
    for row in layered:
        r = row["r"]
        checks.append((f"r={r} layered>unit", row["C_direct"] > u[r], f"{row['C_direct']:.0f}>{u[r]:.0f}"))
    verdict(request, 6, checks)


# ---- C7 -----------------------------------------------------------------

def bias_cfg(z, hs, M2, layered):
    medium = "[medium]\nkappa_outer = 1.5\nkappa_inner = 1.0\ninterface_radius = 0.9\n" if layered else ""
    return f"""[experiment]
kind = bias
seed = 11
[scene]
inclusion_radii = 0.3
[bc]
z = {z}
[walk]
h = {hs}
allow_coarse_h = true
[plan]
M2 = {M2}
{medium}"""


def test_c7_electrode_eoc(request):
    M2 = 1_000_000 if FULL else 100_000
    unit_iv = (1.3, 2.1) if FULL else (1.0, 2.4)
    lay_iv = (1.5, 2.1) if FULL else (1.0, 2.4)
    checks = []
    for layered, hs, (lo, hi) in ((False, "0.04, 0.08, 0.12, 0.16, 0.2", unit_iv),
                                  (True, "0.02, 0.04, 0.06, 0.08, 0.1", lay_iv)):
        for z in (0.5, 0.1):
            eoc = run_text(bias_cfg(z, hs, M2, layered)).meta["eoc"]
            name = "layered" if layered else "unit"
            checks.append((f"{name} z={z}", lo <= eoc <= hi, f"{eoc:.3f} in [{lo}, {hi}]"))
    checks.append(("mode", True, "full" if FULL else "reduced"))
    verdict(request, 7, checks)


# ---- C8 -----------------------------------------------------------------

def poisson_cdf(phi, r):
    """CDF on (-pi, pi] of the exit angle relative to the start point's angle."""
    return 0.5 + np.arctan((1 + r) / (1 - r) * np.tan(phi / 2)) / np.pi


def test_c8_uwos_exit_law(request):
    n = 100_000
    crit = 1.63 / math.sqrt(n)
    checks = []
    for r in (0.0, 0.5, 0.9):
        kern = lambda a: (1 - r * r) / (2 * math.pi * (1 - 2 * r * math.cos(a) + r * r))
        for phi in (-2.0, 0.3, 1.0):
            # closed form against quadrature of the kernel
            assert poisson_cdf(phi, r) == pytest.approx(integrate.quad(kern, -math.pi, phi, points=[0.0])[0], abs=1e-9)
        rng = path_stream(31, int(r * 10))
        p = Point(r, 0.0)
        a = np.array([sphere_exit_uncentered(1.0, p, rng).angle for _ in range(n)])
        d = stats.kstest(a, lambda x: poisson_cdf(x, r)).statistic
        checks.append((f"r={r}R", d < crit, f"D={d:.5f} < {crit:.5f}"))
    verdict(request, 8, checks)


# ---- C9 -----------------------------------------------------------------

def test_c9_layered_radial_oracle(request):
    checks = []
    for scheme in ("equal_flux", "equal_step", "sqrt_scaled"):
        tab = run_text(f"""[experiment]
kind = potential
[scene]
inclusion_radii = 0.3
[medium]
kappa_outer = 1.5
kappa_inner = 1.0
interface_radius = 0.9
[bc]
kind = idealized
z = 0.5
mode = 0
point = 0.6, 0.0
[walk]
h = 0.02
interface_scheme = {scheme}
[plan]
M2 = 100000
""")
        (row,) = rows(tab)
        ref = tab.meta["reference"]
        checks.append((scheme, abs(row["estimate"] - 0.4153) <= 3 * row["std_error"] + 0.01
                       and abs(ref - 0.4153) < 1e-4, f"{row['estimate']:.4f}+-{row['std_error']:.4f} ref {ref:.5f}"))
    verdict(request, 9, checks)


# ---- C10 ----------------------------------------------------------------

def test_c10_random_medium(request):
    tab = run_text("""[experiment]
kind = random_medium
[scene]
inclusion_radii = 0.7, 0.6, 0.5, 0.3, 0.2
[medium]
kappa_outer = uniform(1.3, 1.7)
kappa_inner = uniform(0.8, 1.2)
interface_radius = uniform(0.89, 0.91)
[bc]
z = 0.1
[walk]
h = 0.004
allow_coarse_eps = true
[plan]
M2 = 1000
[vr]
provider = nested
nested_k = 10
sampler = uncentered
[output]
timing = false
""")
    checks = []
    for row in rows(tab):
        r = row["r"]
        checks.append((f"r={r} E[J]", abs(abs(row["E_J"]) - TARGET_RANDOM[r][0]) <= 3 * row["se_direct"],
                       f"{row['E_J']:.3f}+-{row['se_direct']:.3f} target {TARGET_RANDOM[r][0]}"))
        checks.append((f"r={r} mc vs ref", abs(row["E_J"] - row["E_J_ref"]) <= 3 * row["se_direct"],
                       f"ref {row['E_J_ref']:.3f}"))
        if r <= 0.5:
            q = row["sigma_vr"] / row["sigma_direct"]
            checks.append((f"r={r} ratio", q < 0.3, f"{q:.3f}"))
    verdict(request, 10, checks)


# ---- C11 ----------------------------------------------------------------

PROPERTY_TESTS = [
    "test_walk.py::test_probability_conservation_in_replacements",
    "test_walk.py::test_dirichlet_martingale",
    "test_backend.py::test_worker_count_does_not_change_results",
    "test_cli.py::test_reproducible_across_workers",
    "test_stats.py::test_merge_associative_and_exact",
    "test_reference_solver.py::test_charge_conservation_and_symmetry",
    "test_reference_solver.py::test_transmission_conditions",
]


def test_c11_property_suites_standalone(request):
    here = Path(__file__).parent
    checks = []
    for node in PROPERTY_TESTS:
        r = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(here / node)],
                           capture_output=True, text=True, cwd=here.parent)
        tail = r.stdout.strip().splitlines()[-1] if r.stdout.strip() else r.stderr.strip()[-200:]
        checks.append((node.split("::")[1], r.returncode == 0, tail))
    verdict(request, 11, checks)
