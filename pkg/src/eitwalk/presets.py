"""Built-in configurations, one per experiment kind.

They reproduce the published settings (geometry, media, step sizes); the
path budgets are modest defaults, raise ``[plan] M2`` for full-size runs.
"""

POTENTIAL = """\
[experiment]
kind = potential

[scene]
inclusion_radii = 0.3
eps = 0.000125

[bc]
kind = idealized
z = 0.5
mode = 4
point = 0.99361, 0.11286

[walk]
h = 0.05

[plan]
M2 = 1000000
"""

CURRENTS = """\
[experiment]
kind = currents

[scene]
inclusion_radii = 0.9, 0.8, 0.7, 0.5, 0.3

[bc]
z = 0.1

[walk]
h = 0.004
allow_coarse_eps = true

[plan]
M2 = 100000

[vr]
provider = reference
"""

BIAS = """\
[experiment]
kind = bias

[scene]
inclusion_radii = 0.3

[bc]
z = 0.1

[walk]
h = 0.04, 0.08, 0.12, 0.16, 0.2
# h = 0.2 exceeds a quarter of the boundary-to-inclusion gap; the stencils
# shrink themselves, so the sweep is allowed explicitly
allow_coarse_h = true

[plan]
M2 = 100000
"""

EFFICIENCY = """\
[experiment]
kind = efficiency

[scene]
inclusion_radii = 0.9, 0.8, 0.7, 0.5, 0.3

[bc]
z = 0.1

[walk]
h = 0.004
allow_coarse_eps = true

[plan]
M2 = 10000
"""

RANDOM_MEDIUM = """\
[experiment]
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
M2 = 20000

[vr]
provider = nested
nested_k = 10
sampler = uncentered
"""

FIELD = """\
[experiment]
kind = field

[scene]
inclusion_radii = 0.3

[bc]
z = 0.1

[walk]
h = 0.004
allow_coarse_eps = true
"""

PRESETS = {
    "potential": POTENTIAL,
    "currents": CURRENTS,
    "bias": BIAS,
    "efficiency": EFFICIENCY,
    "random_medium": RANDOM_MEDIUM,
    "field": FIELD,
}
