import dataclasses

import pytest

from eitwalk.config import ConfigError, ExperimentConfig, config_hash, parse, serialize, with_overrides
from eitwalk.medium import UniformInterval
from eitwalk.presets import PRESETS


@pytest.mark.parametrize("kind", sorted(PRESETS))
def test_presets_round_trip(kind):
    cfg = parse(PRESETS[kind])
    text = serialize(cfg)
    again = parse(text)
    assert again == cfg
    assert serialize(again) == text


def test_values_parse():
    cfg = parse("""
[experiment]
kind = random_medium
seed = 9
[scene]
inclusion_radii = 0.7, none, 0.2
[medium]
kappa_outer = uniform(1.3, 1.7)
kappa_inner = 1.0
interface_radius = uniform(0.89, 0.91)
[vr]
provider = nested
[walk]
h = 0.01
allow_coarse_eps = true
""")
    assert cfg.experiment.seed == 9
    assert cfg.scene.inclusion_radii == (0.7, None, 0.2)
    assert cfg.medium.kappa_outer == UniformInterval(1.3, 1.7)
    assert parse(serialize(cfg)) == cfg


def _err(text):
    with pytest.raises(ConfigError) as ei:
        parse(text, source="x.ini")
    return ei.value


def test_errors_point_at_lines():
    e = _err("[experiment]\nkind = currents\n[walk]\nh = 0.01\nbogus = 1\n")
    assert e.line == 5 and "bogus" in str(e) and str(e).startswith("x.ini:5:")
    e = _err("[experiment]\nkind = currents\n\n[plan]\nM2 = many\n")
    assert e.line == 5
    e = _err("[nope]\na = 1\n")
    assert e.line == 1
    e = _err("[experiment]\nkind = potential\n[bc]\nkind = cem\n")
    assert e.line == 4
    e = _err("[experiment]\nworkers = 0\n")
    assert e.line == 2
    e = _err("[experiment]\nformat = 99\n")
    assert e.line == 2
    # h above a quarter of the narrowest gap needs the opt-in
    e = _err("[experiment]\nkind = currents\n[scene]\ninclusion_radii = 0.3\n[walk]\nh = 0.2\n")
    assert e.line == 6
    parse("[experiment]\nkind = currents\n[walk]\nh = 0.2\nallow_coarse_h = true\n")


def test_reference_provider_rejected_for_random_media():
    e = _err("[experiment]\nkind = random_medium\n[medium]\nkappa_outer = uniform(1.3, 1.7)\n[vr]\nprovider = reference\n")
    assert e.line == 6


def test_overrides_and_hash():
    cfg = parse(PRESETS["currents"])
    c2 = with_overrides(cfg, experiment__seed=5, plan__M2=10)
    assert (c2.experiment.seed, c2.plan.M2) == (5, 10)
    assert cfg.plan.M2 != 10
    assert config_hash(with_overrides(cfg, experiment__workers=4, experiment__output="a.csv")) == config_hash(cfg)
    assert config_hash(c2) != config_hash(cfg)
    with pytest.raises((ValueError, TypeError, AttributeError)):
        with_overrides(cfg, plan__nothing=1)


def test_defaults_enforce_eps_rule():
    # the bare defaults pair h=0.004 with eps=1e-6 > h^3, which needs the explicit opt-in
    cfg = ExperimentConfig()
    with pytest.raises(ConfigError, match="allow_coarse_eps"):
        parse(serialize(cfg))
    ok = dataclasses.replace(cfg, walk=dataclasses.replace(cfg.walk, allow_coarse_eps=True))
    assert parse(serialize(ok)) == ok
