import pytest

from cmjtrees import families as F
from cmjtrees.config import (
    family_from_mapping,
    parse_config,
    parse_dislocation,
    parse_lifetime,
    parse_weights,
)
from cmjtrees.errors import ConfigError, InvalidParams

BASIC = """\
[family]
kind = m-ary-search
m = 3

[experiment]
regime = super
c = 1
n_values = 1e3, 1e4
replicates = 5
master_seed = 11
"""


def test_basic_config():
    cfg = parse_config(BASIC)
    assert cfg.family.label == F.preset("m-ary-search", m=3).label
    assert cfg.schedule.regime == "super" and cfg.schedule.c == 1.0
    assert cfg.n_values == (1e3, 1e4)
    assert cfg.replicates == 5 and cfg.master_seed == 11


def test_overrides():
    cfg = parse_config(BASIC, seed=99, outputs="out", parallelism=2)
    assert (cfg.master_seed, cfg.outputs, cfg.parallelism) == (99, "out", 2)


def test_weights_syntax():
    assert parse_weights("2, 1").prefix == (2.0, 1.0)
    w = parse_weights("1, ...")
    fam = F.make_family("GeneralPA", weights=w)
    assert F.laplace_mu(fam, 1.0) == pytest.approx(1.0)
    with pytest.raises((InvalidParams, ValueError)):
        parse_weights("")


def test_lifetime_and_dislocation_syntax():
    lt = parse_lifetime("0.5*exponential(1) + 0.5*deterministic(2)")
    assert isinstance(lt, F.MixtureLifetime)
    assert isinstance(parse_lifetime("exponential(2)"), F.ExponentialLifetime)
    assert isinstance(parse_dislocation("uniform"), F.UniformBinary)
    assert isinstance(parse_dislocation("deterministic(0.5, 0.5)"), F.Deterministic)
    with pytest.raises((InvalidParams, ValueError)):
        parse_lifetime("gamma(2)")


def test_family_from_mapping():
    fam = family_from_mapping({"kind": "GeneralPA", "beta": "1", "rho": "1"})
    assert fam.kind is F.Kind.GeneralPA
    fam = family_from_mapping({"kind": "Homogeneous", "b": "2", "lifetime": "exponential(1)"})
    assert fam.kind is F.Kind.Homogeneous
    with pytest.raises(InvalidParams):
        family_from_mapping({"kind": "Nope"})
    with pytest.raises(InvalidParams):
        family_from_mapping({"kind": "MarySearch", "m": "3", "ell": "1"})


@pytest.mark.parametrize(
    "text, line",
    [
        (BASIC.replace("c = 1", "c = 10"), 7),
        (BASIC.replace("m = 3", "m = 1"), 3),
        (BASIC.replace("replicates = 5", "replicates = x"), 9),
        (BASIC + "bogus = 1\n", 11),
    ],
)
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_missing_section():
    with pytest.raises(ConfigError):
        parse_config("[family]\nkind = rrt\n")
