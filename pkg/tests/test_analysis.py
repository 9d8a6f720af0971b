import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmjtrees import analysis as A
from cmjtrees import families as F
from cmjtrees.errors import InvalidParams, NoBracket, Subcritical

CATALOGUE = F.catalogue()


@pytest.mark.parametrize("name", list(CATALOGUE))
def test_malthusian_round_trip(name):
    fam = CATALOGUE[name]
    alpha = A.solve_malthusian(fam)
    assert alpha > 0
    assert abs(F.laplace_mu(fam, alpha) - 1) < 1e-12


def test_malthusian_examples():
    assert A.solve_malthusian(F.preset("rrt")) == pytest.approx(1.0, abs=1e-12)
    assert A.solve_malthusian(F.preset("binary-pyramid")) == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-12)
    assert A.solve_malthusian(F.preset("splitting", b=2.0, rho=1.0)) == pytest.approx(1.0, abs=1e-12)
    # b - rho for exponential lifetimes
    assert A.solve_malthusian(F.preset("splitting", b=3.0, rho=0.5)) == pytest.approx(2.5, abs=1e-12)


def test_no_bracket_for_single_child():
    with pytest.raises(NoBracket):
        A.solve_malthusian(F.make_family("GeneralPA", weights=[1.0]))


def test_clonal_examples():
    assert A.solve_clonal_malthusian(F.preset("rrt"), 0.9) == pytest.approx(0.9, abs=1e-12)
    assert A.solve_clonal_malthusian(F.preset("bst"), 0.8) == pytest.approx(0.6, abs=1e-12)
    for fam in CATALOGUE.values():
        assert A.solve_clonal_malthusian(fam, 1.0) == A.solve_malthusian(fam)


def test_clonal_round_trip_and_subcritical():
    fam = F.preset("median-bst", ell=2)
    a = A.solve_clonal_malthusian(fam, 0.7)
    assert abs(0.7 * F.laplace_mu(fam, a) - 1) < 1e-12
    assert A.subcritical_threshold(F.preset("bst")) == 0.5
    with pytest.raises(Subcritical):
        A.solve_clonal_malthusian(F.preset("bst"), 0.5)
    with pytest.raises(Subcritical):
        A.solve_clonal_malthusian(F.preset("m-ary-search", m=3), 0.3)
    with pytest.raises(InvalidParams):
        A.solve_clonal_malthusian(F.preset("rrt"), 0.0)


@pytest.mark.parametrize("name", list(CATALOGUE))
def test_alpha_p_increasing(name):
    fam = CATALOGUE[name]
    lo = A.subcritical_threshold(fam)
    ps = np.linspace(lo + (1 - lo) * 0.05, 1.0, 30)
    vals = [A.solve_clonal_malthusian(fam, p) for p in ps]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.55, 0.999), st.floats(0.55, 0.999))
def test_alpha_p_monotone_property(p, q):
    fam = F.preset("binary-pyramid")
    if p == q:
        return
    a, b = A.solve_clonal_malthusian(fam, p), A.solve_clonal_malthusian(fam, q)
    assert (a < b) == (p < q)


def test_mu_bar_examples():
    assert A.mu_bar(F.preset("m-ary-search", m=3)) == pytest.approx(5 / 6, abs=1e-12)
    assert A.mu_bar(F.preset("binary-pyramid")) == pytest.approx(4 * math.sqrt(5) / (1 + math.sqrt(5)) ** 2, abs=1e-12)
    fam = F.preset("splitting", b=2.0, rho=1.0)
    assert A.mu_bar(fam) == pytest.approx(0.5, abs=1e-12)
    assert A.homogeneous_mu_bar(fam) == pytest.approx(A.mu_bar(fam), rel=1e-8)


def test_homogeneous_mu_bar_cross_check_mixture():
    fam = F.make_family(
        "Homogeneous",
        b=2.5,
        lifetime=F.MixtureLifetime(((0.3, F.ExponentialLifetime(1.0)), (0.7, F.DeterministicLifetime(1.5)))),
    )
    assert A.homogeneous_mu_bar(fam) == pytest.approx(A.mu_bar(fam), rel=1e-7)


def test_rate_gap_ratio_examples():
    for p in (0.6, 0.9, 0.999):
        assert A.lemma3_ratio(F.preset("rrt"), p) == pytest.approx(1.0, abs=1e-9)
        assert A.lemma3_ratio(F.preset("bst"), p) == pytest.approx(1.0, abs=1e-9)
    assert A.lemma3_ratio(F.preset("binary-pyramid"), 1 - 1e-4) == pytest.approx(1.0, abs=0.01)


def test_rate_gap_ratio_taylor_bound():
    # second-order Taylor: ratio - 1 ~ -(1-p) * mu_hat''(alpha) / (2 mu_bar^2)
    fam = F.preset("binary-pyramid")
    alpha = A.solve_malthusian(fam)
    mb = A.mu_bar(fam, alpha)
    h = 1e-4
    second = (F.laplace_mu_deriv(fam, alpha + h) - F.laplace_mu_deriv(fam, alpha - h)) / (2 * h)
    for q in (1e-3, 1e-4):
        dev = A.lemma3_ratio(fam, 1 - q, alpha) - 1
        predicted = q * (1 - second / (2 * mb**2))
        assert dev == pytest.approx(predicted, rel=0.05)


def test_regime_schedules():
    n = 1e6
    ln = math.log(n)
    assert A.RegimeSchedule("weak").p_of_n(n) == pytest.approx(1 - 1 / math.sqrt(ln))
    assert A.RegimeSchedule("super", c=2.0).p_of_n(n) == pytest.approx(1 - 2 / ln)
    assert A.RegimeSchedule("strong").p_of_n(n) == pytest.approx(1 - 1 / ln**2)
    assert A.RegimeSchedule("fixed", p=0.9).p_of_n(n) == 0.9
    with pytest.raises(InvalidParams):
        A.RegimeSchedule("super")
    with pytest.raises(InvalidParams):
        A.RegimeSchedule("super", c=10.0).validate([100.0])
    with pytest.raises(InvalidParams):
        A.RegimeSchedule("bogus")
    assert A.RegimeSchedule("Supercritical", c=1.0).regime == "super"


def test_predict_examples():
    rrt = A.predict(F.preset("rrt"), A.RegimeSchedule("super", c=1.0))
    assert rrt.giant_fraction == pytest.approx(math.exp(-1), abs=1e-12)
    assert rrt.alpha == pytest.approx(1.0) and rrt.mu_bar == pytest.approx(1.0)
    for fam in CATALOGUE.values():
        rep = A.predict(fam, A.RegimeSchedule("strong"))
        assert rep.giant_fraction == pytest.approx(1 / rep.e_phi_hat)
        assert A.predict(fam, A.RegimeSchedule("weak")).giant_fraction == 0.0


def test_giant_fraction_uses_inverse_phi_hat():
    # At p = 1 the root cluster is the whole tree, whose size over n tends to
    # 1/E[phi_hat(alpha)]; the super-regime value must reduce to it as c -> 0.
    fam = F.preset("m-ary-search", m=3)
    rep = A.predict(fam, A.RegimeSchedule("super", c=1.0))
    assert rep.giant_fraction == pytest.approx(0.6 * math.exp(-6 / 5), rel=1e-12)
    assert A.size_ratio_limit(fam) == pytest.approx(0.6, rel=1e-12)


@pytest.mark.parametrize("name", list(CATALOGUE))
def test_predict_continuity_in_c(name):
    fam = CATALOGUE[name]
    strong = A.predict(fam, A.RegimeSchedule("strong")).giant_fraction
    assert A.predict(fam, A.RegimeSchedule("super", c=1e-9)).giant_fraction == pytest.approx(strong, rel=1e-6)
    assert A.predict(fam, A.RegimeSchedule("super", c=1e4)).giant_fraction < 1e-12


@pytest.mark.parametrize("name", list(CATALOGUE))
def test_exponent_first_order_expansion(name):
    fam = CATALOGUE[name]
    n, c = 1e12, 1.0
    rep = A.predict(fam, A.RegimeSchedule("super", c=c), n)
    assert abs((1 - rep.exponent) * math.log(n) * rep.alpha * rep.mu_bar / c - 1) < 0.05


def test_predict_finite_n_fields():
    rep = A.predict(F.preset("rrt"), A.RegimeSchedule("fixed", p=0.9), 1e4)
    assert rep.exponent == pytest.approx(0.9)
    assert rep.predicted_frac == pytest.approx(1e4 ** (-0.1))
    assert "alpha" in rep.to_text()
    header, row = rep.to_csv().strip().split("\n")
    assert len(header.split(",")) == len(row.split(","))


def test_martingale_limit_mean():
    assert A.martingale_limit_mean(F.preset("rrt")) == pytest.approx(1.0)
    fam = F.preset("m-ary-search", m=3)
    assert A.martingale_limit_mean(fam) == pytest.approx((5 / 3) / (5 / 6))
