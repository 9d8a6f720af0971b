import math

import numpy as np
import pytest

from cmjtrees import families as F
from cmjtrees.errors import GridError, InvalidParams
from cmjtrees.renewal import grid_size, mean_count

CATALOGUE = F.catalogue()


def test_rrt_mean_is_exponential():
    # Yule process: E[Z(t)] = e^t, and e^{p t} for the clonal part
    for p in (1.0, 0.5):
        tab = mean_count(F.preset("rrt"), p, 5.0, 1e-3)
        assert tab.at(5.0) == pytest.approx(math.exp(5 * p), rel=5e-3)


def test_bst_mean():
    # two Exp(1) births and phi = 1: Laplace inversion of
    # (1 + s) / (s (s + 1 - 2p)) gives (2p e^{(2p-1)t} - 1) / (2p - 1)
    p, t = 0.75, 3.0
    tab = mean_count(F.preset("bst"), p, t, 5e-4)
    exact = (2 * p * math.exp((2 * p - 1) * t) - 1) / (2 * p - 1)
    assert tab.at(t) == pytest.approx(exact, rel=5e-3)


def test_first_order_convergence():
    fam = F.preset("rrt")
    exact = math.exp(5.0)
    e1 = abs(mean_count(fam, 1.0, 5.0, 0.01).at(5.0) - exact)
    e2 = abs(mean_count(fam, 1.0, 5.0, 0.005).at(5.0) - exact)
    assert e1 / e2 == pytest.approx(2.0, rel=0.1)


@pytest.mark.parametrize("name", list(CATALOGUE))
def test_initial_value_and_monotone(name):
    fam = CATALOGUE[name]
    tab = mean_count(fam, 1.0, 2.0, 0.01)
    assert tab.mean[0] == pytest.approx(float(F.expected_phi(fam, np.array([0.0]))[0]))
    assert np.all(np.diff(tab.mean) >= -1e-12)
    assert len(tab.t) == 201


def test_percolation_lowers_mean():
    fam = F.preset("m-ary-search", m=3)
    a = mean_count(fam, 1.0, 4.0, 0.01).mean
    b = mean_count(fam, 0.8, 4.0, 0.01).mean
    assert np.all(b <= a + 1e-12)
    assert b[-1] < a[-1]


def test_grid_errors():
    assert grid_size(5.0, 0.01) == 500
    for T, h in [(5.0, 0.0), (5.0, -1.0), (0.0, 0.1), (1.0, 0.3), (1.0, math.inf)]:
        with pytest.raises(GridError):
            grid_size(T, h)
    with pytest.raises(GridError):
        mean_count(F.preset("rrt"), 1.0, 1.0, 0.3)
    with pytest.raises(InvalidParams):
        mean_count(F.preset("rrt"), 0.0, 1.0, 0.1)


def test_csv_output():
    text = mean_count(F.preset("rrt"), 1.0, 1.0, 0.1).to_csv(every=5)
    lines = text.strip().split("\n")
    assert lines[0] == "t,mean"
    assert len(lines) == 1 + 3


def test_csv_values_are_plain_numbers():
    lines = mean_count(F.preset("rrt"), 1.0, 0.2, 0.1).to_csv().strip().split("\n")[1:]
    for line in lines:
        t, m = line.split(",")
        float(t), float(m)
