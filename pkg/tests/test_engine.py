import csv
import io
import math

import numpy as np
import pytest
from scipy.special import gammaln

from cmjtrees import families as F
from cmjtrees.engine import (
    SimOptions,
    export_tree,
    root_cluster_fraction,
    simulate,
    simulate_fixed_time,
)
from cmjtrees.errors import CapExceeded, InvalidParams, NonTerminating, NotRecorded
from cmjtrees.renewal import mean_count

CATALOGUE = F.catalogue()
FULL = SimOptions("full", record_clusters=True)


def test_single_node():
    out = simulate(F.preset("rrt"), 1, 1.0, np.random.default_rng(0))
    assert (out.z_total, out.root_cluster, out.tau) == (1, 1, 0.0)


def test_rrt_size_equals_weight():
    out = simulate(F.preset("rrt"), 1000, 1.0, np.random.default_rng(0))
    assert out.root_cluster == out.z_total == 1000
    assert root_cluster_fraction(out) == 1.0


def test_fragmentation_no_mutants_at_p1():
    out = simulate(F.preset("fragmentation"), 1e5, 1.0, np.random.default_rng(1))
    assert out.root_cluster == out.z_total
    assert out.n_mutants == 0


@pytest.mark.parametrize("name", list(CATALOGUE))
def test_p1_invariants(name):
    out = simulate(CATALOGUE[name], 2000, 1.0, np.random.default_rng(2), SimOptions(record_clusters=True))
    assert out.root_cluster == out.z_total
    assert out.n_mutants == 0
    assert out.z_phi >= 2000
    assert list(out.cluster_sizes) == [out.z_total]


@pytest.mark.parametrize("name", list(CATALOGUE))
def test_determinism(name):
    fam = CATALOGUE[name]
    a = simulate(fam, 3000, 0.8, np.random.default_rng(99), FULL)
    b = simulate(fam, 3000, 0.8, np.random.default_rng(99), FULL)
    assert (a.tau, a.z_total, a.z_phi, a.root_cluster, a.n_mutants, a.retries) == (
        b.tau, b.z_total, b.z_phi, b.root_cluster, b.n_mutants, b.retries,
    )
    assert export_tree(a) == export_tree(b)
    assert np.array_equal(a.cluster_sizes, b.cluster_sizes)


def test_seed_argument_forms():
    fam = F.preset("bst")
    a = simulate(fam, 500, 0.7, 123)
    b = simulate(fam, 500, 0.7, np.random.Generator(np.random.PCG64(123)))
    assert a.tau == b.tau and a.root_cluster == b.root_cluster
    c = simulate(fam, 500, 0.7, np.random.Generator(np.random.Philox(5)))
    d = simulate(fam, 500, 0.7, np.random.Generator(np.random.Philox(5)))
    assert c.tau == d.tau


@pytest.mark.parametrize("name", list(CATALOGUE))
def test_tree_structure_invariants(name):
    fam = CATALOGUE[name]
    out = simulate(fam, 3000, 0.85, np.random.default_rng(4), FULL)
    tr = out.tree
    assert len(tr) == out.z_total
    assert tr.parent[0] == -1 and tr.in_root_cluster[0]
    assert np.all(np.diff(tr.sigma) >= 0)
    par = tr.parent[1:]
    assert np.all(par < np.arange(1, len(tr)))
    assert np.all(tr.sigma[1:] >= tr.sigma[par])
    assert np.array_equal(tr.in_root_cluster[1:], tr.in_root_cluster[par] & tr.is_clone[1:])
    assert tr.in_root_cluster.sum() == out.root_cluster
    assert (~tr.is_clone[1:]).sum() == out.n_mutants
    assert len(out.cluster_sizes) == out.n_mutants + 1
    assert out.cluster_sizes.sum() == out.z_total
    assert out.cluster_sizes[0] == out.root_cluster
    # replaying the characteristic jumps gives the total weight
    assert tr.jump_delta.sum() == pytest.approx(out.z_phi, abs=1e-9)
    assert np.all(tr.jump_time <= out.tau)


def test_median_twins_never_split():
    fam = F.preset("median-bst", ell=1)
    rng = np.random.default_rng(5)
    for n in range(2, 200, 7):
        out = simulate(fam, n, 1.0, rng, FULL)
        counts = np.bincount(out.tree.parent[1:], minlength=out.z_total)
        assert set(np.unique(counts)) <= {0, 2}
        assert out.z_phi >= n


def test_streaming_matches_full():
    fam = F.preset("m-ary-search", m=4)
    a = simulate(fam, 5000, 0.9, np.random.default_rng(8))
    b = simulate(fam, 5000, 0.9, np.random.default_rng(8), FULL)
    assert (a.tau, a.z_total, a.root_cluster) == (b.tau, b.z_total, b.root_cluster)
    assert a.tree is None and a.cluster_sizes is None


def test_cap_exceeded():
    with pytest.raises(CapExceeded):
        simulate(F.preset("rrt"), 1000, 1.0, np.random.default_rng(0), SimOptions(cap=100))


def test_invalid_arguments():
    with pytest.raises(InvalidParams):
        simulate(F.preset("rrt"), 0, 1.0)
    with pytest.raises(InvalidParams):
        simulate(F.preset("rrt"), 10, 0.0)
    with pytest.raises(InvalidParams):
        simulate(F.preset("rrt"), 10, 1.5)
    with pytest.raises(InvalidParams):
        SimOptions("bogus")


def test_homogeneous_restarts_and_nonterminating():
    fam = F.preset("splitting", b=2.0, rho=1.0)
    rng = np.random.default_rng(6)
    retries = [simulate(fam, 50, 1.0, rng).retries for _ in range(300)]
    assert max(retries) >= 1
    with pytest.raises(NonTerminating):
        for _ in range(100):
            simulate(fam, 50, 1.0, rng, SimOptions(max_retries=0))


def test_homogeneous_first_attempt_extinction_rate():
    # the share of failed attempts estimates 1 - alpha/b = 1/2
    fam = F.preset("splitting", b=2.0, rho=1.0)
    rng = np.random.default_rng(21)
    r = np.array([simulate(fam, 200, 1.0, rng).retries for _ in range(20_000)])
    attempts = r.sum() + len(r)
    frac = r.sum() / attempts
    se = math.sqrt(frac * (1 - frac) / attempts)
    assert abs(frac - 0.5) < 4 * se


def test_export_rows():
    out = simulate(F.preset("rrt"), 1, 1.0, 0, SimOptions("full"))
    text = export_tree(out).decode()
    assert text == "child_id,parent_id,sigma,is_clone\n0,,0.0,1\n"
    out = simulate(F.preset("rrt"), 3, 1.0, 7, SimOptions("full"))
    rows = list(csv.DictReader(io.StringIO(export_tree(out).decode())))
    assert len(rows) == 3 == out.z_total
    sig = [float(r["sigma"]) for r in rows]
    assert sig == sorted(sig)
    with pytest.raises(NotRecorded):
        export_tree(simulate(F.preset("rrt"), 3, 1.0, 7))


def test_export_row_count_matches_z_total():
    out = simulate(F.preset("median-bst"), 500, 0.9, 3, SimOptions("full"))
    rows = export_tree(out).decode().strip().split("\n")
    assert len(rows) - 1 == out.z_total


# ---------------------------------------------------------------- statistical oracles


def test_rrt_stopping_time_mean_is_harmonic():
    # time to reach n individuals in a Yule process: sum of Exp(k), k < n
    n, reps = 1000, 3000
    rng = np.random.default_rng(31)
    tau = np.array([simulate(F.preset("rrt"), n, 1.0, rng).tau for _ in range(reps)])
    exact = sum(1.0 / k for k in range(1, n))
    assert abs(tau.mean() - exact) < 4 * tau.std(ddof=1) / math.sqrt(reps)


def test_rrt_root_cluster_mean_matches_exact_recursion():
    # E[C_n] = prod_{k<n} (1 + p/k) = Gamma(n+p) / (Gamma(n) Gamma(1+p))
    n, p, reps = 5000, 0.9, 800
    rng = np.random.default_rng(32)
    c = np.array([simulate(F.preset("rrt"), n, p, rng).root_cluster for _ in range(reps)], dtype=float)
    exact = math.exp(gammaln(n + p) - gammaln(n) - gammaln(1 + p))
    assert abs(c.mean() - exact) < 4 * c.std(ddof=1) / math.sqrt(reps)


def test_fixed_time_mode():
    out = simulate_fixed_time(F.preset("rrt"), 0.0, 1.0, 1)
    assert out.z_total == 1 and out.tau == 0.0
    out = simulate_fixed_time(F.preset("bst"), 3.0, 1.0, 2, SimOptions("full"))
    assert np.all(out.tree.sigma <= 3.0)


@pytest.mark.parametrize("name, t", [("rrt", 6.0), ("m-ary-search", 6.0)])
def test_fixed_time_mean_matches_renewal(name, t):
    fam = F.preset(name)
    rng = np.random.default_rng(41)
    z = np.array([simulate_fixed_time(fam, t, 1.0, rng).z_phi for _ in range(10_000)])
    oracle = mean_count(fam, 1.0, t, 1e-3).at(t)
    # the first-order grid bias is well below the Monte Carlo error here
    assert abs(z.mean() - oracle) < 4 * z.std(ddof=1) / math.sqrt(len(z))


def test_fixed_time_percolated_root_cluster_matches_renewal():
    fam = F.preset("bst")
    rng = np.random.default_rng(42)
    t, p = 5.0, 0.8
    root = np.array([simulate_fixed_time(fam, t, p, rng).root_cluster for _ in range(10_000)])
    oracle = mean_count(fam, p, t, 1e-3).at(t)
    assert abs(root.mean() - oracle) < 4 * root.std(ddof=1) / math.sqrt(len(root)) + 0.01 * oracle


def test_martingale_mean_at_fixed_time():
    rng = np.random.default_rng(43)
    t = 6.0
    w = np.array([simulate_fixed_time(F.preset("rrt"), t, 1.0, rng).z_total for _ in range(4000)]) * math.exp(-t)
    assert abs(w.mean() - 1.0) < 4 * w.std(ddof=1) / math.sqrt(len(w))
