"""Acceptance checks shared by ``cmjtrees verify`` and the test suite.

Each check returns a :class:`CriterionResult`. The ``fast`` tier holds the
deterministic checks (seconds); the ``full`` tier adds the Monte Carlo
studies, each with a fixed seed so that reruns are reproducible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import RegimeSchedule, lemma3_ratio, mu_bar, solve_malthusian
from .engine import simulate, simulate_fixed_time
from .experiments import ExperimentConfig, run_experiment, slope_fit
from .families import catalogue, expected_phi_hat, extinction_probability, preset
from .renewal import mean_count

__all__ = ["CriterionResult", "CRITERIA", "run_criteria", "format_result"]

SEED = 20261015
NOISE_FLOOR = 1e-9


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: list[str] = field(default_factory=list)
    seconds: float = 0.0


def _h(k: int) -> float:
    return sum(1.0 / i for i in range(1, k + 1))


def _close(details, label, got, want, tol):
    ok = abs(got - want) <= tol
    details.append(f"{label}: got {got:.12g}, want {want:.12g} (tol {tol:g}) {'ok' if ok else 'MISS'}")
    return ok


def criterion_1() -> CriterionResult:
    d: list[str] = []
    rows = [
        (preset("rrt"), 1.0, 1.0),
        (preset("bst"), 1.0, 0.5),
        (preset("binary-pyramid"), (math.sqrt(5) - 1) / 2, 4 * math.sqrt(5) / (1 + math.sqrt(5)) ** 2),
    ]
    for m in (2, 3, 4, 5):
        rows.append((preset("m-ary-increasing", m=m), m - 1.0, 1.0 / m))
    for beta, rho in ((1, 1.0), (1, 0.5), (0, 1.5), (0, 2.0), (-1, 3.0), (-1, 5.0)):
        rows.append((preset("linear-pa", beta=beta, rho=rho), beta + rho, 1.0 / rho))
    ok = True
    for fam, a_want, mb_want in rows:
        a = solve_malthusian(fam)
        ok &= _close(d, f"{fam.label} alpha", a, a_want, 1e-9)
        ok &= _close(d, f"{fam.label} mu_bar", mu_bar(fam, a), mb_want, 1e-9)
    return CriterionResult(1, "Malthusian constants of the preferential attachment catalogue", ok, d)


def criterion_2() -> CriterionResult:
    d: list[str] = []
    ok = True
    for m in (2, 3, 4):
        fam = preset("m-ary-search", m=m)
        ok &= _close(d, f"{fam.label} alpha", solve_malthusian(fam), 1.0, 1e-9)
        ok &= _close(d, f"{fam.label} mu_bar", mu_bar(fam, 1.0), _h(m) - 1, 1e-9)
        ok &= _close(d, f"{fam.label} E[phi_hat(1)]", expected_phi_hat(fam, 1.0), 2 * (_h(m) - 1), 1e-9)
    for ell in (1, 2):
        fam = preset("median-bst", ell=ell)
        gap = _h(2 * ell + 2) - _h(ell + 1)
        ok &= _close(d, f"{fam.label} alpha", solve_malthusian(fam), 1.0, 1e-9)
        ok &= _close(d, f"{fam.label} mu_bar", mu_bar(fam, 1.0), gap, 1e-9)
        ok &= _close(d, f"{fam.label} E[phi_hat(1)]", expected_phi_hat(fam, 1.0), (ell + 1) * gap, 1e-9)
    return CriterionResult(2, "search-tree constants", ok, d)


def criterion_3() -> CriterionResult:
    """Deviations below ``NOISE_FLOOR`` are root-finding noise and count as 0."""
    d: list[str] = []
    ok = True
    for fam in catalogue().values():
        alpha = solve_malthusian(fam)
        devs = [abs(lemma3_ratio(fam, 1 - q, alpha) - 1) for q in (1e-2, 1e-3, 1e-4)]
        eff = [x if x >= NOISE_FLOOR else 0.0 for x in devs]
        good = eff[0] >= eff[1] >= eff[2] and eff[2] < 1e-2
        ok &= good
        d.append(f"{fam.label}: |ratio-1| = " + ", ".join(f"{x:.3e}" for x in devs) + (" ok" if good else " MISS"))
    return CriterionResult(3, "ratio (alpha - alpha_p) mu_bar / (1 - p) tends to 1", ok, d)


def criterion_4() -> CriterionResult:
    d: list[str] = []
    ok = True
    fam = preset("rrt")
    for p in (1.0, 0.5):
        got = mean_count(fam, p, 5.0, 1e-3).at(5.0)
        rel = got / math.exp(5 * p) - 1
        good = abs(rel) < 5e-3
        ok &= good
        d.append(f"p={p}: E[Z(5)] = {got:.6f}, exp(5p) = {math.exp(5 * p):.6f}, rel err {rel:+.3e} {'ok' if good else 'MISS'}")
    return CriterionResult(4, "renewal mean against the Yule closed form", ok, d)


# ---------------------------------------------------------------------------
# statistical tier
# ---------------------------------------------------------------------------

_cache: dict = {}


def _study(name, n_values, schedule, replicates, seed, workers):
    key = (name, tuple(n_values), schedule, replicates, seed)
    if key not in _cache:
        fam = preset(*name) if isinstance(name, tuple) else preset(name)
        cfg = ExperimentConfig(fam, schedule, tuple(n_values), replicates, seed, parallelism=workers)
        _cache[key] = run_experiment(cfg)
    return _cache[key]


def _agg(report, n):
    return next(a for a in report.aggregates if a["n"] == n)


def _within(d, label, mean, se, target, k):
    ok = abs(mean - target) <= k * se
    d.append(f"{label}: mean {mean:.5f} +- {se:.5f}, target {target:.5f}, |z| = {abs(mean - target) / se:.2f} (limit {k}) {'ok' if ok else 'MISS'}")
    return ok


def criterion_5(workers: int = 1) -> CriterionResult:
    d: list[str] = []
    fixed = RegimeSchedule("fixed", p=1.0)
    a = _agg(_study(("m-ary-search",), [1e5], fixed, 200, SEED + 5, workers), 1e5)
    ok = _within(d, "m-ary-search-3 z_total/n", a["mean_ztotal_over_n"], a["se_ztotal"], 0.6, 3)
    good = abs(a["mean_ztotal_over_n"] - 0.6) <= 0.02
    d.append(f"m-ary-search-3 |mean - 0.6| = {abs(a['mean_ztotal_over_n'] - 0.6):.5f} (limit 0.02) {'ok' if good else 'MISS'}")
    ok &= good
    a = _agg(_study(("median-bst",), [1e5], fixed, 200, SEED + 51, workers), 1e5)
    ok &= _within(d, "median-bst-1 z_total/n", a["mean_ztotal_over_n"], a["se_ztotal"], 6 / 7, 3)
    return CriterionResult(5, "tree size over weight tends to 1/E[phi_hat(alpha)]", ok, d)


def criterion_6(workers: int = 1) -> CriterionResult:
    d: list[str] = []
    fixed = RegimeSchedule("fixed", p=1.0)
    ok = True
    for name, seed in ((("rrt",), SEED + 6), (("m-ary-search",), SEED + 5)):
        rep = _study(name, [1e5], fixed, 200, seed, workers)
        a = _agg(rep, 1e5)
        alpha = solve_malthusian(rep.config.family)
        ok &= _within(d, f"{rep.config.family.label} tau/ln n", a["mean_tau_over_logn"], a["se_tau"], 1 / alpha, 3)
    return CriterionResult(6, "stopping time over ln n tends to 1/alpha", ok, d)


def criterion_7(workers: int = 1) -> CriterionResult:
    d: list[str] = []
    ns = [1e4, 1e5, 1e6]
    rep = _study(("rrt",), ns, RegimeSchedule("super", c=1.0), 200, SEED + 7, workers)
    target = math.exp(-1)
    devs = []
    for n in ns:
        a = _agg(rep, n)
        devs.append(abs(a["mean_frac"] - target))
        d.append(f"n={n:.0e}: mean root/n {a['mean_frac']:.5f} +- {a['se_frac']:.5f}, |mean - 1/e| = {devs[-1]:.5f}")
    trend = devs[0] > devs[1] > devs[2]
    final = devs[-1] < 0.05
    d.append(f"deviation decreasing in n: {'ok' if trend else 'MISS'}; final deviation < 0.05: {'ok' if final else 'MISS'}")
    return CriterionResult(7, "root-cluster fraction in the super regime tends to exp(-1)", trend and final, d)


def criterion_8(workers: int = 1) -> CriterionResult:
    d: list[str] = []
    ok = True
    ns = [1e4, 1e5, 1e6]
    for name, want, seed in (("rrt", 0.9, SEED + 8), ("bst", 0.8, SEED + 81)):
        rep = _study((name,), ns, RegimeSchedule("fixed", p=0.9), 200, seed, workers)
        s = slope_fit(rep)
        good = abs(s - want) <= 0.02
        ok &= good
        d.append(f"{name}: slope {s:.5f}, want {want} +- 0.02 {'ok' if good else 'MISS'}")
    return CriterionResult(8, "log-log slope of the root cluster at fixed p", ok, d)


def criterion_9(workers: int = 1) -> CriterionResult:
    d: list[str] = []
    weak = _agg(_study(("rrt",), [1e6], RegimeSchedule("weak"), 100, SEED + 9, workers), 1e6)
    strong = _agg(_study(("rrt",), [1e6], RegimeSchedule("strong"), 100, SEED + 91, workers), 1e6)
    ok_w = weak["mean_frac"] < 0.15
    ok_s = strong["mean_frac"] > 0.85
    d.append(f"weak: mean root/n {weak['mean_frac']:.5f} +- {weak['se_frac']:.5f} (< 0.15) {'ok' if ok_w else 'MISS'}")
    d.append(f"strong: mean root/n {strong['mean_frac']:.5f} +- {strong['se_frac']:.5f} (> 0.85) {'ok' if ok_s else 'MISS'}")
    return CriterionResult(9, "weak and strong regimes separate", ok_w and ok_s, d)


def criterion_10(workers: int = 1) -> CriterionResult:
    d: list[str] = []
    fam = preset("rrt")
    t = 8.0
    rng = np.random.default_rng(SEED + 10)
    vals = np.array([simulate_fixed_time(fam, t, 1.0, rng).z_phi for _ in range(10_000)]) * math.exp(-t)
    mean, se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))
    ok = _within(d, "exp(-8) Z(8)", mean, se, 1.0, 4)
    return CriterionResult(10, "mean of the normalised population at a fixed time", ok, d)


def criterion_11(workers: int = 1) -> CriterionResult:
    d: list[str] = []
    fam = preset("splitting", b=2.0, rho=1.0)
    rng = np.random.default_rng(SEED + 11)
    died = np.array([simulate(fam, 100, 1.0, rng).retries >= 1 for _ in range(10_000)], dtype=float)
    mean, se = float(died.mean()), float(died.std(ddof=1) / math.sqrt(len(died)))
    ok = _within(d, "first attempt dies out", mean, se, extinction_probability(fam), 3)
    return CriterionResult(11, "extinction frequency of splitting trees", ok, d)


CRITERIA: dict[int, tuple[str, Callable[..., CriterionResult]]] = {
    1: ("fast", criterion_1),
    2: ("fast", criterion_2),
    3: ("fast", criterion_3),
    4: ("fast", criterion_4),
    5: ("full", criterion_5),
    6: ("full", criterion_6),
    7: ("full", criterion_7),
    8: ("full", criterion_8),
    9: ("full", criterion_9),
    10: ("full", criterion_10),
    11: ("full", criterion_11),
}


def run_one(number: int, workers: int = 1) -> CriterionResult:
    tier, fn = CRITERIA[number]
    start = time.perf_counter()
    res = fn() if tier == "fast" else fn(workers)
    res.seconds = time.perf_counter() - start
    return res


def run_criteria(tier: str = "fast", workers: int = 1, only=None, echo=None) -> list[CriterionResult]:
    """Run the criteria of ``tier`` (``fast`` or ``full``, which includes fast)."""
    if tier not in ("fast", "full"):
        raise ValueError(f"unknown tier {tier!r}; expected fast or full")
    out = []
    for number, (t, _) in CRITERIA.items():
        if tier == "fast" and t != "fast":
            continue
        if only is not None and number not in only:
            continue
        res = run_one(number, workers)
        if echo:
            echo(format_result(res))
        out.append(res)
    return out


def format_result(res: CriterionResult, verbose: bool = True) -> str:
    head = f"{'PASS' if res.passed else 'FAIL'}  criterion {res.number:>2}: {res.title} ({res.seconds:.1f}s)"
    if not verbose:
        return head
    return "\n".join([head, *("      " + line for line in res.details)])
