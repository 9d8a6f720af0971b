"""Malthusian parameters, percolation schedules and limit predictions.

Everything here is deterministic. Roots of ``p * mu_hat(theta) = 1`` are
bracketed and then bisected with :func:`scipy.optimize.bisect`; ``mu_hat`` is
strictly decreasing, so the root is unique when it exists.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import bisect

from .errors import DomainError, InvalidParams, NoBracket, Subcritical
from .families import (
    FamilyModel,
    Kind,
    domain_lower_bound,
    expected_phi_hat,
    laplace_mu,
    laplace_mu_deriv,
    laplace_mu_sup,
)

__all__ = [
    "solve_malthusian",
    "solve_clonal_malthusian",
    "subcritical_threshold",
    "mu_bar",
    "martingale_limit_mean",
    "size_ratio_limit",
    "RegimeSchedule",
    "AnalysisReport",
    "predict",
    "lemma3_ratio",
]

XTOL = 1e-13


def _positive_root(family: FamilyModel, p: float, exc) -> float:
    """Unique ``theta > 0`` with ``p * mu_hat(theta) = 1``."""

    def f(theta):
        return p * laplace_mu(family, theta) - 1.0

    lo_bound, _ = domain_lower_bound(family)
    base = max(lo_bound, 0.0)
    lo = None
    for off in np.geomspace(1.0, 1e-15, 61):
        theta = base + float(off)
        if theta <= base:
            break
        try:
            if f(theta) > 0:
                lo = theta
                break
        except DomainError:
            break
    if lo is None:
        raise exc(f"{family.label}: {p:g} * mu_hat(theta) <= 1 for every theta > 0")
    hi, step = lo + 1.0, 1.0
    while f(hi) > 0:
        step *= 2.0
        hi = lo + step
        if step > 1e12:
            raise exc(f"{family.label}: no sign change of p * mu_hat - 1 below {hi:g}")
    if f(hi) == 0:
        return hi
    return float(bisect(f, lo, hi, xtol=XTOL, rtol=4 * np.finfo(float).eps, maxiter=1000))


def solve_malthusian(family: FamilyModel) -> float:
    """Malthusian parameter ``alpha > 0`` with ``mu_hat(alpha) = 1``."""
    return _positive_root(family, 1.0, NoBracket)


def subcritical_threshold(family: FamilyModel) -> float:
    """``p* = 1 / sup mu_hat``: for ``p <= p*`` the clonal process has no
    positive Malthusian parameter."""
    sup = laplace_mu_sup(family)
    return 0.0 if math.isinf(sup) else 1.0 / sup


def solve_clonal_malthusian(family: FamilyModel, p: float) -> float:
    """``alpha_p > 0`` with ``p * mu_hat(alpha_p) = 1``."""
    if not 0.0 < p <= 1.0:
        raise InvalidParams(f"p must lie in (0, 1], got {p}")
    if p == 1.0:
        return solve_malthusian(family)
    if p <= subcritical_threshold(family):
        raise Subcritical(
            f"{family.label}: p={p:g} is at or below the subcritical threshold {subcritical_threshold(family):g}"
        )
    return _positive_root(family, p, Subcritical)


def mu_bar(family: FamilyModel, alpha: float | None = None) -> float:
    """``int t exp(-alpha t) mu(dt) = -mu_hat'(alpha)``."""
    if alpha is None:
        alpha = solve_malthusian(family)
    return -laplace_mu_deriv(family, alpha)


def martingale_limit_mean(family: FamilyModel, p: float = 1.0) -> float:
    """Limit of ``E[exp(-alpha_p t) Z^phi(t)]`` for the clonal process:
    ``E[phi_hat(alpha_p)] / (alpha_p * p * mu_bar(alpha_p))``."""
    a = solve_clonal_malthusian(family, p)
    return expected_phi_hat(family, a) / (a * p * mu_bar(family, a))


def size_ratio_limit(family: FamilyModel) -> float:
    """Almost-sure limit of ``|T_n| / n``: ``1 / E[phi_hat(alpha)]``."""
    return 1.0 / expected_phi_hat(family, solve_malthusian(family))


_REGIME_ALIASES = {
    "weak": "weak",
    "weakly": "weak",
    "weaklysupercritical": "weak",
    "super": "super",
    "supercritical": "super",
    "strong": "strong",
    "strongly": "strong",
    "stronglysupercritical": "strong",
    "fixed": "fixed",
}


@dataclass(frozen=True)
class RegimeSchedule:
    """Representative percolation schedule ``n -> p_n``.

    ``weak``: ``1 - p_n = 1/sqrt(ln n)``; ``super``: ``c / ln n``;
    ``strong``: ``1/(ln n)^2``; ``fixed``: ``p_n = p`` for every ``n``.
    """

    regime: str
    c: float | None = None
    p: float | None = None

    def __post_init__(self):
        key = str(self.regime).replace("_", "").replace("-", "").replace(" ", "").lower()
        if key not in _REGIME_ALIASES:
            raise InvalidParams(f"unknown regime {self.regime!r}; expected weak, super, strong or fixed")
        object.__setattr__(self, "regime", _REGIME_ALIASES[key])
        if self.regime == "super":
            if self.c is None or not self.c > 0:
                raise InvalidParams("the super regime needs c > 0")
        if self.regime == "fixed":
            if self.p is None or not 0.0 < self.p <= 1.0:
                raise InvalidParams("the fixed regime needs p in (0, 1]")

    def p_of_n(self, n: float) -> float:
        if self.regime == "fixed":
            return float(self.p)
        if not n > 1:
            raise InvalidParams(f"schedule {self.regime} needs n > 1, got {n}")
        ln = math.log(n)
        if self.regime == "weak":
            return 1.0 - 1.0 / math.sqrt(ln)
        if self.regime == "super":
            return 1.0 - self.c / ln
        return 1.0 - 1.0 / ln**2

    def validate(self, n_values) -> None:
        """Raise :class:`InvalidParams` unless ``p_n`` is a valid probability at every ``n``."""
        for n in n_values:
            p = self.p_of_n(n)
            if not 0.0 < p <= 1.0 or (self.regime != "fixed" and p >= 1.0):
                raise InvalidParams(f"schedule {self.describe()} gives p_n = {p:.6g} at n = {n:g}, outside (0, 1)")

    def describe(self) -> str:
        if self.regime == "super":
            return f"super(c={self.c:g})"
        if self.regime == "fixed":
            return f"fixed(p={self.p:g})"
        return self.regime


@dataclass(frozen=True)
class AnalysisReport:
    family: str
    regime: str
    c: float | None
    n: float | None
    p: float
    alpha: float
    alpha_p: float
    mu_bar: float
    e_phi_hat: float
    p_star: float
    exponent: float
    giant_fraction: float
    predicted_frac: float

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        rows = [(k, v) for k, v in self.as_dict().items()]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {_fmt(v)}" for k, v in rows)

    def to_csv(self) -> str:
        d = self.as_dict()
        return ",".join(d) + "\n" + ",".join(_fmt(v) for v in d.values()) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def giant_fraction(regime: str, c: float | None, alpha: float, mbar: float, ephi: float) -> float:
    """Limit of ``|root cluster| / n`` under a regime."""
    if regime == "weak":
        return 0.0
    if regime == "super":
        return math.exp(-c / (alpha * mbar)) / ephi
    return 1.0 / ephi


def predict(family: FamilyModel, schedule: RegimeSchedule | None = None, n: float | None = None) -> AnalysisReport:
    """Deterministic predictions for ``family`` under ``schedule``.

    Without ``n`` the report describes the ``n -> infinity`` limit (``p = 1``
    for the vanishing schedules). ``predicted_frac`` is the finite-``n``
    value ``n**(exponent - 1) / E[phi_hat(alpha)]`` when ``n`` is given.
    """
    schedule = schedule or RegimeSchedule("fixed", p=1.0)
    alpha = solve_malthusian(family)
    mbar = mu_bar(family, alpha)
    ephi = expected_phi_hat(family, alpha)
    if n is not None:
        schedule.validate([n])
        p = schedule.p_of_n(n)
    else:
        p = schedule.p if schedule.regime == "fixed" else 1.0
    alpha_p = solve_clonal_malthusian(family, p)
    exponent = alpha_p / alpha
    if schedule.regime == "fixed":
        giant = 1.0 / ephi if p == 1.0 else 0.0
    else:
        giant = giant_fraction(schedule.regime, schedule.c, alpha, mbar, ephi)
    if n is not None:
        predicted = n ** (exponent - 1.0) / ephi
    else:
        predicted = giant
    return AnalysisReport(
        family=family.label,
        regime=schedule.describe(),
        c=schedule.c,
        n=None if n is None else float(n),
        p=p,
        alpha=alpha,
        alpha_p=alpha_p,
        mu_bar=mbar,
        e_phi_hat=ephi,
        p_star=subcritical_threshold(family),
        exponent=exponent,
        giant_fraction=giant,
        predicted_frac=predicted,
    )


def lemma3_ratio(family: FamilyModel, p: float, alpha: float | None = None) -> float:
    """``(alpha - alpha_p) * mu_bar(alpha) / (1 - p)``, which tends to 1 as ``p -> 1``."""
    if not 0.0 < p < 1.0:
        raise InvalidParams(f"p must lie in (0, 1), got {p}")
    if alpha is None:
        alpha = solve_malthusian(family)
    return (alpha - solve_clonal_malthusian(family, p)) * mu_bar(family, alpha) / (1.0 - p)


def homogeneous_mu_bar(family: FamilyModel, alpha: float | None = None, h: float = 1e-6) -> float:
    """``Psi'(alpha) / alpha`` by central differences (cross-check for splitting trees)."""
    from .families import psi

    if family.kind is not Kind.Homogeneous:
        raise InvalidParams("homogeneous_mu_bar needs a Homogeneous family")
    if alpha is None:
        alpha = solve_malthusian(family)
    step = h * max(1.0, abs(alpha))
    return (psi(family, alpha + step) - psi(family, alpha - step)) / (2 * step) / alpha
