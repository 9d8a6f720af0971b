"""Catalogue of Crump-Mode-Jagers tree families.

A :class:`FamilyModel` describes how a single individual reproduces (its
birth point process), how its characteristic (weight) evolves with age, and
carries the closed-form Laplace transforms needed by :mod:`cmjtrees.analysis`.

Five kinds are supported:

``GeneralPA``
    General preferential attachment: an individual with ``k`` children has
    its next child after an ``Exp(w_k)`` waiting time.
``MarySearch``
    m-ary search trees, weighted by the number of stored keys.
``MedianBST``
    Median-of-(2l+1) binary search trees, weighted by keys.
``Fragmentation``
    Fragmentation trees: children at ages ``-log V_i`` for a dislocation
    vector ``V`` on the simplex.
``Homogeneous``
    Splitting trees: constant birth rate ``b`` during a random lifetime.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy import integrate
from scipy.linalg import expm

from .errors import DomainError, InvalidParams

__all__ = [
    "Kind",
    "ExplicitWeights",
    "AffineWeights",
    "GeneralPAParams",
    "MarySearchParams",
    "MedianBSTParams",
    "UniformBinary",
    "Deterministic",
    "StickBreaking",
    "FragmentationParams",
    "ExponentialLifetime",
    "DeterministicLifetime",
    "MixtureLifetime",
    "HomogeneousParams",
    "FamilyModel",
    "AssumptionCheck",
    "AssumptionReport",
    "ReproductionCursor",
    "make_family",
    "preset",
    "PRESETS",
    "catalogue",
    "spawn_cursor",
    "laplace_mu",
    "laplace_mu_deriv",
    "laplace_mu_sup",
    "domain_lower_bound",
    "expected_phi_hat",
    "check_assumptions",
    "intensity_cdf",
    "expected_phi",
    "psi",
    "extinction_probability",
]

_SERIES_RTOL = 1e-16
_SERIES_MAX_TERMS = 10**6


class Kind(str, enum.Enum):
    GeneralPA = "GeneralPA"
    MarySearch = "MarySearch"
    MedianBST = "MedianBST"
    Fragmentation = "Fragmentation"
    Homogeneous = "Homogeneous"


# ---------------------------------------------------------------------------
# Parameter blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExplicitWeights:
    """Weights ``w_0..w_K`` followed by zeros (``tail="zero"``) or by
    ``w_K`` repeated forever (``tail="constant"``)."""

    prefix: tuple[float, ...]
    tail: str = "zero"

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(float(w) for w in self.prefix))
        if not self.prefix:
            raise InvalidParams("weights: prefix must contain at least w_0")
        if self.tail not in ("zero", "constant"):
            raise InvalidParams(f"weights: tail must be 'zero' or 'constant', got {self.tail!r}")
        if not all(math.isfinite(w) for w in self.prefix):
            raise InvalidParams("weights: all w_k must be finite")
        if self.prefix[0] <= 0:
            raise InvalidParams("weights: w_0 > 0 required")
        if any(w < 0 for w in self.prefix):
            raise InvalidParams("weights: all w_k >= 0 required")

    @property
    def support(self) -> tuple[float, ...]:
        """Weights up to (excluding) the first zero; births stop there."""
        out = []
        for w in self.prefix:
            if w == 0:
                break
            out.append(w)
        return tuple(out)

    @property
    def tail_rate(self) -> float:
        """Constant weight used after the prefix (0 for the zero tail)."""
        if self.tail == "constant" and 0 not in self.prefix:
            return self.prefix[-1]
        return 0.0

    def weight(self, k: int) -> float:
        if k < len(self.prefix):
            return 0.0 if 0 in self.prefix[: k + 1] else self.prefix[k]
        return self.tail_rate


@dataclass(frozen=True)
class AffineWeights:
    """Weights ``w_k = beta * k + rho`` with ``beta in {-1, 0, 1}``, ``rho > 0``.

    For ``beta = -1`` the weights reach zero at ``k = rho`` so ``rho`` must be
    an integer (otherwise some ``w_k`` would be negative).
    """

    beta: int
    rho: float

    def __post_init__(self):
        if self.beta not in (-1, 0, 1):
            raise InvalidParams(f"beta must be one of -1, 0, 1, got {self.beta!r}")
        if not (math.isfinite(self.rho) and self.rho > 0):
            raise InvalidParams(f"rho > 0 required, got {self.rho!r}")
        if self.beta == -1 and float(self.rho) != int(self.rho):
            raise InvalidParams("beta = -1 requires an integer rho (weights must stay >= 0)")
        object.__setattr__(self, "beta", int(self.beta))
        object.__setattr__(self, "rho", float(self.rho))

    def weight(self, k: int) -> float:
        return max(self.beta * k + self.rho, 0.0)


@dataclass(frozen=True)
class GeneralPAParams:
    weights: ExplicitWeights | AffineWeights

    def __post_init__(self):
        if not isinstance(self.weights, (ExplicitWeights, AffineWeights)):
            raise InvalidParams("weights must be ExplicitWeights or AffineWeights")


@dataclass(frozen=True)
class MarySearchParams:
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise InvalidParams(f"m >= 2 (integer) required, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))


@dataclass(frozen=True)
class MedianBSTParams:
    ell: int

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise InvalidParams(f"ell >= 1 (integer) required, got {self.ell!r}")
        object.__setattr__(self, "ell", int(self.ell))


@dataclass(frozen=True)
class UniformBinary:
    """``V = (U, 1 - U)`` with ``U`` uniform on (0, 1)."""

    @property
    def b(self) -> int:
        return 2


@dataclass(frozen=True)
class Deterministic:
    """A fixed split ``V = (v_1, ..., v_b)``."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 2:
            raise InvalidParams("dislocation: at least two fragments required")
        if any(not (0.0 <= v < 1.0) for v in vals):
            raise InvalidParams("dislocation: 0 <= V_i < 1 required")
        if abs(sum(vals) - 1.0) > 1e-12:
            raise InvalidParams(f"dislocation: sum V_i = 1 required, got {sum(vals)!r}")

    @property
    def b(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class StickBreaking:
    """Dirichlet-like dislocation built from quantile tables.

    Break ``j`` (``j = 1..b-1``) draws ``B_j = Q_j(U)`` where ``Q_j`` linearly
    interpolates ``tables[j-1]`` on the uniform grid ``0, 1/K, ..., 1``. Then
    ``V_i = B_i * prod_{j<i} (1 - B_j)`` for ``i < b`` and ``V_b`` takes the
    remaining mass. A single table is reused for every break. With tables of
    ``Beta(1, b - j)`` quantiles this is the uniform Dirichlet law.
    """

    tables: tuple[tuple[float, ...], ...]
    b: int = 2

    def __post_init__(self):
        tabs = tuple(tuple(float(q) for q in t) for t in self.tables)
        if len(tabs) == 1 and self.b > 2:
            tabs = tabs * (self.b - 1)
        object.__setattr__(self, "tables", tabs)
        if self.b < 2 or len(tabs) != self.b - 1:
            raise InvalidParams("dislocation: need one quantile table (or b-1 tables), b >= 2")
        width = len(tabs[0])
        for t in tabs:
            if len(t) != width or width < 2:
                raise InvalidParams("dislocation: quantile tables must share a length >= 2")
            arr = np.asarray(t)
            if np.any(arr < 0) or np.any(arr > 1) or np.any(np.diff(arr) < 0):
                raise InvalidParams("dislocation: quantile table must be nondecreasing in [0, 1]")
            # V_i in {0, 1} may only happen on a null set
            if arr[1] <= 0 or arr[-2] >= 1:
                raise InvalidParams("dislocation: quantile table puts positive mass on 0 or 1")

    @property
    def table_array(self) -> np.ndarray:
        return np.asarray(self.tables, dtype=np.float64)


Dislocation = UniformBinary | Deterministic | StickBreaking


@dataclass(frozen=True)
class FragmentationParams:
    dislocation: Dislocation
    b: int | None = None

    def __post_init__(self):
        if not isinstance(self.dislocation, (UniformBinary, Deterministic, StickBreaking)):
            raise InvalidParams("dislocation must be UniformBinary, Deterministic or StickBreaking")
        if self.b is None:
            object.__setattr__(self, "b", self.dislocation.b)
        if self.b < 2:
            raise InvalidParams("b >= 2 required")
        if self.b != self.dislocation.b:
            raise InvalidParams(f"b = {self.b} does not match the dislocation ({self.dislocation.b} parts)")


@dataclass(frozen=True)
class ExponentialLifetime:
    rate: float

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise InvalidParams(f"lifetime: exponential rate > 0 required, got {self.rate!r}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class DeterministicLifetime:
    duration: float

    def __post_init__(self):
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise InvalidParams(f"lifetime: finite duration > 0 required, got {self.duration!r}")

    @property
    def mean(self) -> float:
        return self.duration


@dataclass(frozen=True)
class MixtureLifetime:
    """Finite mixture of exponential and deterministic lifetimes."""

    components: tuple[tuple[float, ExponentialLifetime | DeterministicLifetime], ...]

    def __post_init__(self):
        comps = tuple((float(w), law) for w, law in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise InvalidParams("lifetime: empty mixture")
        for w, law in comps:
            if not (w > 0):
                raise InvalidParams("lifetime: mixture weights must be positive")
            if not isinstance(law, (ExponentialLifetime, DeterministicLifetime)):
                raise InvalidParams("lifetime: mixture components must be exponential or deterministic")
        total = sum(w for w, _ in comps)
        if abs(total - 1.0) > 1e-12:
            raise InvalidParams(f"lifetime: mixture weights must sum to 1, got {total!r}")

    @property
    def mean(self) -> float:
        return sum(w * law.mean for w, law in self.components)


Lifetime = ExponentialLifetime | DeterministicLifetime | MixtureLifetime


def _lifetime_components(law: Lifetime):
    if isinstance(law, MixtureLifetime):
        return law.components
    return ((1.0, law),)


@dataclass(frozen=True)
class HomogeneousParams:
    """Splitting tree: birth rate ``b`` while alive, lifetime law ``Lambda / b``."""

    b: float
    lifetime: Lifetime

    def __post_init__(self):
        if not (math.isfinite(self.b) and self.b > 0):
            raise InvalidParams(f"b > 0 required, got {self.b!r}")
        if not isinstance(self.lifetime, (ExponentialLifetime, DeterministicLifetime, MixtureLifetime)):
            raise InvalidParams("lifetime must be exponential, deterministic or a mixture")
        mean_offspring = self.b * self.lifetime.mean
        if not (1.0 < mean_offspring < math.inf):
            raise InvalidParams(
                f"(E3) violated: m = b * E[lifetime] = {mean_offspring!r} must satisfy 1 < m < inf"
            )

    @property
    def m(self) -> float:
        return self.b * self.lifetime.mean


_PARAM_TYPES = {
    Kind.GeneralPA: GeneralPAParams,
    Kind.MarySearch: MarySearchParams,
    Kind.MedianBST: MedianBSTParams,
    Kind.Fragmentation: FragmentationParams,
    Kind.Homogeneous: HomogeneousParams,
}


@dataclass(frozen=True)
class FamilyModel:
    kind: Kind
    params: GeneralPAParams | MarySearchParams | MedianBSTParams | FragmentationParams | HomogeneousParams
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not isinstance(self.params, _PARAM_TYPES[self.kind]):
            raise InvalidParams(
                f"{self.kind.value} needs {_PARAM_TYPES[self.kind].__name__}, got {type(self.params).__name__}"
            )

    @property
    def label(self) -> str:
        return self.name or self.kind.value

    def describe(self) -> str:
        """Compact one-line parameter description (used in CSV output)."""
        p = self.params
        if self.kind is Kind.GeneralPA:
            w = p.weights
            if isinstance(w, AffineWeights):
                return f"beta={w.beta};rho={w.rho:g}"
            ws = "|".join(f"{x:g}" for x in w.prefix)
            return f"weights={ws};tail={w.tail}"
        if self.kind is Kind.MarySearch:
            return f"m={p.m}"
        if self.kind is Kind.MedianBST:
            return f"ell={p.ell}"
        if self.kind is Kind.Fragmentation:
            d = p.dislocation
            if isinstance(d, UniformBinary):
                return "b=2;dislocation=uniform"
            if isinstance(d, Deterministic):
                return f"b={p.b};dislocation=deterministic:" + "|".join(f"{v:g}" for v in d.values)
            return f"b={p.b};dislocation=table:{len(d.tables[0])}"
        parts = []
        for w, law in _lifetime_components(p.lifetime):
            if isinstance(law, ExponentialLifetime):
                parts.append(f"{w:g}*exp:{law.rate:g}")
            else:
                parts.append(f"{w:g}*det:{law.duration:g}")
        return f"b={p.b:g};lifetime=" + "+".join(parts)

    @property
    def has_unit_characteristic(self) -> bool:
        return self.kind not in (Kind.MarySearch, Kind.MedianBST)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def make_family(kind, params=None, name: str = "", **kwargs) -> FamilyModel:
    """Build a validated :class:`FamilyModel`.

    ``params`` may be the kind's parameter dataclass, or omitted in favour of
    keyword arguments using the config key names (``weights``, ``beta``,
    ``rho``, ``m``, ``ell``, ``b``, ``dislocation``, ``lifetime``).

    >>> make_family("MarySearch", m=3).params.m
    3
    """
    try:
        kind = Kind(kind)
    except ValueError:
        raise InvalidParams(f"unknown family kind {kind!r}; expected one of {[k.value for k in Kind]}") from None
    if params is None:
        params = _params_from_keys(kind, kwargs)
    elif kwargs:
        raise InvalidParams("pass either a params object or keyword parameters, not both")
    elif isinstance(params, Mapping):
        params = _params_from_keys(kind, dict(params))
    return FamilyModel(kind, params, name)


def _params_from_keys(kind: Kind, keys: dict):
    def take(name, default=None, required=True):
        if name in keys:
            return keys.pop(name)
        if required and default is None:
            raise InvalidParams(f"{kind.value}: missing key {name!r}")
        return default

    if kind is Kind.GeneralPA:
        if "weights" in keys:
            w = take("weights")
            if not isinstance(w, (ExplicitWeights, AffineWeights)):
                w = ExplicitWeights(tuple(w), keys.pop("tail", "zero"))
        else:
            w = AffineWeights(int(take("beta")), float(take("rho")))
        params = GeneralPAParams(w)
    elif kind is Kind.MarySearch:
        params = MarySearchParams(take("m"))
    elif kind is Kind.MedianBST:
        params = MedianBSTParams(take("ell"))
    elif kind is Kind.Fragmentation:
        d = take("dislocation", UniformBinary(), required=False)
        params = FragmentationParams(d, keys.pop("b", None))
    else:
        params = HomogeneousParams(float(take("b")), take("lifetime"))
    if keys:
        raise InvalidParams(f"{kind.value}: unexpected keys {sorted(keys)}")
    return params


def _pa(weights, name):
    return FamilyModel(Kind.GeneralPA, GeneralPAParams(weights), name)


def preset(name: str, **overrides) -> FamilyModel:
    """Named family from the catalogue; ``overrides`` set ``m``, ``ell``,
    ``beta``, ``rho``, ``b``.

    Known names: ``rrt``, ``bst``, ``m-ary-increasing``, ``linear-pa``,
    ``binary-pyramid``, ``m-ary-search``, ``median-bst``,
    ``fragmentation``, ``splitting``.
    """
    key = name.lower()
    if key not in PRESETS:
        raise InvalidParams(f"unknown family {name!r}; expected one of {sorted(PRESETS)}")
    return PRESETS[key](**overrides)


def _with(allowed, fn):
    def build(**kw):
        bad = set(kw) - set(allowed)
        if bad:
            raise InvalidParams(f"unexpected parameters {sorted(bad)}; allowed: {sorted(allowed)}")
        return fn(**kw)

    return build


PRESETS = {
    "rrt": _with((), lambda: _pa(ExplicitWeights((1.0,), "constant"), "rrt")),
    "bst": _with((), lambda: _pa(ExplicitWeights((2.0, 1.0), "zero"), "bst")),
    "m-ary-increasing": _with(
        ("m",),
        lambda m=3: _pa(ExplicitWeights(tuple(float(m - k) for k in range(int(m))), "zero"), f"m-ary-increasing-{m}"),
    ),
    "linear-pa": _with(
        ("beta", "rho"),
        lambda beta=1, rho=1.0: _pa(AffineWeights(int(beta), float(rho)), f"linear-pa-{beta}-{rho:g}"),
    ),
    "binary-pyramid": _with((), lambda: _pa(ExplicitWeights((1.0, 1.0), "zero"), "binary-pyramid")),
    "m-ary-search": _with(
        ("m",), lambda m=3: FamilyModel(Kind.MarySearch, MarySearchParams(m), f"m-ary-search-{m}")
    ),
    "median-bst": _with(
        ("ell",), lambda ell=1: FamilyModel(Kind.MedianBST, MedianBSTParams(ell), f"median-bst-{ell}")
    ),
    "fragmentation": _with(
        (), lambda: FamilyModel(Kind.Fragmentation, FragmentationParams(UniformBinary()), "fragmentation")
    ),
    "splitting": _with(
        ("b", "rho"),
        lambda b=2.0, rho=1.0: FamilyModel(
            Kind.Homogeneous, HomogeneousParams(float(b), ExponentialLifetime(float(rho))), f"splitting-{b:g}-{rho:g}"
        ),
    ),
}


def catalogue() -> dict[str, FamilyModel]:
    """One representative of every catalogue family, keyed by name."""
    out = {}
    for fam in (
        preset("rrt"),
        preset("bst"),
        preset("m-ary-increasing", m=3),
        preset("linear-pa", beta=1, rho=1.0),
        preset("linear-pa", beta=0, rho=2.0),
        preset("binary-pyramid"),
        preset("m-ary-search", m=3),
        preset("median-bst", ell=1),
        preset("fragmentation"),
        preset("splitting", b=2.0, rho=1.0),
    ):
        out[fam.name] = fam
    return out


# ---------------------------------------------------------------------------
# Laplace transforms
# ---------------------------------------------------------------------------


def domain_lower_bound(family: FamilyModel) -> tuple[float, bool]:
    """Infimum of the transform's domain and whether it is included."""
    k, p = family.kind, family.params
    if k is Kind.GeneralPA:
        w = p.weights
        if isinstance(w, AffineWeights):
            return float(w.beta), False
        lo = -min(w.support)
        if w.tail_rate > 0:
            lo = max(lo, 0.0)
        return lo, False
    if k is Kind.MarySearch:
        return -1.0, False
    if k is Kind.MedianBST:
        return -(p.ell + 1.0), False
    if k is Kind.Fragmentation:
        return 0.0, True
    return 0.0, False


def _check_domain(family, theta):
    theta = float(theta)
    lo, closed = domain_lower_bound(family)
    if not math.isfinite(theta) or theta < lo or (theta == lo and not closed):
        raise DomainError(f"{family.label}: theta={theta!r} outside the domain (> {lo}{' incl.' if closed else ''})")
    return theta


def _pa_series(w: ExplicitWeights, theta: float, deriv: bool):
    """Sum of prod_{i<k} w_i/(w_i+theta) (and its theta-derivative)."""
    term, dlog = 1.0, 0.0
    total, dtotal = 0.0, 0.0
    for wi in w.support:
        term *= wi / (wi + theta)
        dlog += 1.0 / (wi + theta)
        total += term
        dtotal -= term * dlog
    c = w.tail_rate
    if c > 0:
        # geometric tail: sum_{j>=1} term * (c/(c+theta))^j = term * c / theta
        total += term * c / theta
        dtotal += -term * dlog * c / theta - term * c / theta**2
    return dtotal if deriv else total


def _pa_series_bruteforce(w: ExplicitWeights, theta: float) -> float:
    """Term-by-term evaluation of the general series (reference path)."""
    total, term, k = 0.0, 1.0, 0
    while k < _SERIES_MAX_TERMS:
        wk = w.weight(k)
        if wk == 0:
            return total
        term *= wk / (wk + theta)
        total += term
        k += 1
        if term < _SERIES_RTOL * total:
            return total
    raise DomainError(f"series did not converge within {_SERIES_MAX_TERMS} terms at theta={theta!r}")


def _beta_moment(a: np.ndarray, b: np.ndarray, theta: float, log: bool):
    """Exact integral of x**theta (times log x if ``log``) for x linear on a
    unit-width segment from ``a`` to ``b``, vectorised over segments."""
    tp1 = theta + 1.0

    def prim(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            xp = np.where(x > 0, x**tp1, 0.0)
            if not log:
                return xp / tp1
            lx = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), 0.0)
            return xp * (lx / tp1 - 1.0 / tp1**2)

    diff = b - a
    flat = np.abs(diff) < 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        sloped = (prim(b) - prim(a)) / np.where(flat, 1.0, diff)
        mid = 0.5 * (a + b)
        if log:
            flat_val = np.where(mid > 0, mid**theta * np.log(np.where(mid > 0, mid, 1.0)), 0.0)
        else:
            flat_val = np.where(mid > 0, mid**theta, 0.0 if theta > 0 else 1.0)
    return np.where(flat, flat_val, sloped)


def _table_moments(table, theta: float):
    """E[B^theta], E[(1-B)^theta], E[B^theta log B], E[(1-B)^theta log(1-B)]
    for ``B = Q(U)`` with ``Q`` the piecewise-linear quantile table."""
    q = np.asarray(table, dtype=np.float64)
    du = 1.0 / (len(q) - 1)
    a, b = q[:-1], q[1:]
    m1 = du * _beta_moment(a, b, theta, False).sum()
    m2 = du * _beta_moment(1 - a, 1 - b, theta, False).sum()
    d1 = du * _beta_moment(a, b, theta, True).sum()
    d2 = du * _beta_moment(1 - a, 1 - b, theta, True).sum()
    return m1, m2, d1, d2


def _stick_transform(d: StickBreaking, theta: float, deriv: bool) -> float:
    # E[V_i^t] = E[B_i^t] prod_{j<i} E[(1-B_j)^t];  V_b = prod_{j<b} (1 - B_j)
    mom = [_table_moments(t, theta) for t in d.tables]
    total, dtotal = 0.0, 0.0
    carry, dcarry = 1.0, 0.0  # prod of E[(1-B_j)^t] and its derivative
    for m1, m2, d1, d2 in mom:
        total += m1 * carry
        dtotal += d1 * carry + m1 * dcarry
        dcarry = dcarry * m2 + carry * d2
        carry *= m2
    total += carry
    dtotal += dcarry
    return dtotal if deriv else total


def _homog_transform(p: HomogeneousParams, theta: float, deriv: bool) -> float:
    total = 0.0
    for w, law in _lifetime_components(p.lifetime):
        if isinstance(law, ExponentialLifetime):
            r = law.rate
            val = -1.0 / (theta + r) ** 2 if deriv else 1.0 / (theta + r)
        else:
            d = law.duration
            one_minus = -math.expm1(-theta * d)
            if deriv:
                val = (d * math.exp(-theta * d) * theta - one_minus) / theta**2
            else:
                val = one_minus / theta
        total += w * val
    return p.b * total


def _transform(family: FamilyModel, theta: float, deriv: bool) -> float:
    k, p = family.kind, family.params
    if k is Kind.GeneralPA:
        w = p.weights
        if isinstance(w, AffineWeights):
            x = theta - w.beta
            return -w.rho / x**2 if deriv else w.rho / x
        return _pa_series(w, theta, deriv)
    if k is Kind.MarySearch:
        m = p.m
        val = math.factorial(m)
        for i in range(1, m):
            val /= i + theta
        if deriv:
            return -val * sum(1.0 / (i + theta) for i in range(1, m))
        return val
    if k is Kind.MedianBST:
        ell = p.ell
        val = 2.0
        for i in range(1, ell + 2):
            val *= (ell + i) / (ell + i + theta)
        if deriv:
            return -val * sum(1.0 / (ell + i + theta) for i in range(1, ell + 2))
        return val
    if k is Kind.Fragmentation:
        d = p.dislocation
        if isinstance(d, UniformBinary):
            return -2.0 / (1.0 + theta) ** 2 if deriv else 2.0 / (1.0 + theta)
        if isinstance(d, Deterministic):
            vals = [v for v in d.values if v > 0]
            if deriv:
                return sum(v**theta * math.log(v) for v in vals)
            return sum(v**theta for v in vals)
        return _stick_transform(d, theta, deriv)
    return _homog_transform(p, theta, deriv)


def laplace_mu(family: FamilyModel, theta: float) -> float:
    """Laplace transform of the reproduction intensity,
    ``mu_hat(theta) = E[sum_i exp(-theta * xi_i)]``.

    Raises :class:`DomainError` outside the domain of finiteness.
    """
    theta = _check_domain(family, theta)
    if family.kind is Kind.Homogeneous and theta == 0:
        raise DomainError("Homogeneous transform needs theta > 0")
    return _transform(family, theta, False)


def laplace_mu_deriv(family: FamilyModel, theta: float) -> float:
    """Derivative ``mu_hat'(theta) = -int t exp(-theta t) mu(dt)``."""
    theta = _check_domain(family, theta)
    lo, _ = domain_lower_bound(family)
    if theta == lo or (family.kind is Kind.Homogeneous and theta == 0):
        raise DomainError("derivative needs theta in the interior of the domain")
    return _transform(family, theta, True)


def laplace_mu_sup(family: FamilyModel) -> float:
    """``sup_{theta > 0} mu_hat(theta)``, i.e. the limit at ``0+`` (or at the
    domain boundary when that is positive). Infinite when the mean offspring
    number is infinite."""
    k, p = family.kind, family.params
    if k is Kind.GeneralPA:
        w = p.weights
        if isinstance(w, AffineWeights):
            return float(w.rho) if w.beta == -1 else math.inf
        return math.inf if w.tail_rate > 0 else float(len(w.support))
    if k is Kind.MarySearch:
        return float(p.m)
    if k is Kind.MedianBST:
        return 2.0
    if k is Kind.Fragmentation:
        return _transform(family, 0.0, False)
    return p.m


# ---------------------------------------------------------------------------
# Characteristic
# ---------------------------------------------------------------------------


def expected_phi_hat(family: FamilyModel, theta: float) -> float:
    """``E[phi_hat(theta)]`` with ``phi_hat(theta) = theta int exp(-theta t) phi(t) dt``.

    For a step characteristic this is ``phi(0) + sum_j delta_j E[exp(-theta T_j)]``
    over its jumps ``(T_j, delta_j)``.
    """
    theta = float(theta)
    if not theta > 0:
        raise DomainError(f"expected_phi_hat needs theta > 0, got {theta!r}")
    k, p = family.kind, family.params
    if k is Kind.MarySearch:
        total, prod = 1.0, 1.0
        for i in range(2, p.m):
            prod *= i / (i + theta)
            total += prod
        return total
    if k is Kind.MedianBST:
        ell = p.ell
        total, prod = float(ell), 1.0
        for i in range(1, ell + 2):
            prod *= (ell + i) / (ell + i + theta)
            total += prod if i <= ell else (1 - 2 * ell) * prod
        return total
    return 1.0


def expected_phi(family: FamilyModel, t) -> np.ndarray:
    """``E[phi(t)]`` on an array of ages."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    k, p = family.kind, family.params
    if k is Kind.MarySearch:
        rates = [float(i) for i in range(2, p.m)]
        cdf = _phase_cdfs(rates, t)
        return 1.0 + cdf.sum(axis=0)
    if k is Kind.MedianBST:
        ell = p.ell
        cdf = _phase_cdfs([float(ell + i) for i in range(1, ell + 2)], t)
        return ell + cdf[:ell].sum(axis=0) + (1 - 2 * ell) * cdf[ell]
    return np.ones_like(t)


# ---------------------------------------------------------------------------
# Intensity measure on [0, t]
# ---------------------------------------------------------------------------


def _phase_cdfs(rates: Sequence[float], t: np.ndarray) -> np.ndarray:
    """Row ``j``: P(Y_1 + ... + Y_{j+1} <= t) for independent ``Y_i ~ Exp(rates[i])``."""
    k = len(rates)
    if k == 0:
        return np.zeros((0, len(t)))
    q = np.zeros((k + 1, k + 1))
    for i, r in enumerate(rates):
        q[i, i] = -r
        q[i, i + 1] = r
    out = np.empty((k, len(t)))
    for col, tt in enumerate(t):
        if tt <= 0:
            out[:, col] = 0.0
            continue
        row = expm(q * tt)[0]
        # P(at least j+1 phases completed) = sum of occupation of states > j
        out[:, col] = np.cumsum(row[::-1])[::-1][1:]
    return np.clip(out, 0.0, 1.0)


def _pa_mean_births(w: ExplicitWeights, t: np.ndarray) -> np.ndarray:
    # states 0..L-1 tracked explicitly; m' = sum_{k<L} (w_k - c) P_k + c
    sup = w.support
    c = w.tail_rate
    L = len(sup)
    dim = L + 2
    a = np.zeros((dim, dim))
    for i, wi in enumerate(sup):
        a[i, i] = -wi
        if i + 1 < L:
            a[i + 1, i] = wi
        a[L, i] = wi - c
    a[L, L + 1] = c
    x0 = np.zeros(dim)
    x0[0] = 1.0
    x0[L + 1] = 1.0
    return np.array([(expm(a * tt) @ x0)[L] if tt > 0 else 0.0 for tt in t])


def intensity_cdf(family: FamilyModel, t) -> np.ndarray:
    """``mu([0, t]) = E[number of children born by age t]`` on an array of ages."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    tt = np.maximum(t, 0.0)
    k, p = family.kind, family.params
    if k is Kind.GeneralPA:
        w = p.weights
        if isinstance(w, AffineWeights):
            if w.beta == 0:
                return w.rho * tt
            return w.rho * np.expm1(w.beta * tt) / w.beta
        return _pa_mean_births(w, tt)
    if k is Kind.MarySearch:
        rates = [float(i) for i in range(2, p.m)] + [1.0]
        return p.m * _phase_cdfs(rates, tt)[-1]
    if k is Kind.MedianBST:
        ell = p.ell
        return 2.0 * _phase_cdfs([float(ell + i) for i in range(1, ell + 2)], tt)[-1]
    if k is Kind.Fragmentation:
        d = p.dislocation
        x = np.exp(-tt)  # child i born by age t  <=>  V_i >= exp(-t)
        if isinstance(d, UniformBinary):
            return 2.0 * (1.0 - x)
        if isinstance(d, Deterministic):
            return sum((v > 0) * (v >= x) for v in d.values).astype(np.float64)
        return _stick_intensity(d, x)
    out = np.zeros_like(tt)
    for wgt, law in _lifetime_components(p.lifetime):
        if isinstance(law, ExponentialLifetime):
            out += wgt * (-np.expm1(-law.rate * tt)) / law.rate
        else:
            out += wgt * np.minimum(tt, law.duration)
    return p.b * out


def _stick_intensity(d: StickBreaking, x: np.ndarray) -> np.ndarray:
    """sum_i P(V_i >= x) for the stick-breaking law (nested quadrature)."""
    tables = [np.asarray(t) for t in d.tables]
    ugrid = [np.linspace(0.0, 1.0, len(t)) for t in tables]
    out = np.empty_like(x)
    for idx, y in enumerate(x):
        out[idx] = sum(_stick_component_tail(tables, ugrid, i, y) for i in range(d.b))
    return out


def _stick_component_tail(tables, ugrid, i, y):
    """P(V_i >= y) where V_i = B_i prod_{j<i}(1-B_j) (last part: prod only)."""

    nb = len(tables)

    def q(j, u):
        return np.interp(u, ugrid[j], tables[j])

    def rec(j, scale):
        # P(scale * remaining factors of part i >= y)
        if scale < y:
            return 0.0
        if j == i:
            if i == nb:
                return 1.0
            return 1.0 - np.interp(y / scale, tables[j], ugrid[j], left=0.0, right=1.0)
        val, _ = integrate.quad(lambda u: rec(j + 1, scale * (1.0 - q(j, u))), 0.0, 1.0, limit=200, epsabs=1e-10)
        return val

    return rec(0, 1.0)


# ---------------------------------------------------------------------------
# Homogeneous helpers
# ---------------------------------------------------------------------------


def psi(family: FamilyModel, theta: float) -> float:
    """Laplace exponent ``Psi(theta) = theta - int (1 - e^{-theta t}) Lambda(dt)``
    of a homogeneous family; ``mu_hat = (theta - Psi) / theta``."""
    if family.kind is not Kind.Homogeneous:
        raise InvalidParams("psi is only defined for Homogeneous families")
    theta = float(theta)
    if theta == 0:
        return 0.0
    return theta - theta * _homog_transform(family.params, theta, False)


def extinction_probability(family: FamilyModel, alpha: float | None = None) -> float:
    """Probability that the population dies out: ``1 - alpha / b`` for
    splitting trees, 0 for families where every individual has a child."""
    if family.kind is not Kind.Homogeneous:
        return 0.0
    if alpha is None:
        from .analysis import solve_malthusian

        alpha = solve_malthusian(family)
    return 1.0 - alpha / family.params.b


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionCheck:
    status: str  # "pass" | "fail" | "note"
    detail: str


@dataclass(frozen=True)
class AssumptionReport:
    family: str
    checks: dict[str, AssumptionCheck]
    theta_1: float | None

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.checks.items() if c.status == "fail"]

    def __str__(self) -> str:
        lines = [f"assumptions for {self.family}:"]
        for key, c in self.checks.items():
            lines.append(f"  {key:<5} {c.status:<5} {c.detail}")
        return "\n".join(lines)


def find_theta_1(family: FamilyModel, p: float = 1.0) -> float | None:
    """Grid search for ``theta_1 > 0`` with ``1 < p * mu_hat(theta_1) < inf``."""
    lo, _ = domain_lower_bound(family)
    base = max(lo, 0.0)
    for off in np.geomspace(1e-9, 1e3, 400):
        theta = base + off
        try:
            val = p * laplace_mu(family, theta)
        except DomainError:
            continue
        if 1.0 < val < math.inf:
            return float(theta)
    return None


def _is_lattice(atoms: Sequence[float]) -> bool:
    pos = sorted({a for a in atoms if a > 0})
    if not pos:
        return True
    base = pos[0]
    for a in pos[1:]:
        r = a / base
        frac = Fraction(r).limit_denominator(1000)
        if abs(float(frac) - r) > 1e-9 * r:
            return False
    return True


def check_assumptions(family: FamilyModel) -> AssumptionReport:
    """Check (A1)-(A7) together with (E1)-(E3) where they apply."""
    k, p = family.kind, family.params
    checks: dict[str, AssumptionCheck] = {}

    if k is Kind.Fragmentation and isinstance(p.dislocation, Deterministic):
        atoms = [-math.log(v) for v in p.dislocation.values if v > 0]
        checks["A1"] = AssumptionCheck("pass", "mu({0}) = 0 since every V_i < 1")
        if _is_lattice(atoms):
            checks["A2"] = AssumptionCheck("fail", f"birth ages {atoms} lie on a lattice")
        else:
            checks["A2"] = AssumptionCheck("pass", "birth ages not commensurable")
    else:
        checks["A1"] = AssumptionCheck("pass", "mu({0}) = 0: birth ages have continuous laws")
        checks["A2"] = AssumptionCheck("pass", "mu is absolutely continuous, hence non-lattice")

    if k is Kind.Homogeneous:
        alpha = None
        theta_1 = find_theta_1(family)
        if theta_1 is not None:
            from .analysis import solve_malthusian

            alpha = solve_malthusian(family)
        note = "N >= 1 fails; results hold conditioned on survival"
        if alpha is not None:
            note += f", extinction probability 1 - alpha/b = {1 - alpha / p.b:.6g}"
        checks["A3"] = AssumptionCheck("note", note)
    else:
        checks["A3"] = AssumptionCheck("pass", "every individual has at least one child")

    theta_1 = find_theta_1(family)
    if theta_1 is None:
        sup = laplace_mu_sup(family)
        checks["A4"] = AssumptionCheck("fail", f"mu_hat <= {sup:g} <= 1 on theta > 0: not supercritical")
    else:
        checks["A4"] = AssumptionCheck(
            "pass", f"theta_1 = {theta_1:.6g}, mu_hat(theta_1) = {laplace_mu(family, theta_1):.6g}"
        )
    if k is Kind.GeneralPA:
        checks["E1"] = AssumptionCheck(checks["A4"].status, checks["A4"].detail)

    if theta_1 is None:
        checks["A5"] = AssumptionCheck("fail", "no theta_1 available")
    elif k is Kind.MarySearch:
        checks["A5"] = AssumptionCheck("pass", "Var(Xi_hat(theta)) < inf for theta > -1/2")
    elif k is Kind.MedianBST:
        var = 2 * laplace_mu(family, 2 * theta_1) - laplace_mu(family, theta_1) ** 2
        checks["A5"] = AssumptionCheck("pass", f"Var(Xi_hat(theta_1)) = {var:.6g}")
    elif k is Kind.Homogeneous:
        var = laplace_mu(family, 2 * theta_1)
        checks["A5"] = AssumptionCheck("pass", f"Var(Xi_hat(theta_1)) = {var:.6g} (Campbell)")
    elif k is Kind.Fragmentation:
        checks["A5"] = AssumptionCheck("pass", f"Xi_hat(theta) <= {p.b} is bounded")
    else:
        w = p.weights
        if isinstance(w, ExplicitWeights) and w.tail_rate == 0:
            detail = f"at most {len(w.support)} children: Xi_hat bounded"
        else:
            detail = "pure birth process with linear rates: Xi_hat(theta_1) square integrable"
        checks["A5"] = AssumptionCheck("pass", detail)
    if k is Kind.GeneralPA:
        checks["E2"] = AssumptionCheck(checks["A5"].status, checks["A5"].detail)

    bound = {Kind.MarySearch: lambda: p.m - 1, Kind.MedianBST: lambda: 2 * p.ell}.get(k, lambda: 1)()
    checks["A6"] = AssumptionCheck("pass", f"phi bounded by {bound}")
    checks["A7"] = AssumptionCheck("pass", "phi bounded, so Var(phi(t)) bounded")

    if k is Kind.Homogeneous:
        checks["E3"] = AssumptionCheck("pass", f"m = {p.m:.6g} in (1, inf)")

    return AssumptionReport(family.label, checks, theta_1)


# ---------------------------------------------------------------------------
# Reproduction cursor
# ---------------------------------------------------------------------------


class ReproductionCursor:
    """One individual's sampled reproduction: birth ages and characteristic.

    Birth ages are produced lazily by :meth:`birth_offsets` (families with an
    unbounded number of children need that). The characteristic is the step
    function ``phi0 + sum of jump_deltas[j] for jump_times[j] <= age``.
    """

    def __init__(self, family: FamilyModel, rng):
        from . import _kernels

        self.family = family
        self._rng = _kernels.as_generator(rng)
        code, ip, fp, tab = _kernels.encode(family)
        self._code, self._ip, self._fp, self._tab = code, ip, fp, tab
        offs, jt, jd, phi0, lifetime, status = _kernels.spawn_arrays(
            code, ip, fp, tab, self._rng
        )
        if status != 0:
            raise RuntimeError("dislocation vector failed the sum-to-one check")
        self.phi0 = float(phi0)
        self.jump_times = jt
        self.jump_deltas = jd
        self.lifetime = float(lifetime)
        self._lazy = _kernels.is_lazy(code)
        self._offsets = list(offs)
        self._exhausted = not self._lazy

    def _extend(self):
        from . import _kernels

        age = self._offsets[-1] if self._offsets else 0.0
        nxt = _kernels.lazy_next(
            self._code, self._ip, self._fp, len(self._offsets), age, self.lifetime,
            self._rng,
        )
        if math.isinf(nxt):
            self._exhausted = True
        else:
            self._offsets.append(nxt)

    def birth_offsets(self, horizon: float = math.inf, max_count: int | None = None) -> Iterator[float]:
        """Yield birth ages in nondecreasing order, up to ``horizon``."""
        i = 0
        while max_count is None or i < max_count:
            while i >= len(self._offsets) and not self._exhausted:
                self._extend()
            if i >= len(self._offsets):
                return
            off = self._offsets[i]
            if off > horizon:
                return
            yield off
            i += 1

    def phi(self, age: float) -> float:
        if age < 0:
            return 0.0
        return self.phi0 + float(self.jump_deltas[self.jump_times <= age].sum())


def spawn_cursor(family: FamilyModel, rng) -> ReproductionCursor:
    """Sample one i.i.d. copy of an individual's reproduction and characteristic."""
    return ReproductionCursor(family, rng)
