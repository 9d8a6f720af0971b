"""Experiment configuration files.

A config is an INI file with a ``[family]`` and an ``[experiment]`` section::

    [family]
    kind = GeneralPA          ; or a preset name such as rrt, bst, m-ary-search
    weights = 2, 1            ; explicit prefix, zero afterwards
    ; weights = 1, ...        ; a trailing "..." repeats the last weight forever
    ; beta = 1
    ; rho = 1

    [experiment]
    regime = super            ; weak | super | strong | fixed
    c = 1
    n_values = 1e4, 1e5
    replicates = 200
    master_seed = 42

Value syntax for the structured keys:

* ``dislocation``: ``uniform``, ``deterministic(0.5, 0.5)`` or
  ``table(q_0, ..., q_K)`` (several tables separated by ``;``).
* ``lifetime``: ``exponential(rate)``, ``deterministic(d)`` or a mixture
  ``0.5*exponential(1) + 0.5*deterministic(2)``.
"""

from __future__ import annotations

import configparser
import re
from pathlib import Path

from .analysis import RegimeSchedule
from .errors import CMJError, ConfigError, InvalidParams
from .experiments import ExperimentConfig
from .families import (
    PRESETS,
    AffineWeights,
    Deterministic,
    DeterministicLifetime,
    ExplicitWeights,
    ExponentialLifetime,
    FamilyModel,
    Kind,
    MixtureLifetime,
    StickBreaking,
    UniformBinary,
    make_family,
    preset,
)

__all__ = [
    "FAMILY_KEYS",
    "EXPERIMENT_KEYS",
    "parse_weights",
    "parse_dislocation",
    "parse_lifetime",
    "family_from_mapping",
    "load_config",
    "parse_config",
]

FAMILY_KEYS = ("kind", "weights", "beta", "rho", "m", "ell", "b", "dislocation", "lifetime")
EXPERIMENT_KEYS = (
    "regime",
    "c",
    "p",
    "n_values",
    "replicates",
    "master_seed",
    "mode",
    "outputs",
    "parallelism",
    "cap",
    "max_retries",
)

_CALL = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$", re.IGNORECASE)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def parse_weights(text: str) -> ExplicitWeights:
    """``"2, 1"`` (zero afterwards) or ``"1, ..."`` (last weight repeated)."""
    parts = [x.strip() for x in text.split(",") if x.strip()]
    tail = "zero"
    if parts and parts[-1] == "...":
        tail = "constant"
        parts = parts[:-1]
    if not parts:
        raise InvalidParams("weights: at least one value required")
    return ExplicitWeights(tuple(float(x) for x in parts), tail)


def parse_dislocation(text: str, b: int | None = None):
    text = text.strip()
    if text.lower() == "uniform":
        return UniformBinary()
    m = _CALL.match(text)
    if not m:
        raise InvalidParams(f"dislocation: cannot parse {text!r}")
    name, body = m.group(1).lower(), m.group(2)
    if name == "deterministic":
        return Deterministic(tuple(_floats(body)))
    if name == "table":
        tables = tuple(tuple(_floats(chunk)) for chunk in body.split(";") if chunk.strip())
        return StickBreaking(tables, b if b is not None else len(tables) + 1)
    raise InvalidParams(f"dislocation: unknown law {name!r}")


def _one_lifetime(text: str):
    m = _CALL.match(text)
    if not m:
        raise InvalidParams(f"lifetime: cannot parse {text!r}")
    name, body = m.group(1).lower(), m.group(2)
    vals = _floats(body)
    if len(vals) != 1:
        raise InvalidParams(f"lifetime: {name} takes one parameter")
    if name in ("exponential", "exp"):
        return ExponentialLifetime(vals[0])
    if name in ("deterministic", "det"):
        return DeterministicLifetime(vals[0])
    raise InvalidParams(f"lifetime: unknown law {name!r}")


def parse_lifetime(text: str):
    terms = [t.strip() for t in text.split("+") if t.strip()]
    if len(terms) == 1 and "*" not in terms[0]:
        return _one_lifetime(terms[0])
    comps = []
    for term in terms:
        if "*" not in term:
            raise InvalidParams(f"lifetime: mixture term {term!r} needs a weight, as in 0.5*exponential(1)")
        w, law = term.split("*", 1)
        comps.append((float(w), _one_lifetime(law)))
    return MixtureLifetime(tuple(comps))


def family_from_mapping(values: dict[str, str]) -> FamilyModel:
    """Build a family from string-valued config keys."""
    values = {k.lower(): v for k, v in values.items()}
    unknown = set(values) - set(FAMILY_KEYS)
    if unknown:
        raise InvalidParams(f"unknown family keys {sorted(unknown)}; allowed: {', '.join(FAMILY_KEYS)}")
    if "kind" not in values:
        raise InvalidParams("family: missing key 'kind'")
    kind = values.pop("kind").strip()
    if kind.lower() in PRESETS:
        overrides = {}
        for k, v in values.items():
            overrides[k] = int(v) if k in ("m", "ell", "beta") else float(v)
        return preset(kind, **overrides)
    try:
        kind = Kind(kind)
    except ValueError:
        names = [k.value for k in Kind] + sorted(PRESETS)
        raise InvalidParams(f"unknown kind {kind!r}; expected one of {', '.join(names)}") from None
    kw: dict = {}
    if kind is Kind.GeneralPA:
        if "weights" in values:
            if "beta" in values or "rho" in values:
                raise InvalidParams("GeneralPA: give either weights or beta/rho")
            kw["weights"] = parse_weights(values.pop("weights"))
        else:
            if "beta" not in values or "rho" not in values:
                raise InvalidParams("GeneralPA: needs weights, or beta and rho")
            kw["weights"] = AffineWeights(int(values.pop("beta")), float(values.pop("rho")))
    elif kind is Kind.MarySearch:
        kw["m"] = int(values.pop("m", "") or _missing("m"))
    elif kind is Kind.MedianBST:
        kw["ell"] = int(values.pop("ell", "") or _missing("ell"))
    elif kind is Kind.Fragmentation:
        b = int(values.pop("b")) if "b" in values else None
        kw["dislocation"] = parse_dislocation(values.pop("dislocation", "uniform"), b)
        kw["b"] = b
    else:
        kw["b"] = float(values.pop("b", "") or _missing("b"))
        kw["lifetime"] = parse_lifetime(values.pop("lifetime", "") or _missing("lifetime"))
    if values:
        raise InvalidParams(f"{kind.value}: keys {sorted(values)} do not apply")
    return make_family(kind, **kw)


def _missing(key):
    raise InvalidParams(f"missing key {key!r}")


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip().lower()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None:
            if re.match(rf"^{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
                return i
    return None


def parse_config(text: str, seed: int | None = None, outputs: str | None = None, parallelism: int | None = None):
    """Parse config text into an :class:`ExperimentConfig`.

    ``seed``, ``outputs`` and ``parallelism`` override the file's values.
    Errors are raised as :class:`ConfigError` with the offending line.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    for sec in ("family", "experiment"):
        if not cp.has_section(sec):
            raise ConfigError(f"missing section [{sec}]")
    for sec in cp.sections():
        if sec not in ("family", "experiment"):
            raise ConfigError(f"unknown section [{sec}]", _line_of(text, sec.lower()))

    fam_vals = dict(cp["family"])
    try:
        family = family_from_mapping(fam_vals)
    except (CMJError, ValueError, TypeError) as exc:
        key = _guess_key(str(exc), fam_vals)
        raise ConfigError(f"[family] {exc}", _line_of(text, "family", key) or _line_of(text, "family")) from None

    ex = dict(cp["experiment"])
    unknown = set(ex) - set(EXPERIMENT_KEYS)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(
            f"[experiment] unknown key {key!r}; allowed: {', '.join(EXPERIMENT_KEYS)}", _line_of(text, "experiment", key)
        )

    def get(key, conv, default=None, required=False):
        if key not in ex:
            if required:
                raise ConfigError(f"[experiment] missing key {key!r}", _line_of(text, "experiment"))
            return default
        try:
            return conv(ex[key])
        except (ValueError, CMJError) as exc:
            raise ConfigError(f"[experiment] bad value for {key!r}: {exc}", _line_of(text, "experiment", key)) from None

    regime = get("regime", str.strip, "fixed")
    try:
        schedule = RegimeSchedule(regime, c=get("c", float), p=get("p", float, 1.0 if regime == "fixed" else None))
    except CMJError as exc:
        raise ConfigError(f"[experiment] {exc}", _line_of(text, "experiment", "regime")) from None

    def n_list(s):
        return tuple(float(x) for x in s.split(",") if x.strip())

    n_values = get("n_values", n_list, required=True)
    master = get("master_seed", lambda s: int(s, 0), 0)
    if seed is not None:
        master = seed
    try:
        return ExperimentConfig(
            family=family,
            schedule=schedule,
            n_values=n_values,
            replicates=get("replicates", int, 100),
            master_seed=master,
            mode=get("mode", str.strip, "streaming"),
            outputs=outputs if outputs is not None else get("outputs", str.strip, None),
            parallelism=parallelism if parallelism is not None else get("parallelism", int, 1),
            cap=get("cap", lambda s: int(float(s)), 10**8),
            max_retries=get("max_retries", int, 10_000),
        )
    except CMJError as exc:
        msg = str(exc)
        key = next((k for k in ("n_values", "replicates", "master_seed", "mode", "parallelism") if k in msg), "n_values")
        if "schedule" in msg or "p_n" in msg:
            key = {"super": "c", "fixed": "p"}.get(schedule.regime, "regime")
            if _line_of(text, "experiment", key) is None:
                key = "regime"
        raise ConfigError(f"[experiment] {msg}", _line_of(text, "experiment", key)) from None


def _guess_key(message: str, values: dict) -> str | None:
    for key in values:
        if key in message:
            return key
    return "kind"


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, **overrides)
