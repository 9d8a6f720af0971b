"""Event-driven growth of a percolated CMJ family tree.

The population grows from a single ancestor until the counted weight
``Z^phi`` first reaches ``n`` (or, in fixed-time mode, until a clock time).
Each newborn is a clone of its parent with probability ``p`` and a mutant
otherwise; the root cluster is the set of individuals linked to the ancestor
by clone edges only.

The heavy lifting lives in :mod:`cmjtrees._kernels`; this module validates
inputs, handles extinction restarts and packages results.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CapExceeded, CMJError, InvalidParams, NonTerminating, NotRecorded
from .families import FamilyModel

__all__ = [
    "SimOptions",
    "TreeRecord",
    "SimOutcome",
    "simulate",
    "simulate_fixed_time",
    "root_cluster_fraction",
    "export_tree",
]


@dataclass(frozen=True)
class SimOptions:
    """Run options.

    ``mode`` is ``"streaming"`` (counters only) or ``"full"`` (every node and
    every characteristic jump is kept). ``record_clusters`` adds the size of
    every percolation cluster. ``cap`` bounds the number of individuals.
    """

    mode: str = "streaming"
    record_clusters: bool = False
    cap: int = 10**8
    max_retries: int = 10_000

    def __post_init__(self):
        if self.mode not in ("streaming", "full"):
            raise InvalidParams(f"mode must be 'streaming' or 'full', got {self.mode!r}")
        if self.cap < 1:
            raise InvalidParams("cap must be at least 1")
        if self.max_retries < 0:
            raise InvalidParams("max_retries must be nonnegative")


@dataclass
class TreeRecord:
    """Full tree in birth order; node 0 is the ancestor (parent -1)."""

    parent: np.ndarray
    sigma: np.ndarray
    is_clone: np.ndarray
    in_root_cluster: np.ndarray
    jump_node: np.ndarray
    jump_time: np.ndarray
    jump_delta: np.ndarray

    def __len__(self):
        return len(self.parent)


@dataclass
class SimOutcome:
    tau: float
    z_total: int
    z_phi: float
    root_cluster: int
    n_mutants: int
    retries: int = 0
    n: float = math.nan
    p: float = 1.0
    tree: TreeRecord | None = field(default=None, repr=False)
    cluster_sizes: np.ndarray | None = field(default=None, repr=False)


def _check_p(p):
    if not (0.0 < p <= 1.0) or math.isnan(p):
        raise InvalidParams(f"percolation parameter must lie in (0, 1], got {p}")


def _outcome(raw, retries, n, p, options) -> SimOutcome:
    (_, tau, z, zphi, root, nmut, par, sig, clone, inroot, jn, jt, jd, csize) = raw
    tree = None
    if options.mode == "full":
        tree = TreeRecord(par, sig, clone.astype(bool), inroot.astype(bool), jn, jt, jd)
    return SimOutcome(
        tau=float(tau),
        z_total=int(z),
        z_phi=float(zphi),
        root_cluster=int(root),
        n_mutants=int(nmut),
        retries=retries,
        n=n,
        p=p,
        tree=tree,
        cluster_sizes=csize if options.record_clusters else None,
    )


def simulate(family: FamilyModel, n: float, p: float = 1.0, rng=None, options: SimOptions | None = None) -> SimOutcome:
    """Grow the tree until its total weight first reaches ``n``.

    Every event at the crossing instant is processed, so individuals born at
    the same time (median-BST twins) are never split. If the population dies
    out first, the run is restarted with the continuing random stream and
    ``retries`` counts the restarts (only possible for homogeneous families).
    """
    options = options or SimOptions()
    if not n >= 1:
        raise InvalidParams(f"weight threshold must be >= 1, got {n}")
    _check_p(p)
    rng = _kernels.as_generator(rng)
    arrays = _kernels.encode(family)
    full = options.mode == "full"
    retries = 0
    while True:
        raw = _kernels.run(arrays, n, -1.0, False, p, rng, options.cap, full, options.record_clusters)
        status = raw[0]
        if status == _kernels.OK:
            return _outcome(raw, retries, float(n), float(p), options)
        if status == _kernels.CAP:
            raise CapExceeded(f"node cap {options.cap} reached before weight {n}")
        if status == _kernels.BAD_SPLIT:
            raise CMJError("dislocation vector failed the sum-to-one check")
        retries += 1
        if retries > options.max_retries:
            raise NonTerminating(f"population died out {retries} times before reaching weight {n}")


def simulate_fixed_time(
    family: FamilyModel, t: float, p: float = 1.0, rng=None, options: SimOptions | None = None
) -> SimOutcome:
    """Grow the tree up to clock time ``t`` (inclusive); no restarts."""
    options = options or SimOptions()
    if not t >= 0:
        raise InvalidParams(f"time horizon must be >= 0, got {t}")
    _check_p(p)
    rng = _kernels.as_generator(rng)
    full = options.mode == "full"
    raw = _kernels.run(_kernels.encode(family), math.inf, t, True, p, rng, options.cap, full, options.record_clusters)
    if raw[0] == _kernels.CAP:
        raise CapExceeded(f"node cap {options.cap} reached before time {t}")
    if raw[0] == _kernels.BAD_SPLIT:
        raise CMJError("dislocation vector failed the sum-to-one check")
    return _outcome(raw, 0, math.nan, float(p), options)


def root_cluster_fraction(outcome: SimOutcome, n: float | None = None) -> float:
    """Root-cluster size divided by the weight threshold (not by ``z_total``)."""
    n = outcome.n if n is None else n
    return outcome.root_cluster / n


def export_tree(outcome: SimOutcome, format: str = "csv") -> bytes:
    """Edge list ``child_id,parent_id,sigma,is_clone``; the root has no parent.

    The root is written with ``is_clone=1`` since it belongs to its own
    cluster by definition.
    """
    if outcome.tree is None:
        raise NotRecorded("export needs a run made with mode='full'")
    if format != "csv":
        raise ValueError(f"unsupported export format {format!r}")
    tr = outcome.tree
    buf = io.StringIO()
    buf.write("child_id,parent_id,sigma,is_clone\n")
    for i in range(len(tr)):
        par = "" if tr.parent[i] < 0 else str(int(tr.parent[i]))
        buf.write(f"{i},{par},{float(tr.sigma[i])!r},{int(tr.is_clone[i])}\n")
    return buf.getvalue().encode()
