"""Mean of the counted process from its renewal equation.

``m(t) = E[Z^phi(t)]`` for the clonal process with intensity ``p * mu``
solves ``m = g + (p mu) * m`` with ``g(t) = E[phi(t)]``. On a grid of step
``h`` the kernel puts the mass ``p * mu((t_{j-1}, t_j])`` at ``t_j`` and the
equation is solved forward; the error is first order in ``h``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import GridError, InvalidParams
from .families import FamilyModel, expected_phi, intensity_cdf

__all__ = ["RenewalTable", "mean_count", "grid_size"]


@dataclass(frozen=True)
class RenewalTable:
    t: np.ndarray
    mean: np.ndarray

    def at(self, t: float) -> float:
        """Value at the grid point nearest to ``t``."""
        return float(self.mean[int(np.argmin(np.abs(self.t - t)))])

    def to_csv(self, every: int = 1) -> str:
        buf = io.StringIO()
        buf.write("t,mean\n")
        for ti, mi in zip(self.t[::every], self.mean[::every]):
            buf.write(f"{float(ti)!r},{float(mi)!r}\n")
        return buf.getvalue()


def grid_size(T: float, h: float) -> int:
    """Number of steps ``T / h``; raises :class:`GridError` unless it is a positive integer."""
    if not (h > 0 and math.isfinite(h)):
        raise GridError(f"step h must be positive and finite, got {h}")
    if not (T > 0 and math.isfinite(T)):
        raise GridError(f"horizon T must be positive and finite, got {T}")
    ratio = T / h
    steps = round(ratio)
    if steps < 1 or abs(ratio - steps) > 1e-9 * max(1.0, ratio):
        raise GridError(f"h={h} does not divide T={T}")
    return int(steps)


def mean_count(family: FamilyModel, p: float, T: float, h: float) -> RenewalTable:
    """``E[Z^phi(t)]`` on ``t = 0, h, ..., T`` for percolation parameter ``p``."""
    if not 0.0 < p <= 1.0:
        raise InvalidParams(f"p must lie in (0, 1], got {p}")
    steps = grid_size(T, h)
    t = np.arange(steps + 1) * h
    cdf = intensity_cdf(family, t)
    kernel = np.empty(steps + 1)
    kernel[0] = 0.0
    kernel[1:] = p * np.diff(cdf)
    if np.any(kernel < -1e-12):
        raise GridError("intensity CDF is not monotone on the grid")
    np.clip(kernel, 0.0, None, out=kernel)
    g = expected_phi(family, t)
    m = np.empty(steps + 1)
    m[0] = g[0]
    for j in range(1, steps + 1):
        m[j] = g[j] + np.dot(kernel[1 : j + 1], m[j - 1 :: -1])
    return RenewalTable(t, m)
