"""Functions of one or two arguments tabulated on a :class:`~sparsefpca.grid.Grid`."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import Grid


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CurveEstimate:
    """Values of a curve at every grid node.

    ``bandwidth`` is the nominal smoothing bandwidth (``None`` for exact
    tabulations); ``node_bandwidths`` records the per-node bandwidth after
    any escalation.
    """

    grid: Grid
    values: np.ndarray
    bandwidth: Optional[float] = None
    node_bandwidths: Optional[np.ndarray] = None

    def __post_init__(self):
        values = _readonly(self.values)
        if values.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "values", values)
        if self.node_bandwidths is not None:
            object.__setattr__(self, "node_bandwidths", _readonly(self.node_bandwidths))

    def __neg__(self):
        return CurveEstimate(self.grid, -self.values, self.bandwidth, self.node_bandwidths)

    @property
    def escalated_nodes(self):
        if self.node_bandwidths is None or self.bandwidth is None:
            return np.array([], dtype=int)
        return np.flatnonzero(self.node_bandwidths > self.bandwidth)


@dataclass(frozen=True, eq=False)
class SurfaceEstimate:
    """Values of a bivariate function at every pair of grid nodes."""

    grid: Grid
    values: np.ndarray
    bandwidth: Optional[float] = None
    symmetric: bool = True
    node_bandwidths: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = _readonly(self.values)
        g = self.grid.size
        if values.shape != (g, g):
            raise ValueError(f"expected shape {(g, g)}, got {values.shape}")
        if self.symmetric and not np.array_equal(values, values.T):
            raise ValueError("surface flagged symmetric but values(u, v) != values(v, u)")
        object.__setattr__(self, "values", values)
        if self.node_bandwidths is not None:
            object.__setattr__(self, "node_bandwidths", _readonly(self.node_bandwidths))

    def max_asymmetry(self):
        return float(np.max(np.abs(self.values - self.values.T)))

    def diagonal(self):
        return CurveEstimate(self.grid, np.diag(self.values).copy(), self.bandwidth)
