"""Discretization of L2(I): evaluation nodes with trapezoid weights."""

from __future__ import annotations

import numpy as np

from .exceptions import GridMismatchError

DEFAULT_ESTIMATION_SIZE = 101
DEFAULT_QUADRATURE_SIZE = 1001


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def trapezoid_weights(nodes):
    """Composite trapezoid weights for strictly increasing ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    gaps = np.diff(nodes)
    w = np.zeros_like(nodes)
    w[:-1] += gaps / 2
    w[1:] += gaps / 2
    return w


class Grid:
    """Strictly increasing nodes covering an interval, with trapezoid weights.

    Parameters
    ----------
    nodes : array-like
        Strictly increasing evaluation points. The first and last node are
        taken as the interval endpoints.
    """

    __slots__ = ("nodes", "weights")

    def __init__(self, nodes):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", _frozen(nodes))
        object.__setattr__(self, "weights", _frozen(trapezoid_weights(nodes)))

    def __setattr__(self, name, value):
        raise AttributeError("Grid is immutable")

    @classmethod
    def uniform(cls, interval=(0.0, 1.0), size=DEFAULT_ESTIMATION_SIZE):
        a, b = interval
        return cls(np.linspace(a, b, int(size)))

    @property
    def size(self):
        return self.nodes.size

    @property
    def interval(self):
        return float(self.nodes[0]), float(self.nodes[-1])

    @property
    def length(self):
        return float(self.nodes[-1] - self.nodes[0])

    def __len__(self):
        return self.nodes.size

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.nodes, other.nodes)

    def __hash__(self):
        return hash(self.nodes.tobytes())

    def __repr__(self):
        a, b = self.interval
        return f"Grid([{a:g}, {b:g}], size={self.size})"

    def integrate(self, values, axis=-1):
        """Trapezoid integral of tabulated ``values`` along ``axis``."""
        values = np.asarray(values, dtype=float)
        return np.tensordot(values, self.weights, axes=([axis], [0]))

    def inner(self, f, g):
        return float(np.dot(self.weights, np.asarray(f) * np.asarray(g)))

    def norm(self, f):
        return float(np.sqrt(self.inner(f, f)))

    def check_same(self, other):
        if self != other:
            raise GridMismatchError(f"grid mismatch: {self!r} vs {other!r}")
