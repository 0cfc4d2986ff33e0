"""Quadrature-weighted (Nystrom) eigendecomposition of tabulated surfaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import GridMismatchError, SpectralError
from .tabulated import CurveEstimate

DEFAULT_J0 = 3
SYMMETRY_TOL = 1e-12
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Leading eigenpairs of a surface, ordered by decreasing eigenvalue.

    Attributes
    ----------
    values : ndarray (j0,)
        theta_hat_1 >= ... >= theta_hat_j0.
    functions : ndarray (j0, G)
        Eigenfunctions on the grid, unit norm under the trapezoid rule.
    spectrum : ndarray (G,)
        Every eigenvalue of the discretized operator, decreasing.
    gram_residual : float
        max |<psi_j, psi_k> - delta_jk| over the retained functions.
    """

    grid: object
    values: np.ndarray
    functions: np.ndarray
    spectrum: np.ndarray
    gram_residual: float

    @property
    def j0(self):
        return self.values.size

    @property
    def negative(self):
        """Flags for retained eigenvalues below zero."""
        return self.values < 0

    @property
    def pairs(self):
        return [(float(v), CurveEstimate(self.grid, f)) for v, f in zip(self.values, self.functions)]

    def eigenfunction(self, j):
        """The j-th eigenfunction (1-based) as a curve."""
        return CurveEstimate(self.grid, self.functions[j - 1])

    def reconstruct(self):
        """sum_j theta_j psi_j(u) psi_j(v) over the retained pairs."""
        return (self.functions.T * self.values) @ self.functions


def eigendecompose_surface(surface, j0=DEFAULT_J0):
    """Eigenvalues and eigenfunctions of the integral operator with kernel ``surface``.

    The operator is discretized as W^1/2 C W^1/2 with W the trapezoid weights;
    eigenvectors are mapped back through W^-1/2 so that each eigenfunction has
    unit quadrature norm. Negative eigenvalues are kept as they are.
    """
    grid = surface.grid
    C = np.asarray(surface.values, dtype=float)
    G = grid.size
    if not 1 <= j0 <= G:
        raise ValueError(f"j0 must lie in [1, {G}]")
    scale = max(float(np.max(np.abs(C))), 1.0)
    asym = float(np.max(np.abs(C - C.T)))
    if asym > SYMMETRY_TOL * scale:
        raise SpectralError(f"surface is not symmetric (max asymmetry {asym:.3e})")
    C = 0.5 * (C + C.T)
    sw = np.sqrt(grid.weights)
    A = sw[:, None] * C * sw[None, :]
    try:
        evals, evecs = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"symmetric eigensolver did not converge: {exc}") from exc
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    resid = np.max(np.abs(A @ evecs[:, :j0] - evecs[:, :j0] * evals[:j0]))
    if not np.isfinite(resid) or resid > RESIDUAL_TOL * max(1.0, float(np.max(np.abs(evals)))):
        raise SpectralError(f"eigensolver residual {resid:.3e} exceeds tolerance")
    funcs = (evecs[:, :j0] / sw[:, None]).T
    norms = np.sqrt(funcs**2 @ grid.weights)
    funcs = funcs / norms[:, None]
    gram = (funcs * grid.weights) @ funcs.T
    gram_residual = float(np.max(np.abs(gram - np.eye(j0))))
    return EigenSystem(grid, evals[:j0].copy(), funcs, evals.copy(), gram_residual)


def l2_distance(f, g):
    """Trapezoid L2 norm of f - g."""
    if f.grid != g.grid:
        raise GridMismatchError("curves live on different grids")
    d = f.values - g.values
    return float(np.sqrt(np.dot(f.grid.weights, d * d)))


def align_sign(psi_hat, reference=None):
    """Resolve the sign ambiguity of an estimated eigenfunction.

    With a reference curve the sign minimizing the L2 distance to it is
    chosen; an inner product of exactly zero leaves the input unchanged.
    Without a reference the entry of largest magnitude is made positive
    (ties go to the earliest node).
    """
    if reference is not None:
        if psi_hat.grid != reference.grid:
            raise GridMismatchError("curves live on different grids")
        ip = psi_hat.grid.inner(psi_hat.values, reference.values)
        return -psi_hat if ip < 0 else psi_hat
    idx = int(np.argmax(np.abs(psi_hat.values)))
    return -psi_hat if psi_hat.values[idx] < 0 else psi_hat
