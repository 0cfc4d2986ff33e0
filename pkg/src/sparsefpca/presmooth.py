"""Curve-by-curve presmoothing followed by ordinary sample-covariance PCA.

Each subject's observations are turned into a full curve by its own
local-linear fit; the curves are then treated as if fully observed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DataTooSparseError
from .kernels import KernelSpec
from .smoothers import MAX_ESCALATIONS, local_linear_fit
from .tabulated import CurveEstimate, SurfaceEstimate

DEFAULT_MIN_SPREAD = 0.005


def presmooth_subject(t, y, h, grid, kernel=KernelSpec(), max_escalations=MAX_ESCALATIONS, min_spread=DEFAULT_MIN_SPREAD):
    """Local-linear fit of one subject's observations, evaluated on ``grid``.

    Raises
    ------
    DataTooSparseError
        If the subject has fewer than two distinct times or some node stays
        singular after bandwidth escalation.
    """
    t = np.asarray(t, dtype=float)
    if np.unique(t).size < 2:
        raise DataTooSparseError("subject has fewer than two distinct observation times")
    values, node_h = local_linear_fit(t, y, h, grid, kernel, max_escalations, min_spread)
    return CurveEstimate(grid, values, float(h), node_h)


@dataclass(frozen=True, eq=False)
class SmoothedEnsemble:
    """Curves on a common grid, one row per retained subject.

    ``kept`` lists the panel indices behind each row and ``dropped`` the
    subjects whose presmoothing failed.
    """

    grid: object
    curves: np.ndarray
    bandwidth: float = None
    kept: tuple = ()
    dropped: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        curves = np.array(self.curves, dtype=float)
        if curves.ndim != 2 or curves.shape[1] != self.grid.size:
            raise ValueError("curves must have shape (n, grid size)")
        curves.setflags(write=False)
        object.__setattr__(self, "curves", curves)
        if not self.kept:
            object.__setattr__(self, "kept", tuple(range(curves.shape[0])))

    @property
    def n(self):
        return self.curves.shape[0]

    @property
    def mean(self):
        return CurveEstimate(self.grid, self.curves.mean(axis=0))


def presmooth_panel(panel, h, grid, kernel=KernelSpec(), max_escalations=MAX_ESCALATIONS, min_spread=DEFAULT_MIN_SPREAD):
    """Presmooth every subject; subjects that cannot be fitted are dropped and reported."""
    rows, kept, dropped = [], [], []
    for i, (t, y) in enumerate(panel.subjects()):
        try:
            rows.append(presmooth_subject(t, y, h, grid, kernel, max_escalations, min_spread).values)
            kept.append(i)
        except DataTooSparseError:
            dropped.append(i)
    if len(rows) < 2:
        raise DataTooSparseError(f"only {len(rows)} of {panel.n} subjects could be presmoothed")
    return SmoothedEnsemble(
        grid, np.vstack(rows), float(h), tuple(kept), tuple(dropped), {"dropped_count": len(dropped)}
    )


def _centered_cross_product(X):
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / X.shape[0]
    return np.triu(C) + np.triu(C, 1).T


def sample_covariance(ensemble):
    """n^-1 sum_i (X_i - Xbar)(u) (X_i - Xbar)(v) over the ensemble's curves."""
    if ensemble.n < 2:
        raise ValueError("need at least two curves")
    return SurfaceEstimate(
        ensemble.grid,
        _centered_cross_product(ensemble.curves),
        bandwidth=ensemble.bandwidth,
        symmetric=True,
        meta={"n": ensemble.n, "dropped": list(ensemble.dropped)},
    )


def full_curve_oracle(curves, grid):
    """Covariance of fully observed, noiseless curves (an array of shape (n, G))."""
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 2 or curves.shape[1] != grid.size or curves.shape[0] < 2:
        raise ValueError("need an (n >= 2, grid size) array of curves")
    return SurfaceEstimate(grid, _centered_cross_product(curves), symmetric=True, meta={"n": curves.shape[0]})


# --------------------------------------------------------------------------
# bandwidth constraints of the presmoothing pathway
# --------------------------------------------------------------------------

PROXY_EXPONENT = 0.01


def check_presmoothing_constraints(n, m, h_exponent, c=1.0, strict=True):
    """Check h = c n^-h_exponent against the growth conditions of the presmoothing result.

    The hard requirement is h = o(n^-1/4), i.e. ``h_exponent > 1/4``; it is
    enforced when ``strict``. The m-dependent conditions only hold in the
    limit and are reported through finite-n proxies:
    ``m h > n^0.01`` (for m h n^-delta -> infinity) and ``m^0.99 h > 1``
    (for m^(1 - delta) h -> infinity).

    Returns
    -------
    dict
        One entry per condition with the compared quantities and a boolean.
    """
    h = c * n ** (-h_exponent)
    checks = {
        "h = o(n^-1/4)": {"lhs": float(h_exponent), "rhs": 0.25, "holds": bool(h_exponent > 0.25)},
        "m h n^-delta1 -> inf (proxy m h > n^0.01)": {
            "lhs": float(m * h),
            "rhs": float(n**PROXY_EXPONENT),
            "holds": bool(m * h > n**PROXY_EXPONENT),
        },
        "m^(1-delta2) h -> inf (proxy m^0.99 h > 1)": {
            "lhs": float(m ** (1 - PROXY_EXPONENT) * h),
            "rhs": 1.0,
            "holds": bool(m ** (1 - PROXY_EXPONENT) * h > 1.0),
        },
    }
    if strict and not checks["h = o(n^-1/4)"]["holds"]:
        raise ConfigError(
            f"presmoothing bandwidth violates h = o(n^-1/4): exponent {h_exponent} must exceed 0.25"
        )
    return checks


def m_rule(n, exponent):
    """ceil(n^exponent) observations per subject."""
    return int(math.ceil(n**exponent - 1e-12))
