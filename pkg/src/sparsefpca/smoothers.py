"""Local-linear estimation of the mean curve and the raw covariance surface.

Both smoothers fit a weighted least-squares line (or plane) at every grid
node and keep the intercept. Accumulators follow the usual moment
notation: ``S_r = sum U^r W`` and ``R_r = sum U^r Y W`` for the mean, with
``U = u - T``; for the surface ``S_rs`` / ``R_rs`` sum ``U^r V^s (Z) W``
over within-subject pairs of distinct observations.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DataTooSparseError, GridMismatchError
from .kernels import KernelSpec
from .tabulated import CurveEstimate, SurfaceEstimate

SINGULARITY_TOL = 1e-10
ESCALATION_FACTOR = 1.5
MAX_ESCALATIONS = 4
PAIR_CHUNK = 8192


# --------------------------------------------------------------------------
# mean curve
# --------------------------------------------------------------------------


def _line_fit(t, y, nodes, h, kernel, min_spread=0.0):
    D = nodes[:, None] - t[None, :]
    W = kernel(D / h)
    WD = W * D
    S0 = W.sum(axis=1)
    S1 = WD.sum(axis=1)
    S2 = (WD * D).sum(axis=1)
    R0 = W @ y
    R1 = WD @ y
    den = S0 * S2 - S1 * S1
    scale = S0 * S2 + S1 * S1
    ok = (scale > 0) & (np.abs(den) > SINGULARITY_TOL * scale)
    if min_spread > 0:
        # den / (S0 S2) is the weighted variance of the window's times over their
        # weighted mean square distance from the node; near 0 means extrapolation
        ok &= den >= min_spread * S0 * S2
    with np.errstate(divide="ignore", invalid="ignore"):
        est = (S2 * R0 - S1 * R1) / den
    return est, ok


def local_linear_fit(t, y, h, grid, kernel=KernelSpec(), max_escalations=MAX_ESCALATIONS, min_spread=0.0):
    """Local-linear intercepts of the scatter ``(t, y)`` at every grid node.

    Nodes where the local design is singular are refit with the bandwidth
    multiplied by 1.5, up to ``max_escalations`` times. A positive
    ``min_spread`` also treats as singular any window whose normalized
    design determinant (S0 S2 - S1^2) / (S0 S2) falls below it.

    Returns
    -------
    values, node_bandwidths : ndarray
    """
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    nodes = grid.nodes
    values, ok = _line_fit(t, y, nodes, h, kernel, min_spread)
    node_h = np.full(nodes.size, float(h))
    bad = np.flatnonzero(~ok)
    step = 0
    while bad.size and step < max_escalations:
        step += 1
        hh = h * ESCALATION_FACTOR**step
        est, ok_b = _line_fit(t, y, nodes[bad], hh, kernel, min_spread)
        values[bad[ok_b]] = est[ok_b]
        node_h[bad[ok_b]] = hh
        bad = bad[~ok_b]
    if bad.size:
        u = float(nodes[bad[0]])
        raise DataTooSparseError(
            f"local-linear fit singular at node u={u:.6g} even after {max_escalations} "
            f"bandwidth escalations (h up to {h * ESCALATION_FACTOR**max_escalations:.4g})",
            node=u,
        )
    return values, node_h


def local_linear_mean(panel, h_mu, grid, kernel=KernelSpec(), max_escalations=MAX_ESCALATIONS):
    """Estimate mu on ``grid`` from every observation in ``panel``.

    Subjects with a single observation contribute here even though they are
    excluded from covariance estimation.
    """
    t, y = panel.flat()
    values, node_h = local_linear_fit(t, y, h_mu, grid, kernel, max_escalations)
    return CurveEstimate(grid, values, float(h_mu), node_h)


# --------------------------------------------------------------------------
# covariance surface
# --------------------------------------------------------------------------


def _plane_fit(tj, tk, z, nodes, h, kernel, chunk=PAIR_CHUNK):
    G = nodes.size
    acc = {key: np.zeros((G, G)) for key in ("S00", "S10", "S01", "S20", "S02", "S11", "R00", "R10", "R01")}
    for start in range(0, tj.size, chunk):
        a = tj[start : start + chunk]
        b = tk[start : start + chunk]
        zz = z[start : start + chunk]
        U = nodes[:, None] - a[None, :]
        V = nodes[:, None] - b[None, :]
        A0 = kernel(U / h)
        B0 = kernel(V / h)
        A1 = A0 * U
        B1 = B0 * V
        A2 = A1 * U
        B2 = B1 * V
        A0z = A0 * zz
        A1z = A1 * zz
        acc["S00"] += A0 @ B0.T
        acc["S10"] += A1 @ B0.T
        acc["S01"] += A0 @ B1.T
        acc["S20"] += A2 @ B0.T
        acc["S02"] += A0 @ B2.T
        acc["S11"] += A1 @ B1.T
        acc["R00"] += A0z @ B0.T
        acc["R10"] += A1z @ B0.T
        acc["R01"] += A0z @ B1.T
    return _solve_plane(acc)


def _solve_plane(acc):
    S00, S10, S01 = acc["S00"], acc["S10"], acc["S01"]
    S20, S02, S11 = acc["S20"], acc["S02"], acc["S11"]
    A1 = S20 * S02 - S11 * S11
    A2 = S10 * S02 - S01 * S11
    A3 = S01 * S20 - S10 * S11
    B = A1 * S00 - A2 * S10 - A3 * S01
    scale = np.abs(A1 * S00) + np.abs(A2 * S10) + np.abs(A3 * S01)
    ok = (scale > 0) & (np.abs(B) > SINGULARITY_TOL * scale)
    with np.errstate(divide="ignore", invalid="ignore"):
        est = (A1 * acc["R00"] - A2 * acc["R10"] - A3 * acc["R01"]) / B
    return est, ok


def _mirror_upper(a):
    return np.triu(a) + np.triu(a, 1).T


def smooth_pairs(tj, tk, z, h, grid, kernel=KernelSpec(), max_escalations=MAX_ESCALATIONS):
    """Local-plane smoother of pair responses ``z`` observed at ``(tj, tk)``.

    The pair set is used as given; callers decide which pairs enter. Values
    are computed for ``u <= v`` and mirrored, so the result is exactly
    symmetric whenever the pair set is closed under swapping.

    Returns
    -------
    values, node_bandwidths : ndarray of shape (G, G)
    """
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    tj = np.asarray(tj, dtype=float)
    tk = np.asarray(tk, dtype=float)
    z = np.asarray(z, dtype=float)
    nodes = grid.nodes
    G = nodes.size
    upper = np.triu(np.ones((G, G), dtype=bool))
    values, ok = _plane_fit(tj, tk, z, nodes, h, kernel)
    node_h = np.full((G, G), float(h))
    bad = upper & ~ok
    step = 0
    while bad.any() and step < max_escalations:
        step += 1
        hh = h * ESCALATION_FACTOR**step
        est, ok_h = _plane_fit(tj, tk, z, nodes, hh, kernel)
        fixed = bad & ok_h
        values[fixed] = est[fixed]
        node_h[fixed] = hh
        bad &= ~ok_h
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DataTooSparseError(
            f"local-plane fit singular at node (u, v) = ({nodes[i]:.6g}, {nodes[j]:.6g}) even after "
            f"{max_escalations} bandwidth escalations",
            node=(float(nodes[i]), float(nodes[j])),
        )
    return _mirror_upper(values), _mirror_upper(node_h)


def local_linear_cov_surface(panel, h_phi, grid, kernel=KernelSpec(), max_escalations=MAX_ESCALATIONS):
    """Raw moment surface phi_hat(u, v), an estimate of E{X(u) X(v)}.

    Only pairs of distinct observations of the same subject enter, which
    keeps the measurement-error variance off the diagonal.
    """
    tj, tk, z = panel.ordered_pairs()
    if tj.size == 0:
        raise DataTooSparseError("no subject has two or more observations")
    values, node_h = smooth_pairs(tj, tk, z, h_phi, grid, kernel, max_escalations)
    return SurfaceEstimate(
        grid,
        values,
        bandwidth=float(h_phi),
        symmetric=True,
        node_bandwidths=node_h,
        meta={"pair_count": panel.pair_count, "excluded_subjects": panel.sparse_subjects},
    )


def center_surface(phi_hat, mu_hat):
    """psi_hat(u, v) = phi_hat(u, v) - mu_hat(u) mu_hat(v)."""
    if phi_hat.grid != mu_hat.grid:
        raise GridMismatchError("mean curve and raw surface use different grids")
    mu = mu_hat.values
    values = phi_hat.values - np.outer(mu, mu)
    return SurfaceEstimate(
        phi_hat.grid,
        values,
        bandwidth=phi_hat.bandwidth,
        symmetric=phi_hat.symmetric,
        node_bandwidths=phi_hat.node_bandwidths,
        meta=dict(phi_hat.meta),
    )


# --------------------------------------------------------------------------
# bandwidths
# --------------------------------------------------------------------------

SCHEDULE_EXPONENTS = {
    # (h_mu exponent, h_phi exponent)
    "eigenfunction": (-0.3, -0.2),
    "eigenvalue": (-0.3, -0.3),
}


def bandwidth_schedule(n, regime="eigenfunction", c_mu=1.0, c_phi=1.0):
    """Theory-driven bandwidths ``(h_mu, h_phi)`` for sample size ``n``.

    ``"eigenfunction"``: h_phi = c_phi n^-1/5, h_mu = c_mu n^-3/10.
    ``"eigenvalue"``: both bandwidths of order n^-3/10.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if regime not in SCHEDULE_EXPONENTS:
        raise ValueError(f"unknown regime {regime!r}")
    if c_mu <= 0 or c_phi <= 0:
        raise ValueError("bandwidth constants must be positive")
    e_mu, e_phi = SCHEDULE_EXPONENTS[regime]
    return c_mu * n**e_mu, c_phi * n**e_phi
