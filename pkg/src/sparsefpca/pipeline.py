"""End-to-end sparse-data FPCA fit: mean, covariance surface, eigenpairs."""

from __future__ import annotations

from dataclasses import dataclass

from .grid import Grid
from .kernels import KernelSpec
from .smoothers import bandwidth_schedule, center_surface, local_linear_cov_surface, local_linear_mean
from .spectral import DEFAULT_J0, eigendecompose_surface


@dataclass(frozen=True, eq=False)
class FPCAFit:
    mean: object
    raw_moment: object
    covariance: object
    eigen: object
    h_mu: float
    h_phi: float
    pair_count: int
    excluded_subjects: tuple

    def metadata(self):
        return {
            "h_mu": self.h_mu,
            "h_phi": self.h_phi,
            "grid": {"interval": list(self.covariance.grid.interval), "size": self.covariance.grid.size},
            "pair_count_N": self.pair_count,
            "covariance_excluded_subjects": list(self.excluded_subjects),
            "escalated_mean_nodes": int(self.mean.escalated_nodes.size),
            "escalated_surface_nodes": int((self.raw_moment.node_bandwidths > self.h_phi).sum()),
            "j0": self.eigen.j0,
            "gram_residual": self.eigen.gram_residual,
        }


def fit_fpca(panel, h_mu=None, h_phi=None, grid=None, kernel=KernelSpec(), j0=DEFAULT_J0, regime="eigenfunction"):
    """Fit mean, covariance and the leading ``j0`` eigenpairs of a sparse panel.

    Bandwidths left as ``None`` come from :func:`bandwidth_schedule` with
    unit constants for the given ``regime``.
    """
    if grid is None:
        grid = Grid.uniform(panel.interval)
    if h_mu is None or h_phi is None:
        s_mu, s_phi = bandwidth_schedule(panel.n, regime)
        h_mu = s_mu if h_mu is None else h_mu
        h_phi = s_phi if h_phi is None else h_phi
    mu = local_linear_mean(panel, h_mu, grid, kernel)
    phi = local_linear_cov_surface(panel, h_phi, grid, kernel)
    psi = center_surface(phi, mu)
    eig = eigendecompose_surface(psi, min(j0, grid.size))
    return FPCAFit(mu, phi, psi, eig, float(h_mu), float(h_phi), panel.pair_count, tuple(panel.sparse_subjects))
