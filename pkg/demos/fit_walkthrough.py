"""Simulate a sparse panel, fit it, and compare with the truth."""

from sparsefpca import (
    CurveEstimate,
    DesignSpec,
    Grid,
    TrajectoryModel,
    align_sign,
    fit_fpca,
    l2_distance,
    simulate_panel,
    sine_basis,
)

model = TrajectoryModel((1.0, 0.25), sine_basis(2), noise_sd=0.25)
panel = simulate_panel(model, DesignSpec(m_range=(2, 5)), n=400, seed=1)
print(f"{panel.n} subjects, {panel.pair_count} within-subject pairs")

grid = Grid.uniform((0, 1), 101)
fit = fit_fpca(panel, grid=grid, j0=2)
print(f"bandwidths: mean {fit.h_mu:.3f}, covariance {fit.h_phi:.3f}")

for j in range(2):
    print(f"theta_{j + 1}: true {model.eigenvalues[j]:.3f}, estimated {fit.eigen.values[j]:.3f}")
    psi_true = CurveEstimate(grid, model.eigenfunctions[j].value(grid.nodes))
    est = align_sign(fit.eigen.eigenfunction(j + 1), psi_true)
    print(f"  L2 error of psi_{j + 1}: {l2_distance(est, psi_true):.3f}")

# the eigenvalue regime uses smaller bandwidths, trading eigenfunction
# smoothness for less bias in theta
fit_ev = fit_fpca(panel, grid=grid, j0=2, regime="eigenvalue")
print(f"eigenvalue regime: h_phi {fit_ev.h_phi:.3f}, theta_1 {fit_ev.eigen.values[0]:.3f}")
