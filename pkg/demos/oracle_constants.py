"""Asymptotic constants for the default model and what they predict."""

from sparsefpca import asymptotic_constants, bandwidth_schedule
from sparsefpca.experiments import ACCEPTANCE_MODEL, build_design, build_model

model = build_model(ACCEPTANCE_MODEL)
design = build_design({"m_range": [2, 5]})

for n in (100, 400, 1600):
    k = asymptotic_constants(model, design, n, j0=2, draws=200_000)
    _, h = bandwidth_schedule(n, "eigenfunction")
    print(
        f"n={n:5d}  C1={k.C1[0]:.4f}  C2={k.C2[0]:.2e}  "
        f"Sigma_11={k.sigma_matrix[0, 0]:.2e}  "
        f"E||psi_hat_1 - psi_1||^2 ~ {k.predicted_sq_error(1, h):.5f}"
    )
