"""Principal component analysis for sparse, noisy longitudinal data.

Local-linear estimates of the mean and covariance, quadrature-weighted
eigendecomposition, a curve-presmoothing alternative, and the asymptotic
constants and simulation harness used to check convergence behaviour.
"""

from importlib.metadata import PackageNotFoundError, version

from .exceptions import (
    ConfigError,
    DataTooSparseError,
    ExperimentAborted,
    GridMismatchError,
    ModelError,
    PanelParseError,
    SparseFPCAError,
    SpectralError,
    UnsupportedMomentError,
)
from .grid import Grid
from .kernels import KernelSpec, kernel_moments
from .model import (
    GAUSSIAN,
    UNIFORM,
    BetaMixtureDensity,
    DesignSpec,
    SmoothFunction,
    SparsePanel,
    TrajectoryModel,
    UniformDensity,
    constant_function,
    cosine_basis,
    fourth_moment,
    linear_function,
    simulate_panel,
    sine_basis,
    true_covariance,
)
from .oracles import (
    AsymptoticConstants,
    asymptotic_constants,
    chi_surface,
    constant_C1,
    constant_C2,
    full_curve_limit_d,
    sigma_matrix,
)
from .pipeline import FPCAFit, fit_fpca
from .presmooth import SmoothedEnsemble, full_curve_oracle, presmooth_panel, presmooth_subject, sample_covariance
from .smoothers import bandwidth_schedule, center_surface, local_linear_cov_surface, local_linear_mean
from .spectral import EigenSystem, align_sign, eigendecompose_surface, l2_distance
from .tabulated import CurveEstimate, SurfaceEstimate

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.1.0"
