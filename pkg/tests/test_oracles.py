import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import qmc

from sparsefpca import (
    UNIFORM,
    DesignSpec,
    Grid,
    KernelSpec,
    ModelError,
    SmoothFunction,
    TrajectoryModel,
    asymptotic_constants,
    chi_surface,
    constant_C1,
    constant_C2,
    full_curve_limit_d,
    linear_function,
    sigma_matrix,
    sine_basis,
)
from sparsefpca.model import sine_mean
from sparsefpca.oracles import (
    _overlap_counts,
    c2_terms,
    c_matrix,
    d_matrix,
    predicted_sq_error,
    quadruple_moments,
    second_derivative,
)

KAPPA2 = 0.2


def _strip_derivatives(fn):
    return SmoothFunction(fn.value)


def _zero_model(mean, sigma=0.0):
    return TrajectoryModel((0.0,), sine_basis(1), mean=mean, noise_sd=sigma)


# -- chi -------------------------------------------------------------------


def test_chi_numeric_matches_analytic():
    model = TrajectoryModel((1.0,), sine_basis(1))
    numeric = TrajectoryModel((1.0,), tuple(_strip_derivatives(f) for f in sine_basis(1)), mean=_strip_derivatives(model.mean))
    g = Grid.uniform((0, 1), 201)
    a = chi_surface(model, grid=g).values
    b = chi_surface(numeric, grid=g).values
    assert np.max(np.abs(a - b)) < 1e-6 * np.max(np.abs(a))
    # analytic value at the centre: kappa2/2 * 2 * theta * psi''(.5) psi(.5)
    i = 100
    expected = 0.5 * KAPPA2 * 2 * (-2 * np.pi**2)
    assert a[i, i] == pytest.approx(expected, rel=1e-12)


def test_chi_requires_derivative_when_numeric_disabled():
    model = TrajectoryModel((1.0,), tuple(_strip_derivatives(f) for f in sine_basis(1)))
    with pytest.raises(ModelError):
        chi_surface(model, grid=Grid.uniform((0, 1), 11), numeric=False)


def test_numeric_second_derivative_near_edges():
    f = SmoothFunction(lambda t: t**3)
    t = np.array([0.0, 0.0003, 0.5, 0.9999, 1.0])
    np.testing.assert_allclose(second_derivative(f, t, (0, 1)), 6 * t, atol=1e-5)


@pytest.mark.parametrize("mean", ["constant", "linear"])
def test_chi_vanishes_without_curvature(mean):
    mu = linear_function(1.0, -2.0) if mean == "linear" else linear_function(3.0, 0.0)
    chi = chi_surface(_zero_model(mu), grid=Grid.uniform((0, 1), 51))
    assert np.max(np.abs(chi.values)) == 0.0


# -- C1 --------------------------------------------------------------------


@pytest.mark.parametrize("variant", ["proof", "display"])
def test_c1_noise_only(variant):
    assert constant_C1(_zero_model(linear_function(0, 0), 1.0), variant=variant) == pytest.approx(0.6, rel=1e-6)


def test_c1_zero_without_noise_or_variance():
    assert constant_C1(_zero_model(linear_function(0, 0), 0.0)) == 0.0


def test_c1_grid_refinement(rank1_model):
    c501 = constant_C1(rank1_model, grid=Grid.uniform((0, 1), 501))
    c1001 = constant_C1(rank1_model, grid=Grid.uniform((0, 1), 1001))
    assert c501 == pytest.approx(c1001, rel=5e-5)


def test_c1_against_adaptive_quadrature(rank1_model):
    # independent route: the model's own moment functions under adaptive quadrature
    s2 = rank1_model.noise_sd**2
    psi = rank1_model.eigenfunctions[0]

    def integrand(t2, t1):
        m4 = rank1_model.fourth_cross_moment(t1, t1, t2, t2)
        return float((m4 - rank1_model.covariance(t1, t2) ** 2 + s2) * psi(t2) ** 2)

    val = integrate.dblquad(integrand, 0, 1, 0, 1, epsabs=1e-10)[0]
    assert constant_C1(rank1_model) == pytest.approx(0.6 * val, rel=1e-5)


# -- C2 --------------------------------------------------------------------


def _curved_rank1():
    return TrajectoryModel((1.0,), sine_basis(1), mean=sine_mean(1.0, 0.75), noise_sd=0.1)


def test_c2_complement_identity_rank1():
    model = _curved_rank1()
    psi = model.eigenfunctions[0]
    mu = model.mean

    def chi(u, v):
        return 0.5 * KAPPA2 * (psi.d2(u) * psi(v) + psi(u) * psi.d2(v) + mu.d2(u) * mu(v) + mu(u) * mu.d2(v))

    def g(u):
        return integrate.quad(lambda v: float(chi(u, v) * psi(v)), 0, 1, epsabs=1e-12)[0]

    norm2 = integrate.quad(lambda u: g(u) ** 2, 0, 1, epsabs=1e-12)[0]
    proj = integrate.quad(lambda u: g(u) * float(psi(u)), 0, 1, epsabs=1e-12)[0]
    expected = norm2 - proj**2
    assert expected > 1e-3
    assert constant_C2(model) == pytest.approx(expected, rel=1e-4)


def test_c2_zero_for_flat_chi():
    assert constant_C2(_zero_model(linear_function(1.0, 2.0))) == 0.0


def test_c2_gap_scaling():
    mu = sine_mean(1.0, 1.5)
    wide = TrajectoryModel((1.0, 0.5), sine_basis(2), mean=mu)
    narrow = TrajectoryModel((1.0, 0.75), sine_basis(2), mean=mu)
    chi = chi_surface(wide)
    t_wide = c2_terms(wide, chi=chi)[2]
    t_narrow = c2_terms(narrow, chi=chi)[2]
    assert t_wide > 0
    assert t_narrow == pytest.approx(4 * t_wide, rel=1e-12)


def test_c2_null_component_with_curved_mean_rejected():
    with pytest.raises(ModelError):
        constant_C2(_zero_model(sine_mean(1.0, 0.75)))


# -- Sigma, nu, c, d -------------------------------------------------------


def test_c_matrix_identity_for_uniform_design(rank2_model):
    np.testing.assert_allclose(c_matrix(rank2_model, 2), np.eye(2), atol=1e-12)


def test_sigma_zero_for_degenerate_model():
    S = sigma_matrix(_zero_model(linear_function(1, 0)), DesignSpec(m=3), 100, 1, draws=10_000)
    assert np.all(S == 0)


def test_sigma_scales_inverse_n(rank2_model, design3):
    S1 = sigma_matrix(rank2_model, design3, 400, 2, draws=400_000, seed=1)
    S2 = sigma_matrix(rank2_model, design3, 800, 2, draws=400_000, seed=2)
    np.testing.assert_allclose(S2, S1 / 2, rtol=0.05, atol=0.05 * np.max(np.abs(S1)) / 2)
    assert np.array_equal(S1, S1.T)


def test_same_class_moment_against_quadrature(rank1_model):
    mom = quadruple_moments(rank1_model, 1, draws=1_000_000, seed=3)
    g = Grid.uniform((0, 1), 401)
    t = g.nodes
    A, B = np.meshgrid(t, t, indexing="ij")
    psi = rank1_model.eigenfunctions[0]
    beta = rank1_model.fourth_cross_moment(A, B, A, B) - rank1_model.covariance(A, B) ** 2
    val = g.integrate(g.integrate(beta * psi(A) ** 2 * psi(B) ** 2))
    assert mom.same[0, 0] == pytest.approx(val, rel=0.02)


@given(st.integers(2, 40))
def test_overlap_counts_partition(m):
    same, shared, disjoint = _overlap_counts(m)
    P = m * (m - 1) / 2
    assert same + shared + disjoint == pytest.approx(P * P)


def _d_by_quasi_monte_carlo(model, r, s, power=16):
    pts = qmc.Sobol(4, scramble=True, seed=7).random_base2(power)
    a, b, c, d = pts.T
    P = model.eigenfunction_values
    beta = model.fourth_cross_moment(a, b, c, d) - model.covariance(a, b) * model.covariance(c, d)
    return float(np.mean(beta * P(a)[r - 1] * P(b)[r - 1] * P(c)[s - 1] * P(d)[s - 1]))


def test_d_gaussian(rank2_model):
    assert full_curve_limit_d(rank2_model, 1, 1) == pytest.approx(2.0)
    assert full_curve_limit_d(rank2_model, 1, 2) == 0.0
    assert _d_by_quasi_monte_carlo(rank2_model, 1, 1) == pytest.approx(2.0, rel=0.02)
    assert abs(_d_by_quasi_monte_carlo(rank2_model, 1, 2)) < 0.02


def test_d_uniform_scores():
    model = TrajectoryModel((1.0, 0.25), sine_basis(2), score_law=UNIFORM)
    assert full_curve_limit_d(model, 1, 1) == pytest.approx(0.8)
    assert _d_by_quasi_monte_carlo(model, 1, 1) == pytest.approx(0.8, rel=0.03)


def test_d_zero_variance():
    assert full_curve_limit_d(_zero_model(linear_function(0, 0)), 1, 1) == 0.0
    assert np.array_equal(d_matrix(TrajectoryModel((1.0, 0.5), sine_basis(2)), 2), np.diag([2.0, 0.5]))


# -- bundle ----------------------------------------------------------------


def test_asymptotic_constants_bundle(rank2_model, design3):
    const = asymptotic_constants(rank2_model, design3, 800, draws=100_000)
    assert np.array_equal(const.sigma_matrix, const.sigma_matrix.T)
    assert np.array_equal(const.d_matrix, const.d_matrix.T)
    assert np.all(const.C1 > 0)
    # sine eigenfunctions with a flat mean give a diagonal bias operator
    assert np.all(np.abs(const.C2) < 1e-12)
    assert const.N == 800 * 3
    h = 0.25
    assert const.predicted_sq_error(1, h) == pytest.approx(const.C1[0] / (2 * const.N * h))
    assert const.predicted_sq_error(1, h, "unordered") == pytest.approx(const.C1[0] / (const.N * h))
    d = const.to_dict()
    assert d["provenance"]["model"] == "rank2"


def test_predicted_error_undefined_for_null_component():
    assert np.isnan(predicted_sq_error(1.0, 0.0, 100, 0.2, theta_j=0.0))
