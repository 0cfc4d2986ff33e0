import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsefpca import (
    UNIFORM,
    BetaMixtureDensity,
    DesignSpec,
    Grid,
    ModelError,
    SmoothFunction,
    SparsePanel,
    TrajectoryModel,
    UnsupportedMomentError,
    constant_function,
    cosine_basis,
    fourth_moment,
    simulate_panel,
    sine_basis,
    true_covariance,
)
from sparsefpca.model import ScoreLaw


def test_constant_process_gives_constant_observations(constant_model):
    panel = simulate_panel(constant_model, DesignSpec(m=5), 50, seed=1)
    for _, y in panel.subjects():
        assert np.all(y == 3.0)


def test_score_variance_law_of_large_numbers():
    model = TrajectoryModel((1.0,), sine_basis(1))
    panel = simulate_panel(model, DesignSpec(m=2), 20000, seed=11)
    v = np.var(panel.scores[:, 0], ddof=1)
    assert 0.97 <= v <= 1.03


def test_regular_design_points():
    model = TrajectoryModel((1.0,), sine_basis(1))
    panel = simulate_panel(model, DesignSpec(kind="regular", m=4), 10, seed=0)
    for t, _ in panel.subjects():
        assert t.tolist() == [0.25, 0.5, 0.75, 1.0]


def test_same_seed_same_panel(rank2_model, design3):
    a = simulate_panel(rank2_model, design3, 40, seed=123)
    b = simulate_panel(rank2_model, design3, 40, seed=123)
    for (ta, ya), (tb, yb) in zip(a.subjects(), b.subjects()):
        assert ta.tobytes() == tb.tobytes() and ya.tobytes() == yb.tobytes()
    c = simulate_panel(rank2_model, design3, 40, seed=124)
    assert not np.array_equal(a.flat()[1], c.flat()[1])


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(1, 30),
    lo=st.integers(1, 4),
    extra=st.integers(0, 4),
    seed=st.integers(0, 2**32),
)
def test_panel_invariants(n, lo, extra, seed):
    model = TrajectoryModel((1.0, 0.5), sine_basis(2), noise_sd=0.1, density=BetaMixtureDensity(2.0, 3.0, 0.5))
    panel = simulate_panel(model, DesignSpec(m_range=(lo, lo + extra)), n, seed)
    assert panel.n == n
    assert np.all((panel.counts >= lo) & (panel.counts <= lo + extra))
    for t, y in panel.subjects():
        assert np.all((t >= 0) & (t <= 1)) and np.all(np.diff(t) >= 0)
        assert t.shape == y.shape
    m = panel.counts
    assert panel.pair_count == int(np.sum(m * (m - 1) // 2))


def test_m_power_rule():
    d = DesignSpec(m_power=(1.0, 0.35))
    assert d.m_for_n(800) == int(np.ceil(800**0.35))


def test_ties_rejected():
    with pytest.raises(ModelError, match="ties"):
        TrajectoryModel((1.0, 1.0), sine_basis(2))


def test_non_normal_basis_rejected():
    f = SmoothFunction(lambda t: 2.0 * np.sin(np.pi * t))
    with pytest.raises(ModelError, match="orthonormal"):
        TrajectoryModel((1.0,), (f,))


def test_density_must_be_positive():
    with pytest.raises(ValueError):
        BetaMixtureDensity(2.0, 2.0, 1.0)


def test_covariance_at_midpoint():
    model = TrajectoryModel((1.0,), sine_basis(1))
    assert model.covariance(0.5, 0.5) == pytest.approx(2.0, abs=1e-15)


def test_empty_model_zero_surface(grid101):
    model = TrajectoryModel((), ())
    assert np.all(true_covariance(model, grid101).values == 0.0)


def test_covariance_matches_double_loop(rank2_model, grid101):
    surf = true_covariance(rank2_model, grid101).values
    nodes = grid101.nodes
    oracle = np.zeros_like(surf)
    for i, u in enumerate(nodes):
        for j, v in enumerate(nodes):
            s = 0.0
            for k, theta in enumerate(rank2_model.eigenvalues):
                s += theta * 2.0 * np.sin((k + 1) * np.pi * u) * np.sin((k + 1) * np.pi * v)
            oracle[i, j] = s
    np.testing.assert_allclose(surf, oracle, rtol=0, atol=1e-14)
    assert np.array_equal(surf, surf.T)


def test_gaussian_fourth_moment_on_diagonal():
    model = TrajectoryModel((1.0,), sine_basis(1))
    assert fourth_moment(model, 0.5, 0.5) == pytest.approx(12.0, rel=1e-14)


def test_fourth_moment_zero_variance(constant_model):
    assert fourth_moment(constant_model, 0.3, 0.7) == 0.0


def test_fourth_moment_monte_carlo(rank2_model):
    rng = np.random.default_rng(2024)
    z = rng.standard_normal((1_000_000, 2)) * np.sqrt([1.0, 0.25])
    P = rank2_model.eigenfunction_values(np.array([0.3, 0.7]))
    x = z @ P
    sample = x[:, 0] ** 2 * x[:, 1] ** 2
    se = sample.std(ddof=1) / np.sqrt(sample.size)
    assert abs(fourth_moment(rank2_model, 0.3, 0.7) - sample.mean()) < 3 * se


def test_uniform_scores_fourth_moment_against_monte_carlo():
    model = TrajectoryModel((1.0, 0.25), cosine_basis(3)[1:], score_law=UNIFORM)
    rng = np.random.default_rng(5)
    z = UNIFORM.sample(rng, (1_000_000, 2)) * np.sqrt([1.0, 0.25])
    P = model.eigenfunction_values(np.array([0.2, 0.6]))
    x = z @ P
    sample = x[:, 0] ** 2 * x[:, 1] ** 2
    se = sample.std(ddof=1) / np.sqrt(sample.size)
    assert abs(fourth_moment(model, 0.2, 0.6) - sample.mean()) < 3 * se


def test_unsupported_score_law():
    law = ScoreLaw("custom", lambda rng, size: rng.standard_normal(size), None)
    model = TrajectoryModel((1.0,), sine_basis(1), score_law=law)
    with pytest.raises(UnsupportedMomentError):
        fourth_moment(model, 0.2, 0.4)


def test_panel_rejects_times_outside_interval():
    with pytest.raises(ValueError):
        SparsePanel([np.array([0.2, 1.4])], [np.array([1.0, 2.0])])


def test_single_observation_subjects_do_not_pair():
    panel = SparsePanel([np.array([0.1]), np.array([0.2, 0.4, 0.9])], [np.array([1.0]), np.ones(3)])
    tj, tk, z = panel.ordered_pairs()
    assert tj.size == 6 and panel.pair_count == 3
    assert list(panel.sparse_subjects) == [0]


def test_with_component_resorts():
    model = TrajectoryModel((1.0, 0.25), sine_basis(2))
    from sparsefpca.model import sine_eigenfunction

    bigger = model.with_component(2.0, sine_eigenfunction(6))
    assert bigger.eigenvalues == (2.0, 1.0, 0.25)


def test_constant_mean_function():
    assert np.all(constant_function(2.5)(np.linspace(0, 1, 7)) == 2.5)
