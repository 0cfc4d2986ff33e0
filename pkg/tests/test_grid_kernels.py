import numpy as np
import pytest
from scipy import integrate

from sparsefpca import Grid, GridMismatchError, KernelSpec, kernel_moments

from conftest import trapezoid


@pytest.mark.parametrize("family", ["epanechnikov", "quartic", "triangular"])
def test_kernel_integrates_to_one(family):
    k = KernelSpec(family)
    total = integrate.quad(lambda u: float(k(u)), -1, 1, epsabs=1e-14)[0]
    assert abs(total - 1.0) < 1e-10


@pytest.mark.parametrize("family", ["epanechnikov", "quartic", "triangular"])
def test_kernel_symmetric_compact(family):
    k = KernelSpec(family)
    u = np.linspace(-1.5, 1.5, 301)
    np.testing.assert_array_equal(k(u), k(-u))
    assert np.all(k(u[np.abs(u) >= 1]) == 0)


def test_epanechnikov_moments():
    kappa, kappa2 = kernel_moments(KernelSpec("epanechnikov"))
    assert kappa == pytest.approx(0.6, abs=1e-12)
    assert kappa2 == pytest.approx(0.2, abs=1e-12)


def test_quartic_second_moment():
    assert kernel_moments(KernelSpec("quartic"))[1] == pytest.approx(1 / 7, abs=1e-12)


def test_unknown_kernel():
    with pytest.raises(ValueError):
        KernelSpec("gaussian")


def test_grid_covers_interval_with_positive_weights():
    g = Grid.uniform((-1.0, 2.0), 31)
    assert g.nodes[0] == -1.0 and g.nodes[-1] == 2.0
    assert np.all(g.weights > 0)
    assert g.weights.sum() == pytest.approx(3.0, rel=1e-14)


def test_grid_integrate_matches_trapezoid_loop():
    g = Grid(np.sort(np.random.default_rng(0).uniform(0, 1, 40)))
    f = np.cos(3 * g.nodes)
    assert g.integrate(f) == pytest.approx(trapezoid(f, g.nodes), rel=1e-13)


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        Grid.uniform((0, 1), 11).check_same(Grid.uniform((0, 1), 12))
