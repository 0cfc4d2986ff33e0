"""Asymptotic constants of the sparse-data eigen-estimators for a known model.

Everything here is computed from the ground-truth :class:`TrajectoryModel`
and :class:`DesignSpec`; nothing touches simulated panels. The fourth-moment
function is

    beta(u, v, w, z) = E{x(u) x(v) x(w) x(z)} - psi(u, v) psi(w, z)

for the centered process ``x = X - mu``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ModelError
from .grid import DEFAULT_QUADRATURE_SIZE, Grid
from .kernels import KernelSpec, kernel_moments
from .tabulated import SurfaceEstimate

NUMERIC_D2_DIVISIONS = 2000
DEFAULT_MC_DRAWS = 1_000_000
C1_VARIANTS = ("proof", "display")


# --------------------------------------------------------------------------
# second derivatives and the bias surface chi
# --------------------------------------------------------------------------


def second_derivative(fn, t, interval, numeric=True):
    """f''(t), analytic when ``fn`` carries it, else by finite differences.

    The numeric route uses step |I| / 2000: a central three-point rule in the
    interior and a one-sided four-point rule within one step of either end.
    """
    t = np.asarray(t, dtype=float)
    if getattr(fn, "has_d2", False):
        return fn.d2(t)
    if not numeric:
        raise ModelError("function has no analytic second derivative and numeric differentiation is disabled")
    a, b = interval
    step = (b - a) / NUMERIC_D2_DIVISIONS
    out = (fn(t - step) - 2.0 * fn(t) + fn(t + step)) / step**2
    lo = t - step < a
    hi = t + step > b
    if np.any(lo):
        s = t[lo]
        out[lo] = (2 * fn(s) - 5 * fn(s + step) + 4 * fn(s + 2 * step) - fn(s + 3 * step)) / step**2
    if np.any(hi):
        s = t[hi]
        out[hi] = (2 * fn(s) - 5 * fn(s - step) + 4 * fn(s - 2 * step) - fn(s - 3 * step)) / step**2
    return out


def chi_surface(model, kernel=KernelSpec(), grid=None, numeric=True):
    """Leading smoothing-bias surface of the raw-moment estimator.

    chi(u, v) = kappa2 / 2 * {psi_20 + psi_02 + mu''(u) mu(v) + mu(u) mu''(v)}
    where psi_20 differentiates the covariance twice in its first argument.
    """
    if grid is None:
        grid = Grid.uniform(model.interval, DEFAULT_QUADRATURE_SIZE)
    _, kappa2 = kernel_moments(kernel)
    t = grid.nodes
    mu = model.mean(t)
    mu2 = second_derivative(model.mean, t, model.interval, numeric)
    values = np.outer(mu2, mu) + np.outer(mu, mu2)
    if model.rank:
        theta = np.array(model.eigenvalues)
        P = model.eigenfunction_values(t)
        P2 = np.vstack([second_derivative(psi, t, model.interval, numeric) for psi in model.eigenfunctions])
        psi20 = (P2.T * theta) @ P
        values = values + psi20 + psi20.T
    values = 0.5 * kappa2 * values
    values = np.triu(values) + np.triu(values, 1).T
    return SurfaceEstimate(grid, values, bandwidth=None, symmetric=True, meta={"kind": "chi"})


# --------------------------------------------------------------------------
# fourth moments on tabulated eigenfunctions
# --------------------------------------------------------------------------


def _cov_from_values(theta, Pa, Pb):
    return np.einsum("k,k...,k...->...", theta, Pa, Pb)


def _beta_from_values(theta, kurt, Pa, Pb, Pc, Pd):
    """beta(a, b, c, d) from eigenfunction values of shape (r, ...).

    The psi(a, b) psi(c, d) pairing of the fourth moment cancels against the
    subtracted product, leaving the two cross pairings plus excess kurtosis.
    """
    cac = _cov_from_values(theta, Pa, Pc)
    cbd = _cov_from_values(theta, Pb, Pd)
    cad = _cov_from_values(theta, Pa, Pd)
    cbc = _cov_from_values(theta, Pb, Pc)
    out = cac * cbd + cad * cbc
    if np.any(kurt != 0):
        out = out + np.einsum("k,k...->...", kurt, Pa * Pb * Pc * Pd)
    return out


def beta(model, a, b, c, d):
    """beta(a, b, c, d) = E{x(a)x(b)x(c)x(d)} - psi(a, b) psi(c, d)."""
    return model.fourth_cross_moment(a, b, c, d) - model.covariance(a, b) * model.covariance(c, d)


# --------------------------------------------------------------------------
# C1 and C2
# --------------------------------------------------------------------------


def _check_index(model, j):
    if not 1 <= j <= model.rank:
        raise ValueError(f"component index j={j} outside 1..{model.rank}")


def constant_C1(model, kernel=KernelSpec(), j=1, variant="proof", grid=None):
    """Variance constant of the squared L2 error of the j-th eigenfunction.

    ``variant="proof"`` integrates
    kappa {E x(t1)^2 x(t2)^2 - psi(t1, t2)^2 + sigma^2} psi_j(t2)^2 / {f(t1) f(t2)},
    ``variant="display"`` integrates
    kappa {E x(t1)^2 x(t2)^2 + sigma^2} psi_j(t1)^2 / {f(t1) f(t2)}.
    Trapezoid quadrature on ``grid`` (default 1001 nodes) in each argument.
    """
    if variant not in C1_VARIANTS:
        raise ValueError(f"variant must be one of {C1_VARIANTS}")
    _check_index(model, j)
    if grid is None:
        grid = Grid.uniform(model.interval, DEFAULT_QUADRATURE_SIZE)
    kappa, _ = kernel_moments(kernel)
    t = grid.nodes
    theta = np.array(model.eigenvalues)
    kurt = model.excess_kurtosis_terms()
    P = model.eigenfunction_values(t)
    diag = P.T**2 @ theta  # psi(t, t)
    cov = (P.T * theta) @ P
    # E x(t1)^2 x(t2)^2 = psi(t1,t1) psi(t2,t2) + 2 psi(t1,t2)^2 + sum_k kurt_k psi_k(t1)^2 psi_k(t2)^2
    m4 = np.outer(diag, diag) + 2.0 * cov**2 + ((P**2).T * kurt) @ P**2
    sigma2 = model.noise_sd**2
    finv = 1.0 / model.density.pdf(t)
    pj2 = P[j - 1] ** 2
    if variant == "proof":
        integrand = (m4 - cov**2 + sigma2) * np.outer(finv, finv * pj2)
    else:
        integrand = (m4 + sigma2) * np.outer(finv * pj2, finv)
    return float(kappa * grid.integrate(grid.integrate(integrand)))


def c2_terms(model, kernel=KernelSpec(), j=1, grid=None, chi=None):
    """Per-component contributions to the bias constant of the j-th eigenfunction.

    Returns a dict mapping each model component k != j to
    (theta_j - theta_k)^-2 (int chi psi_j psi_k)^2, plus the key
    ``"complement"`` for the part of chi psi_j orthogonal to all model
    components, weighted by theta_j^-2.
    """
    _check_index(model, j)
    if chi is None:
        chi = chi_surface(model, kernel, grid)
    grid = chi.grid
    theta = np.array(model.eigenvalues)
    P = model.eigenfunction_values(grid.nodes)
    g = grid.integrate(chi.values * P[j - 1][None, :])  # (int chi psi_j)(u)
    total = grid.inner(g, g)
    a = grid.integrate(P * g[None, :])
    terms = {}
    for k in range(model.rank):
        if k == j - 1:
            continue
        gap = theta[j - 1] - theta[k]
        if gap == 0:
            raise ModelError(f"tied eigenvalues theta_{j} = theta_{k + 1}")
        terms[k + 1] = float(a[k] ** 2 / gap**2)
    complement = max(total - float(np.sum(a**2)), 0.0)
    if theta[j - 1] == 0:
        # a null component ties with the complement; only a vanishing projection is admissible
        if complement > 1e-14 * max(total, 1.0):
            raise ModelError(f"theta_{j} = 0 ties with the zero eigenvalues of the complement")
        terms["complement"] = 0.0
    else:
        terms["complement"] = complement / theta[j - 1] ** 2
    return terms


def constant_C2(model, kernel=KernelSpec(), j=1, grid=None, chi=None):
    """sum_{k != j} (theta_j - theta_k)^-2 (int chi psi_j psi_k)^2, complement included exactly."""
    return float(sum(c2_terms(model, kernel, j, grid, chi).values()))


# --------------------------------------------------------------------------
# eigenvalue covariance
# --------------------------------------------------------------------------


def full_curve_limit_d(model, r, s):
    """d(r, s), the fully observed, noiseless limit of n times the eigenvalue covariance.

    With independent scores the four-fold integral of beta against
    psi_r psi_r psi_s psi_s collapses to E(zeta_r^2 zeta_s^2) - theta_r theta_s.
    """
    _check_index(model, r)
    _check_index(model, s)
    if r != s:
        return 0.0
    theta = model.eigenvalues[r - 1]
    fourth = (model.score_law.excess_fourth_moment() + 3.0) * theta**2
    return float(fourth - theta**2)


def d_matrix(model, j0):
    j0 = min(j0, model.rank)
    return np.array([[full_curve_limit_d(model, r, s) for s in range(1, j0 + 1)] for r in range(1, j0 + 1)])


def c_matrix(model, j0, grid=None):
    """c(r, s) = int psi_r psi_s / f."""
    if grid is None:
        grid = Grid.uniform(model.interval, DEFAULT_QUADRATURE_SIZE)
    j0 = min(j0, model.rank)
    P = model.eigenfunction_values(grid.nodes)[:j0]
    finv = 1.0 / model.density.pdf(grid.nodes)
    return (P * grid.weights * finv) @ P.T


@dataclass(frozen=True)
class QuadrupleMoments:
    """Monte Carlo design expectations entering nu(r, s).

    ``same``: both index pairs identical; ``shared``: exactly one index in
    common; ``disjoint``: no index in common. Each is a (j0, j0) matrix.
    """

    same: np.ndarray
    shared: np.ndarray
    disjoint: np.ndarray
    draws: int
    seed: int


def quadruple_moments(model, j0, draws=DEFAULT_MC_DRAWS, seed=0, chunk=200_000):
    """Seeded Monte Carlo estimates of the three overlap classes.

    Times are drawn from the design density and weighted by the inverse
    density of every design point entering the product, so each class
    expectation is an integral against Lebesgue measure.
    """
    j0 = min(j0, model.rank)
    theta = np.array(model.eigenvalues)
    kurt = model.excess_kurtosis_terms()
    rng = np.random.default_rng(seed)
    same = np.zeros((j0, j0))
    shared = np.zeros((j0, j0))
    disjoint = np.zeros((j0, j0))
    done = 0
    while done < draws:
        size = min(chunk, draws - done)
        T = model.density.sample(rng, 4 * size).reshape(4, size)
        w = 1.0 / model.density.pdf(T)
        P = [model.eigenfunction_values(T[i]) for i in range(4)]
        Pr = [p[:j0] for p in P]
        # identical pairs: (a, b), (a, b); weight 1 / f(a) f(b) after sampling a, b ~ f
        b1 = _beta_from_values(theta, kurt, P[0], P[1], P[0], P[1]) * w[0] * w[1]
        x = Pr[0] * Pr[1]
        same += (x * b1) @ x.T
        # one shared index: (a, b), (a, c)
        b2 = _beta_from_values(theta, kurt, P[0], P[1], P[0], P[2]) * w[0] * w[1] * w[2]
        shared += (Pr[0] * Pr[1] * b2) @ (Pr[0] * Pr[2]).T
        # disjoint: (a, b), (c, d)
        b3 = _beta_from_values(theta, kurt, P[0], P[1], P[2], P[3]) * w[0] * w[1] * w[2] * w[3]
        disjoint += (Pr[0] * Pr[1] * b3) @ (Pr[2] * Pr[3]).T
        done += size
    sym = lambda a: 0.5 * (a + a.T)  # noqa: E731
    return QuadrupleMoments(sym(same / draws), sym(shared / draws), sym(disjoint / draws), draws, seed)


def _overlap_counts(m):
    """Numbers of (pair, pair) combinations that coincide, share one index, or are disjoint."""
    P = m * (m - 1) / 2
    return P, 2 * P * (m - 2), P * (m - 2) * (m - 3) / 2


def expected_pair_count(design, n):
    vals, probs = design.m_distribution(n)
    return float(n * np.sum(probs * vals * (vals - 1) / 2))


def nu_matrix(model, design, n, j0, moments=None, draws=DEFAULT_MC_DRAWS, seed=0):
    """nu(r, s) summed over subjects, averaged over the per-subject count m."""
    if moments is None:
        moments = quadruple_moments(model, j0, draws, seed)
    vals, probs = design.m_distribution(n)
    out = np.zeros_like(moments.same)
    for m, p in zip(vals, probs):
        k_same, k_shared, k_disjoint = _overlap_counts(int(m))
        out += p * (k_same * moments.same + k_shared * moments.shared + k_disjoint * moments.disjoint)
    return n * out


def sigma_matrix(model, design, n, j0=3, moments=None, draws=DEFAULT_MC_DRAWS, seed=0):
    """Asymptotic covariance of the leading eigenvalue estimates,
    N^-2 {nu(r, s) + N sigma^2 c(r, s)^2} with N the expected pair count."""
    N = expected_pair_count(design, n)
    if N <= 0:
        raise ValueError("design yields no within-subject pairs")
    nu = nu_matrix(model, design, n, j0, moments, draws, seed)
    c = c_matrix(model, j0)
    S = (nu + N * model.noise_sd**2 * c**2) / N**2
    return 0.5 * (S + S.T)


# --------------------------------------------------------------------------
# bundle
# --------------------------------------------------------------------------


PAIR_CONVENTIONS = ("ordered", "unordered")


def predicted_sq_error(C1, C2, N, h, theta_j=1.0):
    """Leading terms theta_j^-2 C1 / (N h) + C2 h^4 of the squared eigenfunction error.

    NaN when ``theta_j == 0``: the eigenfunction is not identified.
    """
    if theta_j == 0:
        return float("nan")
    return float(C1 / (theta_j**2 * N * h) + C2 * h**4)


def pair_total(design, n, convention="ordered"):
    """Expected number of within-subject pairs, ordered (sum m(m-1)) or unordered (half that)."""
    if convention not in PAIR_CONVENTIONS:
        raise ValueError(f"convention must be one of {PAIR_CONVENTIONS}")
    N = expected_pair_count(design, n)
    return 2.0 * N if convention == "ordered" else N


@dataclass(frozen=True, eq=False)
class AsymptoticConstants:
    C1: np.ndarray
    C2: np.ndarray
    chi: SurfaceEstimate
    sigma_matrix: np.ndarray
    d_matrix: np.ndarray
    N: float
    n: int
    theta: tuple = ()
    c1_variant: str = "proof"
    provenance: dict = field(default_factory=dict)

    def predicted_sq_error(self, j, h, convention="ordered"):
        """Oracle for the mean squared L2 error of the j-th eigenfunction at bandwidth ``h``.

        ``convention`` picks the pair total in the variance term: ``"ordered"``
        counts sum m_i(m_i - 1), ``"unordered"`` half of that.
        """
        if convention not in PAIR_CONVENTIONS:
            raise ValueError(f"convention must be one of {PAIR_CONVENTIONS}")
        N = 2.0 * self.N if convention == "ordered" else self.N
        return predicted_sq_error(self.C1[j - 1], self.C2[j - 1], N, h, self.theta[j - 1])

    def to_dict(self):
        return {
            "C1": [float(x) for x in self.C1],
            "C1_variant": self.c1_variant,
            "C2": [float(x) for x in self.C2],
            "sigma_matrix": self.sigma_matrix.tolist(),
            "d_matrix": self.d_matrix.tolist(),
            "N": self.N,
            "n": self.n,
            "theta": list(self.theta),
            "provenance": self.provenance,
        }


def asymptotic_constants(
    model, design, n, kernel=KernelSpec(), j0=3, c1_variant="proof", draws=DEFAULT_MC_DRAWS, seed=0, grid=None
):
    """Every constant needed to compare a Monte Carlo study with its first-order theory."""
    j0 = min(j0, model.rank)
    if j0 < 1:
        raise ValueError("model has no components")
    chi = chi_surface(model, kernel, grid)
    C1 = np.array([constant_C1(model, kernel, j, c1_variant, chi.grid) for j in range(1, j0 + 1)])
    C2 = np.array([constant_C2(model, kernel, j, chi=chi) for j in range(1, j0 + 1)])
    S = sigma_matrix(model, design, n, j0, draws=draws, seed=seed)
    return AsymptoticConstants(
        C1=C1,
        C2=C2,
        chi=chi,
        sigma_matrix=S,
        d_matrix=d_matrix(model, j0),
        N=expected_pair_count(design, n),
        n=int(n),
        theta=tuple(model.eigenvalues[:j0]),
        c1_variant=c1_variant,
        provenance={"model": model.tag, "design": design.spec, "kernel": kernel.family, "mc_draws": draws, "seed": seed},
    )
