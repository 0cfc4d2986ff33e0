"""Ground-truth trajectory model, sampling designs and sparse panels.

A :class:`TrajectoryModel` is a finite Karhunen-Loeve process

    X(t) = mu(t) + sum_k zeta_k psi_k(t),   var(zeta_k) = theta_k,

observed as ``Y = X(T) + eps`` at times ``T`` drawn from a design density
(random design) or at the equispaced points ``a + j L / m`` (regular design).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import ModelError, UnsupportedMomentError
from .grid import DEFAULT_QUADRATURE_SIZE, Grid
from .tabulated import SurfaceEstimate

ORTHONORMALITY_TOL = 1e-5


# --------------------------------------------------------------------------
# smooth functions with (optional) analytic second derivatives
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SmoothFunction:
    """A vectorized callable with an optional analytic second derivative.

    ``spec`` is a JSON-friendly description used when the function is one of
    the built-ins; custom functions leave it ``None``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    second_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    spec: Optional[dict] = None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(self.value(t), dtype=float), t.shape).copy()

    def d2(self, t):
        if self.second_derivative is None:
            raise AttributeError("no analytic second derivative")
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(self.second_derivative(t), dtype=float), t.shape).copy()

    @property
    def has_d2(self):
        return self.second_derivative is not None


def constant_function(c=0.0):
    c = float(c)
    return SmoothFunction(
        lambda t: np.full_like(t, c),
        lambda t: np.zeros_like(t),
        {"kind": "constant", "value": c},
    )


def linear_function(intercept, slope):
    a, b = float(intercept), float(slope)
    return SmoothFunction(
        lambda t: a + b * t,
        lambda t: np.zeros_like(t),
        {"kind": "linear", "intercept": a, "slope": b},
    )


def sine_mean(amplitude=1.0, frequency=1.0, offset=0.0):
    """``offset + amplitude * sin(2 pi frequency t)``."""
    A, w, c = float(amplitude), 2 * math.pi * float(frequency), float(offset)
    return SmoothFunction(
        lambda t: c + A * np.sin(w * t),
        lambda t: -A * w * w * np.sin(w * t),
        {"kind": "sine", "amplitude": A, "frequency": float(frequency), "offset": c},
    )


def sine_eigenfunction(k, interval=(0.0, 1.0)):
    """``sqrt(2/L) sin(k pi (t - a) / L)``, unit norm on ``interval``."""
    a, b = map(float, interval)
    L = b - a
    w = k * math.pi / L
    s = math.sqrt(2.0 / L)
    return SmoothFunction(
        lambda t: s * np.sin(w * (t - a)),
        lambda t: -s * w * w * np.sin(w * (t - a)),
        {"kind": "sine", "k": int(k)},
    )


def cosine_eigenfunction(k, interval=(0.0, 1.0)):
    """``1/sqrt(L)`` for ``k = 0``, else ``sqrt(2/L) cos(k pi (t - a) / L)``."""
    a, b = map(float, interval)
    L = b - a
    if k == 0:
        s = 1.0 / math.sqrt(L)
        return SmoothFunction(
            lambda t: np.full_like(t, s), lambda t: np.zeros_like(t), {"kind": "cosine", "k": 0}
        )
    w = k * math.pi / L
    s = math.sqrt(2.0 / L)
    return SmoothFunction(
        lambda t: s * np.cos(w * (t - a)),
        lambda t: -s * w * w * np.cos(w * (t - a)),
        {"kind": "cosine", "k": int(k)},
    )


def sine_basis(r, interval=(0.0, 1.0)):
    return tuple(sine_eigenfunction(k, interval) for k in range(1, r + 1))


def cosine_basis(r, interval=(0.0, 1.0)):
    return tuple(cosine_eigenfunction(k, interval) for k in range(r))


# --------------------------------------------------------------------------
# design densities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformDensity:
    interval: tuple = (0.0, 1.0)

    def pdf(self, t):
        a, b = self.interval
        return np.full(np.shape(t), 1.0 / (b - a))

    def sample(self, rng, size):
        a, b = self.interval
        return rng.uniform(a, b, size)

    @property
    def spec(self):
        return {"kind": "uniform"}


@dataclass(frozen=True)
class BetaMixtureDensity:
    """``(1 - weight) * uniform + weight * Beta(a, b)`` mapped onto ``interval``.

    The uniform part keeps the density bounded away from zero.
    """

    a: float = 2.0
    b: float = 2.0
    weight: float = 0.5
    interval: tuple = (0.0, 1.0)

    def __post_init__(self):
        if not 0.0 <= self.weight < 1.0:
            raise ModelError("beta mixture weight must lie in [0, 1)")
        if self.a < 1.0 or self.b < 1.0:
            raise ModelError("beta shape parameters below 1 give an unbounded density")

    def pdf(self, t):
        from scipy import stats

        lo, hi = self.interval
        L = hi - lo
        s = (np.asarray(t, dtype=float) - lo) / L
        return ((1.0 - self.weight) + self.weight * stats.beta.pdf(s, self.a, self.b)) / L

    def sample(self, rng, size):
        lo, hi = self.interval
        pick = rng.uniform(size=size) < self.weight
        s = np.where(pick, rng.beta(self.a, self.b, size), rng.uniform(size=size))
        return lo + (hi - lo) * s

    @property
    def spec(self):
        return {"kind": "beta_mixture", "a": self.a, "b": self.b, "weight": self.weight}


# --------------------------------------------------------------------------
# score laws
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScoreLaw:
    """Zero-mean, unit-variance law scaled by sqrt(theta_k) per component.

    ``standardized_fourth_moment`` is E(Z^4) for the unit-variance draw; a
    ``None`` value means fourth-moment oracles are unavailable.
    """

    name: str
    sampler: Callable[[np.random.Generator, tuple], np.ndarray]
    standardized_fourth_moment: Optional[float]

    def sample(self, rng, size):
        return self.sampler(rng, size)

    def excess_fourth_moment(self):
        if self.standardized_fourth_moment is None:
            raise UnsupportedMomentError(f"score law {self.name!r} has no known fourth moment")
        return self.standardized_fourth_moment - 3.0


GAUSSIAN = ScoreLaw("gaussian", lambda rng, size: rng.standard_normal(size), 3.0)
UNIFORM = ScoreLaw(
    "uniform", lambda rng, size: rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size), 9.0 / 5.0
)
SCORE_LAWS = {"gaussian": GAUSSIAN, "uniform": UNIFORM}


# --------------------------------------------------------------------------
# the model
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrajectoryModel:
    """Finite-rank ground-truth process with i.i.d. measurement error.

    Parameters
    ----------
    eigenvalues : sequence of float
        theta_1 > theta_2 > ... >= 0. Ties are rejected.
    eigenfunctions : sequence of SmoothFunction
        Orthonormal on ``interval``.
    mean : SmoothFunction
    noise_sd : float
        Standard deviation sigma of the measurement errors.
    score_law : ScoreLaw
    density : UniformDensity or BetaMixtureDensity
        Density of the observation times under a random design.
    interval : (float, float)
    tag : str
        Free-form label carried into panel provenance.
    """

    eigenvalues: tuple = ()
    eigenfunctions: tuple = ()
    mean: SmoothFunction = field(default_factory=constant_function)
    noise_sd: float = 0.0
    score_law: ScoreLaw = GAUSSIAN
    density: object = None
    interval: tuple = (0.0, 1.0)
    tag: str = "model"

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", tuple(float(x) for x in self.eigenvalues))
        object.__setattr__(self, "eigenfunctions", tuple(self.eigenfunctions))
        object.__setattr__(self, "interval", tuple(float(x) for x in self.interval))
        if self.density is None:
            object.__setattr__(self, "density", UniformDensity(self.interval))
        self._validate()

    def _validate(self):
        theta = np.array(self.eigenvalues)
        a, b = self.interval
        if not b > a:
            raise ModelError("interval must have positive length")
        if len(theta) != len(self.eigenfunctions):
            raise ModelError(
                f"{len(theta)} eigenvalues but {len(self.eigenfunctions)} eigenfunctions"
            )
        if np.any(theta < 0) or not np.all(np.isfinite(theta)):
            raise ModelError("eigenvalues must be finite and nonnegative")
        if np.any(np.diff(theta) >= 0):
            raise ModelError(f"eigenvalues must be strictly decreasing (no ties): {self.eigenvalues}")
        if self.noise_sd < 0:
            raise ModelError("noise_sd must be nonnegative")
        grid = Grid.uniform(self.interval, DEFAULT_QUADRATURE_SIZE)
        resid = self.orthonormality_residual(grid)
        if resid > ORTHONORMALITY_TOL:
            raise ModelError(f"eigenfunctions are not orthonormal: max |<psi_j, psi_k> - delta_jk| = {resid:.3e}")
        f = self.density.pdf(grid.nodes)
        if np.min(f) <= 0:
            raise ModelError("design density must be bounded away from zero on the interval")
        mass = grid.integrate(f)
        if abs(mass - 1.0) > 1e-6:
            raise ModelError(f"design density integrates to {mass:.8f}, not 1")

    # -- basic quantities ---------------------------------------------------

    @property
    def rank(self):
        return len(self.eigenvalues)

    def orthonormality_residual(self, grid):
        if self.rank == 0:
            return 0.0
        P = self.eigenfunction_values(grid.nodes)
        gram = (P * grid.weights) @ P.T
        return float(np.max(np.abs(gram - np.eye(self.rank))))

    def eigenfunction_values(self, t):
        """Array of shape (r, len(t)) with psi_k(t)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.rank == 0:
            return np.zeros((0, t.size))
        return np.vstack([psi(t) for psi in self.eigenfunctions])

    def eigenfunction_second_derivatives(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.rank == 0:
            return np.zeros((0, t.size))
        return np.vstack([psi.d2(t) for psi in self.eigenfunctions])

    def covariance(self, u, v):
        """psi(u, v) = sum_k theta_k psi_k(u) psi_k(v), broadcasting u against v."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.zeros(np.broadcast(u, v).shape)
        for theta, psi in zip(self.eigenvalues, self.eigenfunctions):
            out = out + theta * psi(u) * psi(v)
        return out

    def excess_kurtosis_terms(self):
        """E(zeta_k^4) - 3 theta_k^2 for every component."""
        excess = self.score_law.excess_fourth_moment()
        return np.array(self.eigenvalues) ** 2 * excess

    def fourth_cross_moment(self, a, b, c, d):
        """E{x(a) x(b) x(c) x(d)} for the centered process x = X - mu.

        Independent scores give the Gaussian (Isserlis) terms plus a
        per-component excess-kurtosis correction.
        """
        kurt = self.excess_kurtosis_terms()
        out = (
            self.covariance(a, b) * self.covariance(c, d)
            + self.covariance(a, c) * self.covariance(b, d)
            + self.covariance(a, d) * self.covariance(b, c)
        )
        for k, psi in enumerate(self.eigenfunctions):
            if kurt[k] != 0.0:
                out = out + kurt[k] * psi(a) * psi(b) * psi(c) * psi(d)
        return out

    def curves(self, scores, t):
        """True trajectories X_i(t); ``scores`` has shape (n, r)."""
        scores = np.asarray(scores, dtype=float).reshape(-1, self.rank)
        return self.mean(t)[None, :] + scores @ self.eigenfunction_values(t)

    def with_component(self, eigenvalue, eigenfunction, tag=None):
        """Copy of the model with one extra component, re-sorted by eigenvalue."""
        pairs = sorted(
            list(zip(self.eigenvalues, self.eigenfunctions)) + [(float(eigenvalue), eigenfunction)],
            key=lambda p: -p[0],
        )
        return TrajectoryModel(
            eigenvalues=tuple(p[0] for p in pairs),
            eigenfunctions=tuple(p[1] for p in pairs),
            mean=self.mean,
            noise_sd=self.noise_sd,
            score_law=self.score_law,
            density=self.density,
            interval=self.interval,
            tag=tag or self.tag + "+component",
        )


def true_covariance(model, grid):
    """Tabulate psi(u, v) on ``grid``; the result is exactly symmetric."""
    P = model.eigenfunction_values(grid.nodes)
    values = (P.T * np.array(model.eigenvalues)) @ P if model.rank else np.zeros((grid.size,) * 2)
    upper = np.triu(values)
    values = upper + np.triu(values, 1).T
    return SurfaceEstimate(grid, values, bandwidth=None, symmetric=True)


def fourth_moment(model, t1, t2):
    """E{x(t1)^2 x(t2)^2} for the centered process.

    Raises
    ------
    UnsupportedMomentError
        If the score law has no known fourth moment.
    """
    return model.fourth_cross_moment(t1, t1, t2, t2)


# --------------------------------------------------------------------------
# designs and panels
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignSpec:
    """Sampling plan for observation times.

    Exactly one of ``m``, ``m_range`` or ``m_power`` sets the number of
    observations per subject: a fixed count, a per-subject uniform draw from
    the inclusive range, or ``ceil(c * n**a)`` for ``m_power = (c, a)``.
    """

    kind: str = "random"
    m: Optional[int] = None
    m_range: Optional[tuple] = None
    m_power: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("random", "regular"):
            raise ValueError("design kind must be 'random' or 'regular'")
        given = [x is not None for x in (self.m, self.m_range, self.m_power)]
        if sum(given) != 1:
            raise ValueError("specify exactly one of m, m_range, m_power")
        if self.kind == "regular" and self.m_range is not None:
            raise ValueError("a regular design needs a common m for every subject")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be at least 1")
        if self.m_range is not None:
            lo, hi = self.m_range
            if not 1 <= lo <= hi:
                raise ValueError("m_range must satisfy 1 <= lo <= hi")

    def m_for_n(self, n):
        """Common m for sample size ``n`` (not defined for ``m_range``)."""
        if self.m is not None:
            return int(self.m)
        if self.m_power is not None:
            c, a = self.m_power
            return max(1, int(math.ceil(c * n**a - 1e-12)))
        raise ValueError("m varies per subject for an m_range design")

    def m_distribution(self, n):
        """(values, probabilities) of the per-subject count m."""
        if self.m_range is not None:
            lo, hi = self.m_range
            vals = np.arange(lo, hi + 1)
            return vals, np.full(vals.size, 1.0 / vals.size)
        return np.array([self.m_for_n(n)]), np.array([1.0])

    def draw_counts(self, rng, n):
        if self.m_range is not None:
            lo, hi = self.m_range
            return rng.integers(lo, hi + 1, size=n)
        return np.full(n, self.m_for_n(n), dtype=int)

    def regular_points(self, m, interval):
        a, b = interval
        return a + (b - a) * np.arange(1, m + 1) / m

    @property
    def spec(self):
        d = {"kind": self.kind}
        if self.m is not None:
            d["m"] = self.m
        if self.m_range is not None:
            d["m_range"] = list(self.m_range)
        if self.m_power is not None:
            d["m_power"] = list(self.m_power)
        return d


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class SparsePanel:
    """n subjects, subject i holding m_i (time, value) observations.

    Parameters
    ----------
    times, values : sequence of 1-d arrays
        One array per subject, equal lengths within a subject.
    interval : (float, float)
        Domain every time must lie in.
    scores : array of shape (n, r), optional
        Realized Karhunen-Loeve scores, kept for simulated panels.
    seed : int, optional
    tag : str, optional
    labels : sequence, optional
        Subject identifiers; defaults to 0..n-1.
    """

    def __init__(self, times, values, interval=(0.0, 1.0), scores=None, seed=None, tag=None, labels=None):
        if len(times) != len(values):
            raise ValueError("times and values must list the same subjects")
        if len(times) == 0:
            raise ValueError("a panel needs at least one subject")
        a, b = map(float, interval)
        ts, ys = [], []
        for i, (t, y) in enumerate(zip(times, values)):
            t = _readonly(np.atleast_1d(t))
            y = _readonly(np.atleast_1d(y))
            if t.shape != y.shape or t.ndim != 1:
                raise ValueError(f"subject {i}: times and values differ in shape")
            if t.size < 1:
                raise ValueError(f"subject {i}: every subject needs m_i >= 1")
            if np.any(t < a) or np.any(t > b):
                raise ValueError(f"subject {i}: observation time outside [{a}, {b}]")
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
                raise ValueError(f"subject {i}: non-finite observation")
            ts.append(t)
            ys.append(y)
        self.times = tuple(ts)
        self.values = tuple(ys)
        self.interval = (a, b)
        self.scores = None if scores is None else _readonly(scores)
        self.seed = seed
        self.tag = tag
        self.labels = tuple(range(len(ts))) if labels is None else tuple(labels)
        self._flat = None
        self._pairs = None

    @property
    def n(self):
        return len(self.times)

    @property
    def counts(self):
        return np.array([t.size for t in self.times])

    @property
    def pair_count(self):
        """N = sum_i m_i (m_i - 1) / 2."""
        m = self.counts
        return int(np.sum(m * (m - 1) // 2))

    @property
    def sparse_subjects(self):
        """Indices of subjects with a single observation (mean-only)."""
        return [i for i, t in enumerate(self.times) if t.size < 2]

    def subjects(self):
        return zip(self.times, self.values)

    def flat(self):
        """Concatenated (t, y) arrays in subject order."""
        if self._flat is None:
            self._flat = (np.concatenate(self.times), np.concatenate(self.values))
        return self._flat

    def ordered_pairs(self):
        """Within-subject pairs (j, k), j != k, in subject order.

        Returns arrays ``(t_j, t_k, y_j * y_k)``; every unordered pair appears
        in both orientations and diagonal pairs j = k never appear.
        """
        if self._pairs is None:
            tj, tk, z = [], [], []
            patterns = {}
            for t, y in zip(self.times, self.values):
                m = t.size
                if m < 2:
                    continue
                if m not in patterns:
                    J, K = np.nonzero(~np.eye(m, dtype=bool))
                    patterns[m] = (J, K)
                J, K = patterns[m]
                tj.append(t[J])
                tk.append(t[K])
                z.append(y[J] * y[K])
            if not tj:
                self._pairs = (np.empty(0), np.empty(0), np.empty(0))
            else:
                self._pairs = (np.concatenate(tj), np.concatenate(tk), np.concatenate(z))
        return self._pairs

    def true_curves(self, model, grid):
        """X_i on ``grid`` from the stored scores (simulated panels only)."""
        if self.scores is None:
            raise ValueError("panel carries no realized scores")
        return model.curves(self.scores, grid.nodes)


def simulate_panel(model, design, n, seed):
    """Draw a sparse noisy panel of ``n`` subjects from ``model`` under ``design``.

    The result is a pure function of the arguments. Times are sorted within
    each subject.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    counts = design.draw_counts(rng, n)
    total = int(counts.sum())
    if design.kind == "regular":
        m = int(counts[0])
        T = np.tile(design.regular_points(m, model.interval), n)
    else:
        T = model.density.sample(rng, total)
    Z = model.score_law.sample(rng, (n, model.rank)) if model.rank else np.zeros((n, 0))
    scores = Z * np.sqrt(np.array(model.eigenvalues))[None, :]
    eps = model.noise_sd * rng.standard_normal(total) if model.noise_sd > 0 else np.zeros(total)

    subject = np.repeat(np.arange(n), counts)
    order = np.lexsort((T, subject))
    T = T[order]
    X = model.mean(T)
    if model.rank:
        X = X + np.einsum("pk,kp->p", scores[subject], model.eigenfunction_values(T))
    Y = X + eps
    offsets = np.cumsum(counts)[:-1]
    times = np.split(T, offsets)
    values = np.split(Y, offsets)
    return SparsePanel(times, values, model.interval, scores=scores, seed=seed, tag=model.tag)
