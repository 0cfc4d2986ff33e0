"""Compactly supported smoothing kernels on [-1, 1]."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate


def _epanechnikov(u):
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


def _quartic(u):
    return np.where(np.abs(u) < 1.0, 0.9375 * (1.0 - u * u) ** 2, 0.0)


def _triangular(u):
    return np.where(np.abs(u) < 1.0, 1.0 - np.abs(u), 0.0)


_FAMILIES = {
    "epanechnikov": _epanechnikov,
    "quartic": _quartic,
    "triangular": _triangular,
}


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric kernel supported on [-1, 1].

    ``family`` is one of ``"epanechnikov"`` (default), ``"quartic"`` or
    ``"triangular"``.
    """

    family: str = "epanechnikov"

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; expected one of {sorted(_FAMILIES)}"
            )

    def __call__(self, u):
        return _FAMILIES[self.family](np.asarray(u, dtype=float))

    @property
    def support(self):
        return 1.0


@lru_cache(maxsize=None)
def _moments(family):
    k = _FAMILIES[family]
    f = lambda u: float(k(np.array(u)))  # noqa: E731
    kappa = integrate.quad(lambda u: f(u) ** 2, -1.0, 1.0, epsabs=1e-14, epsrel=1e-14)[0]
    kappa2 = integrate.quad(lambda u: u * u * f(u), -1.0, 1.0, epsabs=1e-14, epsrel=1e-14)[0]
    return kappa, kappa2


def kernel_moments(kernel=KernelSpec()):
    """Return ``(kappa, kappa2)`` = (int K^2, int u^2 K(u) du)."""
    return _moments(kernel.family)
