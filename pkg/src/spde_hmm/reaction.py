"""Pointwise nonlinearities ``f(z1, z2) = g(z1) + c h(z2)``, their Nemytskii
lift and the averaged coefficients under ``mu`` and ``mu^tau``.

Because ``mu`` is a centred product Gaussian over modes, ``y(xi)`` is a scalar
Gaussian with variance ``sigma^2(xi) = sum_n v_n e_n(xi)^2``, so the average of
a Nemytskii map reduces to a one-dimensional Gaussian integral per point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BasisMismatchError, ConfigError
from .spectral import EigenBasis, SpectralField


def _softclip(z):
    return z / np.sqrt(1.0 + z * z)


# name -> (g, g', g'', sup|g'|)
SLOW_PARTS = {
    "sin": (np.sin, np.cos, lambda z: -np.sin(z), 1.0),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2,
             lambda z: -2.0 * np.tanh(z) * (1.0 - np.tanh(z) ** 2), 1.0),
    "softclip": (_softclip, lambda z: (1.0 + z * z) ** -1.5,
                 lambda z: -3.0 * z * (1.0 + z * z) ** -2.5, 1.0),
    "zero": (np.zeros_like, np.zeros_like, np.zeros_like, 0.0),
}

FAMILIES = ("affine_y", "quadratic_y", "cosine_y")


@dataclass(frozen=True)
class NonlinearitySpec:
    """``f(z1, z2) = g(z1) + c h(z2)`` with ``h`` fixed by ``family``:
    ``affine_y`` (h = z2), ``quadratic_y`` (h = z2^2), ``cosine_y`` (h = cos z2)."""

    family: str = "cosine_y"
    g: str = "sin"
    c: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown nonlinearity family {self.family!r}",
                              {"nonlinearity.family": self.family})
        if self.g not in SLOW_PARTS:
            raise ConfigError(f"unknown slow part g={self.g!r}", {"nonlinearity.g": self.g})

    def h(self, z):
        if self.family == "affine_y":
            return z
        if self.family == "quadratic_y":
            return z * z
        return np.cos(z)

    def dh(self, z):
        if self.family == "affine_y":
            return np.ones_like(z)
        if self.family == "quadratic_y":
            return 2.0 * z
        return -np.sin(z)

    def __call__(self, z1, z2):
        out = SLOW_PARTS[self.g][0](z1)
        if self.c:
            return out + self.c * self.h(z2)
        return out + 0.0 * z2  # keep the broadcast shape

    def df_dz1(self, z1, z2):
        return SLOW_PARTS[self.g][1](z1) + 0.0 * z2

    def df_dz2(self, z1, z2):
        return self.c * self.dh(z2) + 0.0 * z1

    def d2f_dz1(self, z1, z2):
        return SLOW_PARTS[self.g][2](z1) + 0.0 * z2

    @property
    def lipschitz_x(self) -> float:
        """``sup |d f / d z1|``, the Lipschitz constant of ``F(., y)`` in L2."""
        return SLOW_PARTS[self.g][3]

    @property
    def depends_on_y(self) -> bool:
        return self.c != 0

    def h_average(self, sigma2):
        """``E h(Z)`` for ``Z ~ N(0, sigma2)``."""
        sigma2 = np.asarray(sigma2, dtype=np.float64)
        if self.family == "affine_y":
            return np.zeros_like(sigma2)
        if self.family == "quadratic_y":
            return sigma2
        return np.exp(-0.5 * sigma2)

    def averaged(self, z1, sigma2):
        """``E f(z1, Z)`` for ``Z ~ N(0, sigma2)``."""
        out = SLOW_PARTS[self.g][0](z1)
        if self.c:
            out = out + self.c * self.h_average(sigma2)
        return out


def pointwise_variance(basis: EigenBasis, variances) -> np.ndarray:
    """``sigma^2(xi_j) = sum_n v_n e_n(xi_j)^2`` on the grid."""
    return np.asarray(variances) @ basis.table**2


@dataclass(frozen=True, eq=False)
class AveragedCoefficient:
    """``x -> int F(x, y) dnu(y)`` for a centred Gaussian product law ``nu``
    with per-mode variances ``variances`` (``mu`` or ``mu^tau``)."""

    spec: NonlinearitySpec
    basis: EigenBasis
    variances: np.ndarray

    def __post_init__(self):
        v = np.array(self.variances, dtype=np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "variances", v)
        s2 = pointwise_variance(self.basis, v)
        s2.flags.writeable = False
        object.__setattr__(self, "sigma2", s2)
        # the y-dependent part is a fixed grid profile
        hbar = self.spec.c * self.spec.h_average(s2) if self.spec.c else np.zeros_like(s2)
        object.__setattr__(self, "_hbar_grid", hbar)

    def grid_values(self, xg):
        """Averaged map on grid values of x (any leading shape)."""
        return SLOW_PARTS[self.spec.g][0](xg) + self._hbar_grid


def averaged_coefficient(spec: NonlinearitySpec, model, tau: float = 0.0) -> AveragedCoefficient:
    """``F-bar`` (``tau = 0``) or ``F-bar^tau`` for a fast model."""
    from .fast import invariant_law_moments

    return AveragedCoefficient(spec, model.basis, invariant_law_moments(model, tau))


def apply_F(spec: NonlinearitySpec, x: SpectralField, y: SpectralField) -> SpectralField:
    """Nemytskii lift: synthesize, apply ``f`` pointwise, project back.

    Leading batch axes of ``x`` and ``y`` broadcast against each other.
    """
    if x.basis != y.basis:
        raise BasisMismatchError(f"{x.basis!r} vs {y.basis!r}")
    b = x.basis
    return SpectralField(b.project(spec(x.values(), y.values())), b)


def apply_averaged(avg: AveragedCoefficient, x: SpectralField) -> SpectralField:
    if x.basis != avg.basis:
        raise BasisMismatchError(f"{x.basis!r} vs {avg.basis!r}")
    return SpectralField(avg.basis.project(avg.grid_values(x.values())), avg.basis)


def averaging_residual(
    spec: NonlinearitySpec, avg: AveragedCoefficient, x: SpectralField, y: SpectralField
) -> SpectralField:
    """``F(x, y) - F-bar(x)``; centred under ``y ~ mu``."""
    return apply_F(spec, x, y) - apply_averaged(avg, x)
