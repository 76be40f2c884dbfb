"""Dirichlet-Laplacian eigenbasis on (0, 1) and the diagonal operators built on it.

A state is stored as its first ``N`` sine coefficients ``c_n = <x, e_n>`` with
``e_n(xi) = sqrt(2) sin(n pi xi)`` and ``A e_n = -lambda_n e_n``,
``lambda_n = (n pi)^2``. Fields may carry leading batch axes (replicas,
window samples); every operator acts on the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BasisMismatchError, DomainError

__all__ = [
    "EigenBasis",
    "SpectralField",
    "eigenbasis",
    "semigroup_apply",
    "fractional_power_apply",
    "resolvent_apply",
    "lp_norm",
]


class EigenBasis:
    """Truncated sine basis with a uniform interior quadrature grid.

    Parameters
    ----------
    n_modes : int
        Truncation level N.
    n_grid : int, optional
        Number P of interior grid points ``xi_j = j / (P + 1)``. Defaults to
        ``8 * n_modes``. The rule with weights ``1 / (P + 1)`` is the
        trapezoid rule for functions vanishing at 0 and 1; it integrates
        products ``e_m e_n`` exactly whenever ``m + n < 2 (P + 1)``.
    dimension : int
        Only ``1`` is shipped.
    """

    def __init__(self, n_modes: int, n_grid: int | None = None, dimension: int = 1):
        if dimension != 1:
            raise NotImplementedError("only the d = 1 eigenbasis is shipped")
        if n_modes < 1:
            raise DomainError("n_modes must be a positive integer")
        n_grid = 8 * n_modes if n_grid is None else int(n_grid)
        if n_grid < n_modes:
            raise DomainError("n_grid must be at least n_modes")
        self.dimension = dimension
        self.n_modes = int(n_modes)
        self.n_grid = n_grid
        n = np.arange(1, self.n_modes + 1)
        self.eigenvalues = (np.pi * n) ** 2
        self.grid = np.arange(1, n_grid + 1) / (n_grid + 1.0)
        self.weights = np.full(n_grid, 1.0 / (n_grid + 1.0))
        # table[n, j] = e_{n+1}(xi_j)
        self.table = np.sqrt(2.0) * np.sin(np.pi * np.outer(n, self.grid))
        self._proj = (self.table * self.weights).T.copy()
        for arr in (self.eigenvalues, self.grid, self.weights, self.table, self._proj):
            arr.flags.writeable = False

    @property
    def key(self):
        return (self.dimension, self.n_modes, self.n_grid)

    def __eq__(self, other):
        return isinstance(other, EigenBasis) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"EigenBasis(n_modes={self.n_modes}, n_grid={self.n_grid})"

    # grid <-> coefficients
    def synthesize(self, coeffs):
        """Point values on the grid of the series with the given coefficients."""
        return np.asarray(coeffs) @ self.table

    def project(self, values):
        """Quadrature projection of grid values onto e_1..e_N."""
        return np.asarray(values) @ self._proj

    def integrate(self, values):
        return np.asarray(values) @ self.weights

    # constructors
    def field(self, coeffs) -> "SpectralField":
        return SpectralField(coeffs, self)

    def zeros(self, *batch) -> "SpectralField":
        return SpectralField(np.zeros(batch + (self.n_modes,)), self)

    def unit(self, n: int, scale: float = 1.0) -> "SpectralField":
        """The field ``scale * e_n`` (1-based mode index)."""
        if not 1 <= n <= self.n_modes:
            raise DomainError(f"mode {n} outside 1..{self.n_modes}")
        c = np.zeros(self.n_modes)
        c[n - 1] = scale
        return SpectralField(c, self)

    def from_function(self, func) -> "SpectralField":
        return SpectralField(self.project(func(self.grid)), self)


@lru_cache(maxsize=32)
def eigenbasis(n_modes: int, n_grid: int | None = None) -> EigenBasis:
    """Shared, cached basis instance."""
    return EigenBasis(n_modes, n_grid)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable coefficient array ``(..., N)`` tied to an :class:`EigenBasis`."""

    coeffs: np.ndarray
    basis: EigenBasis

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64)
        if c.ndim == 0 or c.shape[-1] != self.basis.n_modes:
            raise BasisMismatchError(
                f"coefficient length {c.shape[-1:] } does not match N={self.basis.n_modes}"
            )
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def batch_shape(self):
        return self.coeffs.shape[:-1]

    def values(self):
        """Point values on the basis grid."""
        return self.basis.synthesize(self.coeffs)

    def with_coeffs(self, coeffs) -> "SpectralField":
        return SpectralField(coeffs, self.basis)

    def _check(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        if other.basis != self.basis:
            raise BasisMismatchError(f"{self.basis!r} vs {other.basis!r}")
        return other

    def __add__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return other
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return other
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def inner(self, other) -> np.ndarray:
        other = self._check(other)
        return np.sum(self.coeffs * other.coeffs, axis=-1)

    def norm(self) -> np.ndarray:
        """L2 norm via Parseval on the truncation."""
        return np.sqrt(np.sum(self.coeffs**2, axis=-1))

    def allclose(self, other, atol=1e-12, rtol=0.0) -> bool:
        other = self._check(other)
        return bool(np.allclose(self.coeffs, other.coeffs, atol=atol, rtol=rtol))


def semigroup_apply(x: SpectralField, t: float) -> SpectralField:
    """``e^{tA} x``: mode n is damped by ``exp(-lambda_n t)``."""
    if t < 0:
        raise DomainError(f"semigroup time must be nonnegative, got {t}")
    return x.with_coeffs(x.coeffs * np.exp(-x.basis.eigenvalues * t))


def fractional_power_apply(x: SpectralField, gamma: float) -> SpectralField:
    """``(-A)^gamma x`` on the truncation; negative ``gamma`` is allowed."""
    return x.with_coeffs(x.coeffs * x.basis.eigenvalues**gamma)


def resolvent_apply(x: SpectralField, h: float) -> SpectralField:
    """``(I - hA)^{-1} x``, the linear implicit Euler smoother.

    ``h = 0`` returns ``x`` unchanged (the limit of the family).
    """
    if h < 0:
        raise DomainError(f"resolvent step must be nonnegative, got {h}")
    if h == 0:
        return x
    return x.with_coeffs(x.coeffs / (1.0 + h * x.basis.eigenvalues))


def lp_norm(x: SpectralField, p: float = 2.0, gamma: float = 0.0):
    """``|(-A)^gamma x|_{L^p}`` by grid quadrature (``p = inf`` is the grid max)."""
    if not p >= 2:
        raise DomainError(f"p must lie in [2, inf], got {p}")
    vals = np.abs(fractional_power_apply(x, gamma).values())
    if np.isinf(p):
        out = vals.max(axis=-1)
    else:
        out = x.basis.integrate(vals**p) ** (1.0 / p)
    return out if np.ndim(out) else float(out)
