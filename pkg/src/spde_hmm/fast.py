"""Fast Ornstein-Uhlenbeck process ``dY = AY dt + dw^q``.

Per mode this is a scalar OU process with rate ``lambda_n`` and noise
weight ``q_n``, so the exact transition, the implicit-Euler micro chain and
both invariant laws are available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError
from .forcing import ROLE_FAST, CovarianceSpec, RngStream
from .spectral import EigenBasis, SpectralField


@dataclass(frozen=True)
class FastProcessModel:
    cov: CovarianceSpec
    basis: EigenBasis
    gamma_max_override: float | None = None

    def __post_init__(self):
        g = self.gamma_max
        if not 0 < g <= 0.5:
            raise ConfigError("gamma_max must lie in (0, 1/2]", {"fast.gamma_max": g})

    @property
    def gamma_max(self) -> float:
        if self.gamma_max_override is not None:
            return float(self.gamma_max_override)
        if self.cov.family == "white":
            return 0.25
        if self.cov.family == "powerlaw":
            return min(0.5, 0.5 * self.cov.param + 0.25)
        return 0.5

    @property
    def q(self) -> np.ndarray:
        return self.cov.effective_weights(self.basis)

    @property
    def spectral_gap(self) -> float:
        return float(self.basis.eigenvalues[0])

    def stationary_variance(self) -> np.ndarray:
        return self.q / (2.0 * self.basis.eigenvalues)

    def micro_coefficients(self, tau: float):
        """``(decay, scale)`` of ``y' = decay * y + scale * Z`` for step ``tau``."""
        lam = self.basis.eigenvalues
        decay = 1.0 / (1.0 + tau * lam)
        return decay, np.sqrt(self.q * tau) * decay

    def sample_invariant(self, rng: RngStream, tau: float = 0.0, step: int = 0) -> SpectralField:
        """Exact draw from ``mu`` (``tau = 0``) or ``mu^tau``."""
        sd = np.sqrt(invariant_law_moments(self, tau))
        return SpectralField(sd * rng.normals(step, self.basis.n_modes), self.basis)


@dataclass(frozen=True)
class MicroSchemeState:
    """State of the implicit-Euler chain; ``m`` is also its stream position."""

    y: SpectralField
    tau: float
    m: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("micro step tau must be positive", {"micro.tau": self.tau})


def ou_exact_step(
    y: SpectralField, model: FastProcessModel, dt: float, rng: RngStream, step: int = 0
) -> SpectralField:
    """Exact OU transition over ``dt``; leaves ``mu`` invariant."""
    if dt <= 0:
        raise DomainError(f"step must be positive, got {dt}")
    lam = model.basis.eigenvalues
    decay = np.exp(-lam * dt)
    sd = np.sqrt(model.stationary_variance() * -np.expm1(-2.0 * lam * dt))
    return y.with_coeffs(decay * y.coeffs + sd * rng.normals(step, lam.size))


def micro_step(state: MicroSchemeState, model: FastProcessModel, rng: RngStream) -> MicroSchemeState:
    """One step ``y' = (y + sqrt(q tau) Z) / (1 + tau lambda)``."""
    decay, scale = model.micro_coefficients(state.tau)
    z = rng.normals(state.m, model.basis.n_modes)
    y = state.y.with_coeffs(state.y.coeffs * decay + z * scale)
    return MicroSchemeState(y, state.tau, state.m + 1)


def run_micro_chain(
    state: MicroSchemeState,
    model: FastProcessModel,
    rng: RngStream,
    n_steps: int,
    n_window: int | None = None,
):
    """Advance ``n_steps`` micro steps through the compiled kernel.

    Returns ``(new_state, window)`` where ``window`` holds the last
    ``n_window`` states with shape ``batch + (n_window, N)``. Matches repeated
    :func:`micro_step` calls exactly.
    """
    n_window = n_steps if n_window is None else n_window
    if not 0 <= n_window <= n_steps:
        raise ConfigError("averaging window must satisfy 0 <= M_a <= M")
    decay, scale = model.micro_coefficients(state.tau)
    y0 = np.atleast_2d(state.y.coeffs)
    y, window = kernels.micro_chain(
        y0, decay, scale, rng.seed, rng._reps, rng.role, state.m, n_steps, n_window
    )
    if state.y.coeffs.ndim == 1:
        y, window = y[0], window[0]
    return MicroSchemeState(state.y.with_coeffs(y), state.tau, state.m + n_steps), window


def invariant_law_moments(model: FastProcessModel, tau: float = 0.0) -> np.ndarray:
    """Per-mode variances of ``mu`` (``tau = 0``) or of the chain law ``mu^tau``.

    ``v_n = q_n / (2 lambda_n)`` and ``v_n^tau = q_n / (lambda_n (2 + tau lambda_n))``.
    """
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    lam = model.basis.eigenvalues
    return model.q / (lam * (2.0 + tau * lam))


def mixing_rate(model: FastProcessModel, t: float) -> float:
    """``rho(t) = exp(-lambda_1 t)``."""
    if t < 0:
        raise DomainError("time must be nonnegative")
    return float(np.exp(-model.spectral_gap * t))


def fast_stream(seed: int, replica=0) -> RngStream:
    return RngStream(seed, replica, ROLE_FAST)
