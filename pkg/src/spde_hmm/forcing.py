"""Diagonal Q-Wiener forcing: covariance families, counter-based streams,
Wiener increments and the closed-form regularity quantities."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError
from .spectral import EigenBasis, SpectralField

ROLE_SLOW = 0
ROLE_FAST = 1
ROLE_AUX = 2
ROLE_NAMES = {ROLE_SLOW: "slow-noise", ROLE_FAST: "fast-noise", ROLE_AUX: "aux"}

_FAMILY_RE = re.compile(r"^\s*(white|zero|powerlaw|single)\s*(?:\(\s*([^)]*?)\s*\))?\s*$")


@dataclass(frozen=True)
class CovarianceSpec:
    """Covariance ``Q = sum_n q_n <e_n, .> e_n`` with optional mollification.

    ``delta > 0`` replaces ``Q^{1/2}`` by ``e^{delta A} Q^{1/2}``, i.e. the
    effective mode weights become ``q_n exp(-2 delta lambda_n)``.

    Families: ``white`` (q_n = 1), ``powerlaw(b)`` (q_n = lambda_n^-b),
    ``single(n)`` (only mode n, weight 1) and ``zero``.
    """

    family: str
    param: float = 0.0
    delta: float = 0.0
    trace_class: bool = False

    def __post_init__(self):
        if self.family not in ("white", "zero", "powerlaw", "single"):
            raise ConfigError(f"unknown covariance family {self.family!r}")
        if self.delta < 0:
            raise ConfigError("mollification delta must be >= 0", {"delta": "negative"})
        if self.family == "powerlaw" and self.param < 0:
            raise ConfigError("powerlaw exponent must be >= 0")
        if self.family == "single" and (int(self.param) != self.param or self.param < 1):
            raise ConfigError("single(n) needs a positive integer mode")
        if self.trace_class and not self.is_trace_class:
            raise ConfigError(
                f"{self.name} is not trace class", {"trace_class": "sum of q_n diverges"}
            )

    @classmethod
    def parse(cls, text: str, delta: float = 0.0, trace_class: bool = False):
        m = _FAMILY_RE.match(text)
        if not m:
            raise ConfigError(f"cannot parse covariance {text!r}")
        family, arg = m.groups()
        if family in ("powerlaw", "single") and not arg:
            raise ConfigError(f"{family} needs an argument")
        param = float(arg) if arg else 0.0
        return cls(family, param, delta, trace_class)

    @property
    def name(self) -> str:
        if self.family == "powerlaw":
            return f"powerlaw({self.param:g})"
        if self.family == "single":
            return f"single({int(self.param)})"
        return self.family

    @property
    def is_trace_class(self) -> bool:
        """Whether ``sum q_n`` converges for the untruncated family."""
        if self.family == "white":
            return False
        if self.family == "powerlaw":
            return self.param > 0.5
        return True

    @property
    def alpha_max(self) -> float:
        """Declared spatial regularity exponent of ``int e^{(t-s)A} dW^Q`` (d = 1).

        ``powerlaw(b)`` gives ``b/2 + 1/4``; white noise (Schatten exponent
        infinity) gives ``1/4``; capped at 1.
        """
        if self.family == "white":
            return 0.25
        if self.family == "powerlaw":
            return min(1.0, 0.5 * self.param + 0.25)
        return 1.0

    def with_delta(self, delta: float) -> "CovarianceSpec":
        return replace(self, delta=float(delta))

    def weights(self, basis: EigenBasis) -> np.ndarray:
        """Unmollified q_n, n = 1..N."""
        lam = basis.eigenvalues
        if self.family == "white":
            return np.ones_like(lam)
        if self.family == "zero":
            return np.zeros_like(lam)
        if self.family == "powerlaw":
            return lam ** (-self.param)
        q = np.zeros_like(lam)
        n = int(self.param)
        if n <= basis.n_modes:
            q[n - 1] = 1.0
        return q

    def effective_weights(self, basis: EigenBasis) -> np.ndarray:
        return self.weights(basis) * np.exp(-2.0 * self.delta * basis.eigenvalues)


@dataclass(frozen=True)
class RngStream:
    """Counter-based Gaussian stream keyed by ``(seed, replica, role)``.

    The normals drawn at position ``step`` depend on nothing else, so
    replicas can be evaluated in any order or batch split. ``replica`` may be
    an integer or a 1-D integer array (batched stream).
    """

    seed: int
    replica: object = 0
    role: int = ROLE_SLOW
    _reps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if self.role not in ROLE_NAMES:
            raise ConfigError(f"unknown stream role {self.role}")
        reps = np.atleast_1d(np.asarray(self.replica, dtype=np.int64))
        if reps.ndim != 1 or np.any(reps < 0):
            raise ConfigError("replica ids must be nonnegative integers")
        object.__setattr__(self, "_reps", reps.astype(np.uint64))

    @property
    def batched(self) -> bool:
        return np.ndim(self.replica) > 0

    @property
    def stream_ids(self):
        return [(int(r), ROLE_NAMES[self.role]) for r in self._reps]

    def with_role(self, role: int) -> "RngStream":
        return RngStream(self.seed, self.replica, role)

    def normals(self, step: int, n: int, n_steps: int | None = None) -> np.ndarray:
        """Standard normals for ``n`` modes at ``step`` (or ``n_steps`` steps).

        Shapes: ``(n,)`` or ``(K, n)`` for one step, with an extra steps axis
        before the mode axis when ``n_steps`` is given.
        """
        if step < 0:
            raise DomainError("stream position must be nonnegative")
        z = kernels.gaussians(self.seed, self._reps, self.role, step, n_steps or 1, n)
        if n_steps is None:
            z = z[:, 0, :]
        return z if self.batched else z[0]


def wiener_increment(
    cov: CovarianceSpec, basis: EigenBasis, dt: float, rng: RngStream, step: int = 0
) -> SpectralField:
    """``W^Q(t + dt) - W^Q(t)``: mode n is ``sqrt(q_n e^{-2 delta lambda_n} dt) Z_n``."""
    if dt <= 0:
        raise DomainError(f"increment length must be positive, got {dt}")
    sd = np.sqrt(cov.effective_weights(basis) * dt)
    return SpectralField(sd * rng.normals(step, basis.n_modes), basis)


def regularity_functional(cov: CovarianceSpec, basis: EigenBasis, alpha: float, T: float) -> float:
    """``M_{alpha,2}(e^{delta A} Q^{1/2}, T)`` on the truncation.

    ``int_0^T |(-A)^alpha e^{tA} Q^{1/2}|_HS^2 dt`` is diagonal, giving
    ``sum_n q_n e^{-2 delta lambda_n} lambda_n^{2 alpha} (1 - e^{-2 lambda_n T}) / (2 lambda_n)``.
    """
    if T <= 0:
        raise DomainError("horizon T must be positive")
    lam = basis.eigenvalues
    q = cov.effective_weights(basis)
    terms = q * lam ** (2 * alpha) * -np.expm1(-2.0 * lam * T) / (2.0 * lam)
    return float(np.sqrt(terms.sum()))


def trace(cov: CovarianceSpec, basis: EigenBasis) -> float:
    """``Tr(e^{2 delta A} Q)`` on the truncation."""
    return float(cov.effective_weights(basis).sum())
