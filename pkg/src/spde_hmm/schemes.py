"""Time integrators for the slow component.

* ``direct``       fully coupled reference for (X^eps, Y^eps) with fine step h
* ``averaged``     linear implicit Euler for the averaged equation (F-bar)
* ``tau_averaged`` the same with F-bar^tau (average under the micro-chain law)
* ``hmm``          macro step fed by a window average of F over the micro chain

All schemes share the slow-noise stream layout: the increment used at step
``k`` is drawn at stream position ``k``, so two schemes run with the same
seed and step size see identical Wiener increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError
from .fast import FastProcessModel, MicroSchemeState, run_micro_chain
from .forcing import ROLE_FAST, ROLE_SLOW, CovarianceSpec, RngStream
from .reaction import AveragedCoefficient, NonlinearitySpec, averaged_coefficient
from .spectral import EigenBasis, SpectralField

SCHEMES = ("hmm", "averaged", "tau_averaged", "direct")


def _is_multiple(a, b, rtol=1e-9):
    r = a / b
    return abs(r - round(r)) <= rtol * max(1.0, abs(r)) and round(r) >= 1


@dataclass(frozen=True)
class HmmParams:
    """Multiscale scheme configuration.

    ``fine_ratio`` sets the reference step ``h = eps / fine_ratio`` used by
    the direct scheme.
    """

    eps: float
    dt: float
    tau: float
    M: int
    Ma: int
    T: float
    n_modes: int = 32
    delta: float = 0.0
    fine_ratio: int = 64

    def __post_init__(self):
        bad = {}
        if not 0 < self.eps <= 1:
            bad["epsilon"] = "must lie in (0, 1]"
        if self.dt <= 0:
            bad["dt"] = "must be positive"
        if self.tau <= 0:
            bad["tau"] = "must be positive"
        if self.M < 1:
            bad["M"] = "must be >= 1"
        if not 1 <= self.Ma <= max(self.M, 1):
            bad["Ma"] = f"must satisfy 1 <= Ma <= M (M={self.M})"
        if self.T <= 0 or (self.dt > 0 and not _is_multiple(self.T, self.dt)):
            bad["T"] = "T/dt must be a positive integer"
        if self.delta < 0:
            bad["delta"] = "must be >= 0"
        if self.fine_ratio < 1:
            bad["fine_ratio"] = "must be >= 1"
        if bad:
            raise ConfigError("invalid scheme parameters", bad)

    @classmethod
    def coupled(cls, eps, dt, tau, Ma=None, **kw):
        """Derive ``M = ceil(dt / (eps tau))`` so that ``M tau = dt / eps``."""
        M = max(1, math.ceil(dt / (eps * tau) - 1e-9))
        return cls(eps=eps, dt=dt, tau=tau, M=M, Ma=M if Ma is None else Ma, **kw)

    @property
    def n_macro(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def fine_step(self) -> float:
        return self.eps / self.fine_ratio


@dataclass(frozen=True)
class Problem:
    """The slow-fast system: basis, nonlinearity, slow noise and fast model."""

    basis: EigenBasis
    nonlinearity: NonlinearitySpec
    slow_cov: CovarianceSpec
    fast: FastProcessModel

    def noise_sd(self, h: float, delta: float = 0.0) -> np.ndarray:
        return np.sqrt(self.slow_cov.with_delta(delta).effective_weights(self.basis) * h)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Snapshots ``states[i]`` at ``times[i]``; ``states`` is
    ``(n_snap, N)`` or ``(n_snap, K, N)`` for batched replicas."""

    scheme: str
    times: np.ndarray
    states: np.ndarray
    step: float
    stream_ids: tuple = ()
    fast_state: np.ndarray | None = None
    slow_increments: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("one snapshot per time expected")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must increase strictly")
        for a in (self.times, self.states):
            a.flags.writeable = False

    def field(self, i: int, basis: EigenBasis) -> SpectralField:
        return SpectralField(self.states[i], basis)


# ---------------------------------------------------------------- array-level steps

def _nemytskii(basis, spec, xc, yc):
    return basis.project(spec(basis.synthesize(xc), basis.synthesize(yc)))


def _averaged(avg, xc):
    return avg.basis.project(avg.grid_values(avg.basis.synthesize(xc)))


def _window_average(basis, spec, xc, window):
    """``(1/M_a) sum_m F(x, Y_m)`` for window ``(K, M_a, N)`` and ``x`` ``(K, N)``."""
    if not spec.depends_on_y:
        # nothing to average; matches the averaged drift bit for bit
        return basis.project(spec(basis.synthesize(xc), 0.0))
    xg = basis.synthesize(xc)[..., None, :]
    yg = basis.synthesize(window)
    return basis.project(spec(xg, yg).mean(axis=-2))


def _macro_update(xc, drift, dw, h, lam):
    return (xc + h * drift + dw) / (1.0 + h * lam)


# ---------------------------------------------------------------- public steps

def step_averaged(
    x: SpectralField,
    avg: AveragedCoefficient,
    dt: float,
    slow_cov: CovarianceSpec,
    rng: RngStream,
    step: int = 0,
) -> SpectralField:
    """``S_dt (x + dt F-bar(x) + dW)``; pass ``avg`` built with ``tau > 0`` for
    the tau-averaged variant."""
    b = x.basis
    dw = np.sqrt(slow_cov.effective_weights(b) * dt) * rng.normals(step, b.n_modes)
    return x.with_coeffs(_macro_update(x.coeffs, _averaged(avg, x.coeffs), dw, dt, b.eigenvalues))


def step_hmm_macro(
    x: SpectralField,
    chain: MicroSchemeState,
    params: HmmParams,
    problem: Problem,
    slow_rng: RngStream,
    fast_rng: RngStream,
    n: int = 0,
):
    """One macro step: ``M`` micro steps, window average over the last
    ``M_a`` states, then ``S_dt (x + dt F-tilde + dW_n)``."""
    if params.Ma > params.M:
        raise ConfigError("Ma must not exceed M", {"Ma": params.Ma})
    b = x.basis
    chain, window = run_micro_chain(chain, problem.fast, fast_rng, params.M, params.Ma)
    drift = _window_average(b, problem.nonlinearity, x.coeffs, window)
    dw = problem.noise_sd(params.dt, params.delta) * slow_rng.normals(n, b.n_modes)
    return x.with_coeffs(_macro_update(x.coeffs, drift, dw, params.dt, b.eigenvalues)), chain


def direct_step_guard(problem: Problem, eps: float, h: float):
    """The fast clock step ``h / eps`` must resolve the slowest fast mode."""
    tau_ref = 1.0 / problem.fast.spectral_gap
    if h > eps * tau_ref * (1 + 1e-12):
        raise ConfigError(
            f"fine step {h:g} too large for eps={eps:g}; need h <= eps / lambda_1",
            {"fine_ratio": "increase"},
        )


def step_direct(
    x: SpectralField,
    y: SpectralField,
    problem: Problem,
    eps: float,
    h: float,
    slow_rng: RngStream,
    fast_rng: RngStream,
    k: int = 0,
    delta: float = 0.0,
):
    """Coupled reference step with ``F`` frozen at ``(x_k, y_k)``.

    ``x' = S_h (x + h F(x, y) + dW_k)`` and ``y'`` is the exact OU transition
    over fast time ``h / eps``.
    """
    direct_step_guard(problem, eps, h)
    b = x.basis
    dw = problem.noise_sd(h, delta) * slow_rng.normals(k, b.n_modes)
    drift = _nemytskii(b, problem.nonlinearity, x.coeffs, y.coeffs)
    x_new = _macro_update(x.coeffs, drift, dw, h, b.eigenvalues)
    lam = b.eigenvalues
    s = h / eps
    sd = np.sqrt(problem.fast.stationary_variance() * -np.expm1(-2.0 * lam * s))
    y_new = np.exp(-lam * s) * y.coeffs + sd * fast_rng.normals(k, b.n_modes)
    return x.with_coeffs(x_new), y.with_coeffs(y_new)


# ---------------------------------------------------------------- integration

def integrate(
    scheme: str,
    problem: Problem,
    params: HmmParams,
    x0: SpectralField,
    y0: SpectralField | None = None,
    seed: int = 0,
    replicas=0,
    step: float | None = None,
    keep_increments: bool = False,
) -> TrajectoryRecord:
    """Run ``scheme`` to ``params.T`` and record the slow state every ``params.dt``.

    ``step`` overrides the integration step of ``averaged``/``tau_averaged``
    (``direct`` always uses ``params.fine_step``; ``hmm`` always ``params.dt``).
    ``replicas`` may be an int or a 1-D array of replica ids; each replica
    owns the slow and fast streams ``(seed, replica, role)``.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}", {"scheme": scheme})
    b = problem.basis
    lam = b.eigenvalues
    batched = np.ndim(replicas) > 0
    reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    K = reps.size
    slow = RngStream(seed, reps, ROLE_SLOW)
    fast = RngStream(seed, reps, ROLE_FAST)
    spec = problem.nonlinearity

    x = np.broadcast_to(x0.coeffs, (K, b.n_modes)).copy()
    y = (np.zeros((K, b.n_modes)) if y0 is None
         else np.broadcast_to(y0.coeffs, (K, b.n_modes)).copy())

    if scheme == "direct":
        h = params.fine_step
        direct_step_guard(problem, params.eps, h)
    elif scheme == "hmm":
        h = params.dt
    else:
        h = params.dt if step is None else step
    if not _is_multiple(params.dt, h):
        raise ConfigError(f"record interval dt={params.dt} is not a multiple of step {h}",
                          {"dt": params.dt})
    n_sub = int(round(params.dt / h))
    n_macro = params.n_macro
    times = params.dt * np.arange(n_macro + 1)
    states = np.empty((n_macro + 1, K, b.n_modes))
    states[0] = x
    noise_sd = problem.noise_sd(h, params.delta)
    incs = [] if keep_increments else None

    if scheme in ("averaged", "tau_averaged"):
        avg = averaged_coefficient(spec, problem.fast, params.tau if scheme == "tau_averaged" else 0.0)
    elif scheme == "direct":
        s = h / params.eps
        ou_decay = np.exp(-lam * s)
        ou_sd = np.sqrt(problem.fast.stationary_variance() * -np.expm1(-2.0 * lam * s))
    else:
        decay, scale = problem.fast.micro_coefficients(params.tau)
        m = 0

    k = 0
    for i in range(1, n_macro + 1):
        for _ in range(n_sub):
            dw = noise_sd * slow.normals(k, b.n_modes)
            if incs is not None:
                incs.append(dw)
            if scheme == "direct":
                drift = _nemytskii(b, spec, x, y)
                y = ou_decay * y + ou_sd * fast.normals(k, b.n_modes)
            elif scheme == "hmm":
                y, window = kernels.micro_chain(
                    y, decay, scale, seed, fast._reps, ROLE_FAST, m, params.M, params.Ma
                )
                m += params.M
                drift = _window_average(b, spec, x, window)
            else:
                drift = _averaged(avg, x)
            x = _macro_update(x, drift, dw, h, lam)
            k += 1
        states[i] = x

    ids = tuple(slow.stream_ids + fast.stream_ids) if scheme in ("direct", "hmm") \
        else tuple(slow.stream_ids)
    if not batched:
        states, y = states[:, 0], y[0]
    return TrajectoryRecord(
        scheme=scheme,
        times=times,
        states=states,
        step=h,
        stream_ids=ids,
        fast_state=y if scheme in ("direct", "hmm") else None,
        slow_increments=np.array(incs) if incs is not None else None,
    )
