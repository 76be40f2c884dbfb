"""Monte Carlo error estimation versus eps, rate fits and mixing sums.

Replicas are split into fixed-size chunks of consecutive ids. Chunks may run
on worker threads, but each chunk's result depends only on its ids and the
master seed, and chunks are concatenated in id order, so a report does not
depend on ``threads``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import DomainError, StatisticsError
from .forcing import ROLE_NAMES
from .kernels import KEY_SALT
from .schemes import HmmParams, Problem, integrate
from .spectral import SpectralField

PHI_MAPS = {"cos": np.cos, "tanh": np.tanh}
# replaces the master seed for the uncoupled comparison run
UNCOUPLED_OFFSET = 0x9E3779B97F4A7C15


# ------------------------------------------------------------------ small pieces

@dataclass(frozen=True)
class TestFunctional:
    """``phi(x) = <omega, phi~(x(.))>`` evaluated by grid quadrature."""

    __test__ = False  # keep pytest from collecting the class

    weight: SpectralField
    phi: str = "cos"

    def __post_init__(self):
        if self.phi not in PHI_MAPS:
            raise DomainError(f"unknown scalar map {self.phi!r}; choose from {sorted(PHI_MAPS)}")

    @property
    def name(self) -> str:
        nz = np.flatnonzero(self.weight.coeffs)
        if nz.size == 1 and self.weight.coeffs[nz[0]] == 1.0:
            return f"{self.phi}@e{nz[0] + 1}"
        return f"{self.phi}@w"

    def __call__(self, coeffs) -> np.ndarray:
        b = self.weight.basis
        return b.integrate(self.weight.values() * PHI_MAPS[self.phi](b.synthesize(coeffs)))

    @property
    def bound(self) -> float:
        """``|omega|_{L1} sup|phi~|`` on the grid (both shipped maps have sup 1)."""
        b = self.weight.basis
        return float(b.integrate(np.abs(self.weight.values())))


def fit_rate(eps, errors):
    """OLS slope of ``log error`` on ``log eps`` and its standard error.

    Nonpositive errors are dropped with a warning. The standard error is
    ``nan`` when only two points survive.
    """
    eps = np.asarray(eps, dtype=np.float64)
    err = np.asarray(errors, dtype=np.float64)
    keep = (err > 0) & np.isfinite(err) & (eps > 0)
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} nonpositive error value(s) from the fit",
                      RuntimeWarning, stacklevel=2)
    if keep.sum() < 2:
        raise StatisticsError("a rate fit needs at least two positive error values")
    lx, ly = np.log(eps[keep]), np.log(err[keep])
    xc = lx - lx.mean()
    sxx = xc @ xc
    slope = (xc @ (ly - ly.mean())) / sxx
    n = lx.size
    if n == 2:
        return float(slope), float("nan")
    resid = ly - ly.mean() - slope * xc
    return float(slope), float(math.sqrt((resid @ resid) / (n - 2) / sxx))


def _window_pair_sum(L: int, x: float) -> float:
    """``sum_{d=1}^{L-1} (L - d) e^{-d x}`` in closed form.

    Written as ``r A / (1 - r)^2`` with ``A = L (1 - r) - (1 - r^L)``; for
    small ``L x`` the difference ``A`` is summed from its Taylor series
    ``sum_{j>=2} (-x)^j (L^j - L) / j!`` to avoid cancellation.
    """
    if L < 2:
        return 0.0
    if x == 0.0:
        return L * (L - 1) / 2.0
    q = -math.expm1(-x)
    if L * x < 0.5:
        A, term_x = 0.0, x
        for j in range(2, 60):
            term_x *= x / j if j > 2 else x / 2.0  # x^j / j!
            t = (L**j - L) * term_x * (1 if j % 2 == 0 else -1)
            A += t
            if abs(t) < 1e-18 * abs(A):
                break
    else:
        A = L * q + math.expm1(-L * x)
    return math.exp(-x) * A / (q * q)


def mixing_sums(M: int, Ma: int, tau: float, c: float):
    """``(R1, R2)`` for ``rho(t) = e^{-ct}`` over the window ``M-Ma+1 .. M``.

    ``R1 = (1/Ma) sum_m rho(m tau)`` and
    ``R2 = (1/Ma^2) sum_{m1 < m2} rho((m2 - m1) tau)``.
    """
    if not (isinstance(M, (int, np.integer)) and isinstance(Ma, (int, np.integer))):
        raise DomainError("M and Ma must be integers")
    if not 1 <= Ma <= M:
        raise DomainError(f"need 1 <= Ma <= M, got Ma={Ma}, M={M}")
    if tau < 0 or c < 0:
        raise DomainError("tau and c must be nonnegative")
    x = c * tau
    if x == 0.0:
        R1 = 1.0
    else:
        R1 = math.exp(-(M - Ma + 1) * x) * math.expm1(-Ma * x) / math.expm1(-x) / Ma
    return R1, _window_pair_sum(Ma, x) / Ma**2


def mixing_sums_bruteforce(M: int, Ma: int, tau: float, c: float):
    """Direct loops over the window; the oracle for :func:`mixing_sums`."""
    if not 1 <= Ma <= M:
        raise DomainError(f"need 1 <= Ma <= M, got Ma={Ma}, M={M}")
    ms = range(M - Ma + 1, M + 1)
    R1 = math.fsum(math.exp(-c * m * tau) for m in ms) / Ma
    R2 = math.fsum(math.exp(-c * (m2 - m1) * tau) for m1 in ms for m2 in ms if m1 < m2)
    return R1, R2 / Ma**2


def balance_delta(eps: float, alpha: float, gamma: float) -> float:
    """Mollification ``delta = eps^{1/(1 + alpha - gamma)}``."""
    if not 0 < gamma <= alpha < 1:
        raise DomainError(f"need 0 < gamma <= alpha < 1, got alpha={alpha}, gamma={gamma}")
    if not 0 < eps <= 1:
        raise DomainError("eps must lie in (0, 1]")
    return eps ** (1.0 / (1.0 + (alpha - gamma)))


def predicted_rates(alpha: float, gamma: float):
    """Strong and weak rates ``(beta, 2 beta)`` with ``beta = alpha / (1 + alpha - gamma)``."""
    if not 0 <= gamma <= alpha < 1 or alpha <= 0:
        raise DomainError(f"need 0 <= gamma <= alpha < 1, alpha > 0; got {alpha}, {gamma}")
    beta = alpha / (1.0 + (alpha - gamma))
    return beta, 2.0 * beta


def jackknife_rms(e: np.ndarray):
    """``sqrt(mean e)`` over axis 0 and its delete-one jackknife se."""
    K = e.shape[0]
    if K < 2:
        raise StatisticsError("at least two replicas are needed for an error bar")
    total = e.sum(axis=0)
    loo = np.sqrt(np.maximum(total - e, 0.0) / (K - 1))
    dev = loo - loo.mean(axis=0)
    se = np.sqrt((K - 1) / K * (dev * dev).sum(axis=0))
    return np.sqrt(total / K), se


def mean_se(d: np.ndarray):
    K = d.shape[0]
    if K < 2:
        raise StatisticsError("at least two replicas are needed for an error bar")
    return d.mean(axis=0), d.std(axis=0, ddof=1) / math.sqrt(K)


# ------------------------------------------------------------------ setup and report

@dataclass(frozen=True)
class ExperimentSetup:
    """Everything an experiment needs besides its sweep.

    ``delta_policy = "balanced"`` mollifies the slow noise of both schemes with
    ``delta = balance_delta(eps, alpha_max, gamma_max)``; ``"none"`` uses the
    configured ``delta`` for every eps.
    """

    problem: Problem
    x0: SpectralField
    y0: SpectralField | None
    dt: float
    T: float
    tau: float = 0.1
    fine_ratio: int = 64
    delta: float = 0.0
    delta_policy: str = "none"
    seed: int = 0
    threads: int = 1
    chunk: int = 256
    snapshot: str = ""

    def __post_init__(self):
        if self.delta_policy not in ("none", "balanced"):
            raise DomainError(f"unknown delta policy {self.delta_policy!r}")
        if self.chunk < 1 or self.threads < 1:
            raise DomainError("chunk and threads must be positive")

    def delta_for(self, eps: float) -> float:
        if self.delta_policy == "none":
            return self.delta
        a = self.problem.slow_cov.alpha_max
        g = min(self.problem.fast.gamma_max, a)
        return balance_delta(eps, min(a, 1 - 1e-12), g)

    def params(self, eps: float, M: int = 1, Ma: int = 1) -> HmmParams:
        return HmmParams(eps=eps, dt=self.dt, tau=self.tau, M=M, Ma=Ma, T=self.T,
                         n_modes=self.problem.basis.n_modes, delta=self.delta_for(eps),
                         fine_ratio=self.fine_ratio)

    def manifest(self, K: int, schemes, extra=None) -> dict:
        out = {
            "master_seed": int(self.seed),
            "key_salt": hex(KEY_SALT),
            "generator": "philox4x64-10 + box-muller",
            "counter": "(mode_block, step, replica, role)",
            "roles": {str(k): v for k, v in ROLE_NAMES.items()},
            "replicas": [0, int(K)],
            "chunk": int(self.chunk),
            "schemes": list(schemes),
            "backend": kernels.BACKEND,
        }
        if extra:
            out.update(extra)
        return out


@dataclass
class ErrorReport:
    """Result of one sweep: one summary row per sweep value plus the full
    ``(value, t)`` series, the fitted slope and replay information."""

    experiment: str
    sweep_key: str
    rows: list
    series: list
    slope: float
    slope_se: float
    fit_column: str
    config: str = ""
    seed_manifest: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "sweep_key": self.sweep_key,
            "fit": {"column": self.fit_column, "slope": _clean(self.slope),
                    "slope_se": _clean(self.slope_se)},
            "rows": _clean(self.rows),
            "series": _clean(self.series),
            "extras": _clean(self.extras),
            "config": self.config,
            "seed_manifest": self.seed_manifest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def errors_csv(self) -> str:
        return _csv(self.series)

    def rates_csv(self) -> str:
        rows = [{"experiment": self.experiment, "column": self.fit_column,
                 "slope": self.slope, "slope_se": self.slope_se,
                 "n_points": len(self.rows)}]
        for k, v in sorted(self.extras.get("slopes", {}).items()):
            rows.append({"experiment": self.experiment, "column": k, "slope": v[0],
                         "slope_se": v[1], "n_points": len(self.rows)})
        return _csv(rows)

    def write(self, out_dir) -> list:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {"report.json": self.to_json(), "errors.csv": self.errors_csv(),
                 "rates.csv": self.rates_csv()}
        for name, text in files.items():
            (out / name).write_text(text)
        return [out / n for n in files]


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, nan/inf to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv(rows) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(rows[0])
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


# ------------------------------------------------------------------ replica engine

def _chunks(K: int, size: int):
    return [np.arange(a, min(a + size, K), dtype=np.int64) for a in range(0, K, size)]


def _map_chunks(fn, K, setup):
    parts = _chunks(K, setup.chunk)
    if setup.threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=setup.threads) as ex:
            results = list(ex.map(fn, parts))
    else:
        results = [fn(p) for p in parts]
    return [np.concatenate([r[i] for r in results], axis=0) for i in range(len(results[0]))]


def paired_states(setup: ExperimentSetup, eps: float, K: int, seed_b: int | None = None):
    """Direct and averaged slow states at the macro snapshots.

    Both schemes step with ``h = eps / fine_ratio`` and read the same slow
    increments (``seed_b`` different from the master seed breaks that
    coupling). Returns ``(times, X_eps, X_bar)`` with state arrays shaped
    ``(K, n_snap, N)``.
    """
    params = setup.params(eps)
    seed_b = setup.seed if seed_b is None else seed_b
    prob = setup.problem

    def run(ids):
        a = integrate("direct", prob, params, setup.x0, setup.y0, seed=setup.seed, replicas=ids)
        b = integrate("averaged", prob, params, setup.x0, None, seed=seed_b, replicas=ids,
                      step=params.fine_step)
        return a.states.swapaxes(0, 1), b.states.swapaxes(0, 1)

    xe, xb = _map_chunks(run, K, setup)
    times = params.dt * np.arange(params.n_macro + 1)
    return times, xe, xb


def _need_replicas(K):
    if K < 2:
        raise StatisticsError(f"at least two replicas are needed, got {K}")


# ------------------------------------------------------------------ experiments

def strong_error_vs_epsilon(setup: ExperimentSetup, eps_list, K: int) -> ErrorReport:
    """Sup over snapshots of the RMS gap ``|X^eps(t) - X-bar(t)|_{L2}``."""
    _need_replicas(K)
    rows, series = [], []
    for eps in eps_list:
        times, xe, xb = paired_states(setup, eps, K)
        e = ((xe - xb) ** 2).sum(axis=-1)  # Parseval, (K, n_snap)
        rms, se = jackknife_rms(e)
        i = int(np.argmax(rms))
        rows.append({"eps": eps, "strong_rms": rms[i], "strong_se": se[i], "t_star": times[i],
                     "delta": setup.delta_for(eps), "replicas": K})
        series += [{"eps": eps, "t": t, "strong_rms": r, "strong_se": s}
                   for t, r, s in zip(times, rms, se)]
    slope, sse = fit_rate([r["eps"] for r in rows], [r["strong_rms"] for r in rows])
    return ErrorReport(
        experiment="rate-strong", sweep_key="eps", rows=rows, series=series,
        slope=slope, slope_se=sse, fit_column="strong_rms", config=setup.snapshot,
        seed_manifest=setup.manifest(K, ["direct", "averaged"]),
    )


def weak_error_vs_epsilon(
    setup: ExperimentSetup,
    eps_list,
    functionals,
    K: int,
    coupled: bool = True,
    reference_rate: float = 0.5,
) -> ErrorReport:
    """Sup over snapshots of ``|mean_k (phi(X^eps_k) - phi(X-bar_k))|``.

    The first functional drives the slope fit. The run is flagged
    ``INCONCLUSIVE`` when the 95% interval of that slope contains
    ``reference_rate``; the certificate then asks whether the error ratio
    ``err / eps^reference_rate`` drops significantly between the two
    smallest eps (upper 2-se bound at the smallest below the lower 2-se bound
    at the next).
    """
    _need_replicas(K)
    if isinstance(functionals, TestFunctional):
        functionals = [functionals]
    seed_b = None if coupled else (setup.seed + UNCOUPLED_OFFSET) % 2**64
    rows, series = [], []
    for eps in eps_list:
        times, xe, xb = paired_states(setup, eps, K, seed_b)
        row = {"eps": eps, "replicas": K}
        per_t = [{"eps": eps, "t": t} for t in times]
        for j, phi in enumerate(functionals):
            pa, pb = phi(xe), phi(xb)  # (K, n_snap)
            if coupled:
                m, se = mean_se(pa - pb)
            else:
                ma, sa = mean_se(pa)
                mb, sb = mean_se(pb)
                m, se = ma - mb, np.hypot(sa, sb)
            i = int(np.argmax(np.abs(m)))
            tag = phi.name
            row[f"weak[{tag}]"] = abs(m[i])
            row[f"weak_se[{tag}]"] = se[i]
            if j == 0:
                row["t_star"] = times[i]
            for r, mv, sv in zip(per_t, m, se):
                r[f"weak[{tag}]"] = mv
                r[f"weak_se[{tag}]"] = sv
        rows.append(row)
        series += per_t

    lead = f"weak[{functionals[0].name}]"
    eps_arr = np.array([r["eps"] for r in rows])
    err = np.array([r[lead] for r in rows])
    se = np.array([r[lead.replace("weak", "weak_se", 1)] for r in rows])
    slope, sse = fit_rate(eps_arr, err)
    extras = {"coupled": coupled, "reference_rate": reference_rate}
    extras["slopes"] = {}
    for phi in functionals[1:]:
        c = f"weak[{phi.name}]"
        extras["slopes"][c] = list(fit_rate(eps_arr, [r[c] for r in rows]))
    if math.isfinite(sse) and abs(slope - reference_rate) <= 1.96 * sse:
        order = np.argsort(eps_arr)
        if order.size >= 2:
            a, b = order[0], order[1]
            hi = (err[a] + 2 * se[a]) / eps_arr[a] ** reference_rate
            lo = (err[b] - 2 * se[b]) / eps_arr[b] ** reference_rate
            extras["certificate"] = {"upper_ratio_smallest": hi, "lower_ratio_next": lo,
                                     "holds": bool(hi < lo)}
        extras["status"] = "INCONCLUSIVE"
    else:
        extras["status"] = "conclusive"
    return ErrorReport(
        experiment="rate-weak", sweep_key="eps", rows=rows, series=series,
        slope=slope, slope_se=sse, fit_column=lead, config=setup.snapshot,
        seed_manifest=setup.manifest(K, ["direct", "averaged"],
                                     None if coupled else {"averaged_seed": seed_b}),
        extras=extras,
    )


def hmm_gap_vs_Ma(setup: ExperimentSetup, Ma_list, K: int, M_factor: int = 2) -> ErrorReport:
    """RMS terminal gap between the HMM and the tau-averaged scheme per ``M_a``
    with ``M = M_factor * M_a``; both share the slow increments.

    Each row also carries ``noise_floor``, the Monte Carlo resolution
    ``sd(X-bar^tau(T)) / sqrt(K)`` of a K-replica ensemble.
    """
    _need_replicas(K)
    prob = setup.problem
    rows, series = [], []
    for Ma in Ma_list:
        M = int(M_factor * Ma)
        eps = min(1.0, setup.dt / (M * setup.tau))
        params = setup.params(eps, M=M, Ma=int(Ma))

        def run(ids, params=params):
            a = integrate("hmm", prob, params, setup.x0, setup.y0, seed=setup.seed, replicas=ids)
            b = integrate("tau_averaged", prob, params, setup.x0, None, seed=setup.seed,
                          replicas=ids)
            return a.states.swapaxes(0, 1), b.states.swapaxes(0, 1)

        xh, xb = _map_chunks(run, K, setup)
        e = ((xh - xb) ** 2).sum(axis=-1)
        rms, se = jackknife_rms(e)
        xT = xb[:, -1]
        floor = math.sqrt(((xT - xT.mean(axis=0)) ** 2).sum(axis=-1).mean() / K)
        rows.append({"Ma": int(Ma), "M": M, "gap_rms": rms[-1], "gap_se": se[-1],
                     "noise_floor": floor, "replicas": K})
        times = params.dt * np.arange(params.n_macro + 1)
        series += [{"Ma": int(Ma), "t": t, "gap_rms": r, "gap_se": s}
                   for t, r, s in zip(times, rms, se)]
    gaps = [r["gap_rms"] for r in rows]
    if len(gaps) < 2:
        # single-point sweep: report the gap only
        slope, sse = float("nan"), float("nan")
    elif all(g == 0 for g in gaps):
        slope, sse = 0.0, 0.0
    else:
        slope, sse = fit_rate([r["Ma"] for r in rows], gaps)
    R = [mixing_sums(r["M"], r["Ma"], setup.tau, prob.fast.spectral_gap) for r in rows]
    for r, (r1, r2) in zip(rows, R):
        r["R1"], r["R2"] = r1, r2
    return ErrorReport(
        experiment="hmm-sweep", sweep_key="Ma", rows=rows, series=series,
        slope=slope, slope_se=sse, fit_column="gap_rms", config=setup.snapshot,
        seed_manifest=setup.manifest(K, ["hmm", "tau_averaged"], {"M_factor": M_factor}),
    )


def with_threads(setup: ExperimentSetup, threads: int) -> ExperimentSetup:
    return replace(setup, threads=max(1, int(threads)))
