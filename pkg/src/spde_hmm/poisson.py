"""Poisson corrector of the linear fast model, by quadrature.

For the OU fast process the law of ``Y_y(t)`` is Gaussian with mean
``e^{tA} y`` and per-mode variance ``v_n (1 - e^{-2 lambda_n t})``, so

    Phi(x, y, theta) = int_0^Tq E <F(x, Y_y(t)) - F-bar(x), theta> dt

needs only a time quadrature (Gauss-Legendre on geometric panels) and a
pointwise Gauss-Hermite rule for the one-dimensional Gaussian expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError
from .fast import FastProcessModel
from .reaction import NonlinearitySpec, averaged_coefficient, pointwise_variance
from .spectral import SpectralField, fractional_power_apply, lp_norm

TAIL_TOL = 1e-10
LEMMAS = ("Phi_0", "Phi_0ter")


@lru_cache(maxsize=8)
def _hermite(order):
    """Folded Gauss-Hermite rule: ``E g(Z) = sum_i w_i (g(z_i) + g(-z_i))``
    over the positive nodes (plus the centre node for odd orders, whose
    weight is halved). Folding makes odd integrands vanish exactly."""
    z, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / math.sqrt(2.0 * math.pi)
    half = order // 2
    zp = z[order - half:]
    wp = 0.5 * (w[order - half:] + w[:half][::-1])
    if order % 2:
        zp = np.concatenate([[0.0], zp])
        wp = np.concatenate([[0.5 * w[half]], wp])
    return zp, wp


@lru_cache(maxsize=8)
def _legendre(order):
    return np.polynomial.legendre.leggauss(order)


def tail_rate(spec: NonlinearitySpec, model: FastProcessModel) -> float:
    """Exponential decay rate of the centred integrand in ``t``.

    ``h(z) = z`` relaxes at ``lambda_1``; the even families (``z^2``,
    ``cos z``) only see ``e^{2tA}`` and relax at ``2 lambda_1``.
    """
    lam1 = model.spectral_gap
    return lam1 if spec.family == "affine_y" else 2.0 * lam1


@dataclass(frozen=True)
class PoissonProbe:
    """Evaluation point ``(x, y, theta)`` plus quadrature controls.

    ``T_q = None`` picks ``25 / lambda_1``. ``n_panels`` geometric panels of
    ``gl_order`` Gauss-Legendre nodes each cover ``[0, T_q]``.
    """

    x: SpectralField
    y: SpectralField
    theta: SpectralField
    T_q: float | None = None
    n_panels: int = 40
    gl_order: int = 12
    gh_order: int = 40

    def horizon(self, model: FastProcessModel) -> float:
        return 25.0 / model.spectral_gap if self.T_q is None else float(self.T_q)

    def check(self, spec, model):
        T = self.horizon(model)
        if T <= 0 or math.exp(-tail_rate(spec, model) * T) >= TAIL_TOL:
            raise ConfigError(
                f"quadrature horizon T_q={T:g} leaves a tail above {TAIL_TOL:g}",
                {"poisson.T_q": T},
            )
        for f in (self.x, self.y, self.theta):
            if f.basis != model.basis:
                raise ConfigError("probe fields must live on the fast model basis")

    def time_nodes(self, model: FastProcessModel):
        """Nodes and weights on ``[0, T_q]``; the first panel edge sits at the
        relaxation time of the highest mode so stiff transients are resolved."""
        T = self.horizon(model)
        t0 = min(0.1 / model.basis.eigenvalues[-1], T / 2)
        edges = np.concatenate([[0.0], np.geomspace(t0, T, self.n_panels)])
        z, w = _legendre(self.gl_order)
        a, b = edges[:-1, None], edges[1:, None]
        t = 0.5 * (b - a) * z + 0.5 * (b + a)
        wt = 0.5 * (b - a) * w
        return t.ravel(), wt.ravel()


def _expected_residual(spec, model, avg_grid, xg, y, t, theta, gh_order):
    """``E <F(x, Y_y(t)) - F-bar(x), theta>`` for each time in ``t``."""
    b = model.basis
    lam = b.eigenvalues
    v = model.stationary_variance()
    mean = b.synthesize(np.exp(-np.outer(t, lam)) * y)                   # (T, P)
    var = pointwise_variance(b, v * -np.expm1(-2.0 * np.outer(t, lam)))  # (T, P)
    z, w = _hermite(gh_order)
    m, sz = mean[..., None], np.sqrt(var)[..., None] * z                # (T, P, G/2)
    xb = xg[None, :, None]
    ef = (spec(xb, m + sz) + spec(xb, m - sz)) @ w
    return b.project(ef - avg_grid) @ theta


def evaluate_corrector(probe: PoissonProbe, spec: NonlinearitySpec, model: FastProcessModel) -> float:
    """``Phi(x, y, theta)`` by the truncated representation formula."""
    probe.check(spec, model)
    xg = probe.x.values()
    avg = averaged_coefficient(spec, model)
    avg_grid = avg.grid_values(xg)
    t, wt = probe.time_nodes(model)
    vals = _expected_residual(spec, model, avg_grid, xg, probe.y.coeffs, t,
                               probe.theta.coeffs, probe.gh_order)
    return float(vals @ wt)


def residual(probe: PoissonProbe, spec: NonlinearitySpec, model: FastProcessModel) -> float:
    """``<F(x, y) - F-bar(x), theta>`` at the probe point."""
    b = model.basis
    xg = probe.x.values()
    avg = averaged_coefficient(spec, model)
    r = spec(xg, probe.y.values()) - avg.grid_values(xg)
    return float(b.project(r) @ probe.theta.coeffs)


def generator_identity_check(
    probe: PoissonProbe, spec: NonlinearitySpec, model: FastProcessModel, h_y: float = 1e-4
) -> float:
    """``|L Phi(y) + <F(x, y) - F-bar(x), theta>|`` with ``L Phi`` from central
    differences of :func:`evaluate_corrector` in the mode coordinates."""
    lam = model.basis.eigenvalues
    q = model.q
    y = probe.y.coeffs

    def phi_at(c):
        return evaluate_corrector(
            PoissonProbe(probe.x, probe.y.with_coeffs(c), probe.theta, probe.T_q,
                         probe.n_panels, probe.gl_order, probe.gh_order),
            spec, model,
        )

    p0 = phi_at(y)
    L = 0.0
    for n in range(lam.size):
        e = np.zeros_like(y)
        e[n] = h_y
        pp, pm = phi_at(y + e), phi_at(y - e)
        grad = (pp - pm) / (2.0 * h_y)
        L += -lam[n] * y[n] * grad
        if q[n]:
            L += 0.5 * q[n] * (pp - 2.0 * p0 + pm) / h_y**2
    return abs(L + residual(probe, spec, model))


def affine_corrector(probe: PoissonProbe, spec: NonlinearitySpec, model: FastProcessModel) -> float:
    """Closed form ``c <(-A)^{-1} y, theta>`` for ``affine_y`` (infinite horizon)."""
    if spec.family != "affine_y":
        raise ConfigError("closed-form corrector exists only for affine_y")
    lam = model.basis.eigenvalues
    return float(spec.c * np.sum(probe.y.coeffs * probe.theta.coeffs / lam))


def bound_probe(
    lemma: str,
    spec: NonlinearitySpec,
    model: FastProcessModel,
    scales=(0.0, 1.0, 2.0, 4.0, 8.0),
    gamma: float = 0.2,
    y0: SpectralField | None = None,
    T_q: float | None = None,
) -> list[dict]:
    """Ratios ``|Phi| / bound`` along a sweep.

    ``Phi_0``: ``y = s y0``, ``theta = e_1``, bound ``(1 + |y|_{L2}) |theta|_{L2}``.
    ``Phi_0ter``: ``theta = e_k`` for ``k = 1..N``, bound
    ``(1 + |y0|_{L2}) |(-A)^{-gamma} theta|_{L2}``. Every row records the
    ``kappa = (gamma_max - gamma) / 2`` used to document the lemma's loss.
    """
    if lemma not in LEMMAS:
        raise ConfigError(f"unknown lemma id {lemma!r}", {"poisson.lemma": lemma})
    b = model.basis
    x = b.zeros()
    if y0 is None:
        y0 = b.field(np.ones(b.n_modes))
    kappa = max(model.gamma_max - gamma, 0.0) / 2.0
    rows = []
    if lemma == "Phi_0":
        theta = b.unit(1)
        for s in scales:
            y = y0 * float(s)
            val = evaluate_corrector(PoissonProbe(x, y, theta, T_q), spec, model)
            bound = (1.0 + lp_norm(y)) * lp_norm(theta)
            rows.append(dict(lemma=lemma, scale=float(s), value=abs(val), bound=bound,
                             ratio=abs(val) / bound, gamma=0.0, kappa=0.0))
    else:
        for k in range(1, b.n_modes + 1):
            theta = b.unit(k)
            val = evaluate_corrector(PoissonProbe(x, y0, theta, T_q), spec, model)
            bound = (1.0 + lp_norm(y0)) * lp_norm(fractional_power_apply(theta, -gamma))
            rows.append(dict(lemma=lemma, scale=float(k), value=abs(val), bound=bound,
                             ratio=abs(val) / bound, gamma=gamma, kappa=kappa))
    return rows
