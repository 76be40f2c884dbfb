import dataclasses

import numpy as np
import pytest

from spde_hmm.errors import ConfigError
from spde_hmm.fast import FastProcessModel
from spde_hmm.forcing import CovarianceSpec
from spde_hmm.poisson import (
    PoissonProbe,
    affine_corrector,
    bound_probe,
    evaluate_corrector,
    generator_identity_check,
)
from spde_hmm.reaction import NonlinearitySpec, averaged_coefficient
from spde_hmm.spectral import eigenbasis

AFFINE = NonlinearitySpec("affine_y", "zero", 1.0)


def test_unit_example(basis8, white_model):
    p = PoissonProbe(basis8.zeros(), basis8.unit(1), basis8.unit(1))
    assert evaluate_corrector(p, AFFINE, white_model) == pytest.approx(1 / np.pi**2, abs=1e-10)


def test_zero_fast_state(basis8, white_model):
    p = PoissonProbe(basis8.unit(2), basis8.zeros(), basis8.unit(1))
    assert abs(evaluate_corrector(p, AFFINE, white_model)) < 1e-15


def test_tail_bound_enforced(basis8, white_model):
    p = PoissonProbe(basis8.zeros(), basis8.unit(1), basis8.unit(1), T_q=10 / np.pi**2)
    with pytest.raises(ConfigError):
        evaluate_corrector(p, AFFINE, white_model)
    # even families relax at 2 lambda_1, so 12 / lambda_1 suffices for them
    quad = NonlinearitySpec("quadratic_y", "sin", 1.0)
    p = dataclasses.replace(p, T_q=12 / np.pi**2)
    evaluate_corrector(p, quad, white_model)


def test_constant_in_y_has_zero_corrector(basis8, white_model, rng):
    spec = NonlinearitySpec("cosine_y", "tanh", 0.0)
    p = PoissonProbe(*(basis8.field(rng.standard_normal(8)) for _ in range(3)))
    assert abs(evaluate_corrector(p, spec, white_model)) < 1e-15
    assert generator_identity_check(p, spec, white_model) < 1e-10


def test_linearity_in_theta(basis8, rng):
    model = FastProcessModel(CovarianceSpec("powerlaw", 1.0), basis8)
    spec = NonlinearitySpec("cosine_y", "sin", 1.0)
    x, y = basis8.field(rng.standard_normal(8)), basis8.field(0.5 * rng.standard_normal(8))
    t1, t2 = basis8.field(rng.standard_normal(8)), basis8.field(rng.standard_normal(8))
    a, b = 0.7, -1.3
    phi = lambda t: evaluate_corrector(PoissonProbe(x, y, t), spec, model)
    assert phi(a * t1 + b * t2) == pytest.approx(a * phi(t1) + b * phi(t2), abs=1e-10)


def test_quadrature_converges(basis8, rng):
    model = FastProcessModel(CovarianceSpec("powerlaw", 1.0), basis8)
    for fam in ("affine_y", "quadratic_y", "cosine_y"):
        spec = NonlinearitySpec(fam, "sin", 1.0)
        p = PoissonProbe(basis8.zeros(), basis8.field(0.4 * rng.standard_normal(8)), basis8.unit(1))
        v1 = evaluate_corrector(p, spec, model)
        v2 = evaluate_corrector(dataclasses.replace(p, n_panels=2 * p.n_panels), spec, model)
        assert abs(v1 - v2) < 1e-8


def test_bound_probe_phi0_linear(white_model):
    rows = bound_probe("Phi_0", AFFINE, white_model, scales=(0, 1, 2, 4, 8))
    assert rows[0]["value"] == 0.0
    vals = np.array([r["value"] for r in rows[1:]])
    assert np.allclose(vals / vals[0], [1, 2, 4, 8], rtol=1e-12)
    ratios = [r["ratio"] for r in rows]
    assert max(ratios) < 1.0


def test_bound_probe_phi0ter_decays(white_model):
    rows = bound_probe("Phi_0ter", AFFINE, white_model, gamma=0.2)
    ratios = np.array([r["ratio"] for r in rows])
    assert np.all(np.diff(ratios) <= 0)
    assert rows[0]["kappa"] == pytest.approx(0.025)
    with pytest.raises(ConfigError):
        bound_probe("Phi_1", AFFINE, white_model)


def test_affine_closed_form_helper(basis8, white_model):
    with pytest.raises(ConfigError):
        affine_corrector(PoissonProbe(basis8.zeros(), basis8.zeros(), basis8.zeros()),
                         NonlinearitySpec("cosine_y"), white_model)


def test_monte_carlo_oracle():
    # independent check: simulate exact OU paths on the quadrature nodes and
    # integrate the residual along each path
    b = eigenbasis(4)
    model = FastProcessModel(CovarianceSpec("single", 1), b)
    spec = NonlinearitySpec("quadratic_y", "sin", 1.0)
    probe = PoissonProbe(b.field([0.3, -0.2, 0.1, 0.0]), b.field([0.8, 0.1, 0.0, 0.0]),
                         b.field([1.0, 0.5, 0.2, 0.1]), T_q=12.0 / model.spectral_gap,
                         n_panels=20, gl_order=8)
    phi = evaluate_corrector(probe, spec, model)

    K = 100_000
    gen = np.random.default_rng(99)
    t, wt = probe.time_nodes(model)
    lam, v = b.eigenvalues, model.stationary_variance()
    xg = probe.x.values()
    fbar = b.project(averaged_coefficient(spec, model).grid_values(xg)) @ probe.theta.coeffs
    y = np.tile(probe.y.coeffs, (K, 1))
    acc = np.zeros(K)
    prev = 0.0
    for tk, wk in zip(t, wt):
        dt = tk - prev
        decay = np.exp(-lam * dt)
        y = decay * y + np.sqrt(v * -np.expm1(-2 * lam * dt)) * gen.standard_normal((K, 4))
        prev = tk
        acc += wk * (b.project(spec(xg, b.synthesize(y))) @ probe.theta.coeffs - fbar)
    se = acc.std(ddof=1) / np.sqrt(K)
    assert abs(acc.mean() - phi) <= 4 * se
