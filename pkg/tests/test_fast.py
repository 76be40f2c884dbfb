import numpy as np
import pytest

from spde_hmm.errors import ConfigError, DomainError
from spde_hmm.fast import (
    FastProcessModel,
    MicroSchemeState,
    invariant_law_moments,
    mixing_rate,
    ou_exact_step,
    run_micro_chain,
)
from spde_hmm.forcing import ROLE_FAST, CovarianceSpec, RngStream
from spde_hmm.spectral import eigenbasis


def test_gamma_max_by_family(basis8):
    gm = lambda s: FastProcessModel(CovarianceSpec.parse(s), basis8).gamma_max
    assert gm("white") == 0.25
    assert gm("powerlaw(1)") == 0.5
    assert gm("powerlaw(0.2)") == pytest.approx(0.35)
    assert gm("single(1)") == 0.5
    with pytest.raises(ConfigError):
        FastProcessModel(CovarianceSpec("white"), basis8, gamma_max_override=0.7)


def test_invariant_moments_closed_form(white_model):
    lam = white_model.basis.eigenvalues
    assert np.allclose(invariant_law_moments(white_model), 1 / (2 * lam))
    tau = 0.01
    assert np.allclose(invariant_law_moments(white_model, tau), 1 / (lam * (2 + tau * lam)))
    with pytest.raises(DomainError):
        invariant_law_moments(white_model, -1)


def test_micro_chain_fixed_point_of_variance(white_model):
    # v = decay^2 v + scale^2 holds exactly for the chain law
    tau = 0.03
    d, s = white_model.micro_coefficients(tau)
    v = invariant_law_moments(white_model, tau)
    assert np.allclose(d**2 * v + s**2, v, rtol=1e-14)


def test_exact_step_preserves_mu(white_model):
    K = 40000
    rng = RngStream(2, np.arange(K), ROLE_FAST)
    y = white_model.sample_invariant(rng, 0.0, 0)
    y1 = ou_exact_step(y, white_model, 0.05, rng, 1)
    v = invariant_law_moments(white_model)
    emp = (y1.coeffs**2).mean(axis=0)
    se = np.sqrt(2 / K) * v
    assert np.all(np.abs(emp - v) < 4 * se)


def test_exact_step_mean_decays(white_model):
    y = white_model.basis.unit(1, 2.0)
    rng = RngStream(2, np.arange(20000), ROLE_FAST)
    y1 = ou_exact_step(y, white_model, 0.1, rng)
    assert y1.coeffs[:, 0].mean() == pytest.approx(2 * np.exp(-np.pi**2 * 0.1), abs=4 * 0.25 / 141)


def test_mixing_rate(white_model):
    assert mixing_rate(white_model, 0) == 1.0
    assert mixing_rate(white_model, 1.0) == pytest.approx(np.exp(-np.pi**2))
    with pytest.raises(DomainError):
        mixing_rate(white_model, -1)


def test_micro_state_validation(basis8, white_model):
    with pytest.raises(ConfigError):
        MicroSchemeState(basis8.zeros(), 0.0)
    with pytest.raises(ConfigError):
        run_micro_chain(MicroSchemeState(basis8.zeros(), 0.1), white_model, RngStream(0), 3, 5)
