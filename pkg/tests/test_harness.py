import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spde_hmm.config import RunConfig
from spde_hmm.errors import DomainError, StatisticsError
from spde_hmm.harness import (
    TestFunctional,
    balance_delta,
    fit_rate,
    hmm_gap_vs_Ma,
    jackknife_rms,
    mixing_sums,
    mixing_sums_bruteforce,
    predicted_rates,
    strong_error_vs_epsilon,
    weak_error_vs_epsilon,
    with_threads,
)
from spde_hmm.spectral import eigenbasis

EPS = [2.0**-k for k in range(2, 7)]


def test_fit_rate_exact():
    assert fit_rate(EPS, EPS)[0] == pytest.approx(1.0, abs=1e-12)
    assert fit_rate(EPS, np.sqrt(EPS))[0] == pytest.approx(0.5, abs=1e-12)
    assert fit_rate(EPS, 3 * np.array(EPS) ** 0.5)[1] == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_noisy():
    rng = np.random.default_rng(0)
    e = np.array(EPS)
    err = 3 * e**0.37 * (1 + rng.uniform(-0.01, 0.01, e.size))
    s, se = fit_rate(e, err)
    assert abs(s - 0.37) < 0.02 and se > 0


def test_fit_rate_drops_nonpositive():
    with pytest.warns(RuntimeWarning):
        s, _ = fit_rate([0.5, 0.25, 0.125], [0.5, 0.0, 0.125])
    assert s == pytest.approx(1.0)
    with pytest.raises(StatisticsError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit_rate([0.5, 0.25], [1.0, -1.0])


def test_mixing_sums_examples():
    r1, r2 = mixing_sums(1, 1, 0.1, 1.0)
    assert r1 == pytest.approx(math.exp(-0.1), rel=1e-15) and r2 == 0.0
    ref = mixing_sums_bruteforce(10, 3, 0.1, 1.0)
    assert np.allclose(mixing_sums(10, 3, 0.1, 1.0), ref, rtol=1e-13)
    with pytest.raises(DomainError):
        mixing_sums(3, 4, 0.1, 1.0)


@settings(max_examples=60)
@given(st.integers(1, 200), st.floats(0, 1), st.floats(1e-4, 2), st.floats(1e-2, 50))
def test_mixing_sums_property(M, frac, tau, c):
    Ma = max(1, int(round(frac * M)))
    a, b = mixing_sums(M, Ma, tau, c), mixing_sums_bruteforce(M, Ma, tau, c)
    for u, v in zip(a, b):
        assert abs(u - v) <= 1e-12 * max(abs(v), 1e-300)


def test_mixing_sums_scaling():
    tau, c = 0.05, 1.0
    s1, s2 = [], []
    for Ma in (10, 100, 1000, 10000):
        M = 2 * Ma
        r1, r2 = mixing_sums(M, Ma, tau, c)
        s1.append(r1 * (Ma * tau + 1) / math.exp(-c * (M - Ma + 1) * tau))
        s2.append(r2 * (Ma * tau + 1))
    assert max(s1) < 50 and max(s2) < 50


def test_balance_delta():
    assert balance_delta(1.0, 0.3, 0.1) == 1.0
    assert balance_delta(0.01, 0.25, 0.25) == 0.01
    assert predicted_rates(0.25, 0.25)[0] == 0.25
    assert predicted_rates(0.25, 0.0)[0] == pytest.approx(0.2, abs=0)
    with pytest.raises(DomainError):
        balance_delta(0.1, 0.2, 0.3)
    with pytest.raises(DomainError):
        balance_delta(0.1, 0.2, 0.0)


def test_jackknife():
    e = np.array([1.0, 4.0, 9.0, 16.0])
    rms, se = jackknife_rms(e)
    assert rms == pytest.approx(math.sqrt(7.5))
    assert se > 0
    with pytest.raises(StatisticsError):
        jackknife_rms(np.ones(1))


def test_functional_bound(basis32, rng):
    phi = TestFunctional(basis32.unit(1), "cos")
    x = rng.standard_normal((10, 32))
    assert np.all(np.abs(phi(x)) <= phi.bound + 1e-12)
    assert phi.name == "cos@e1"
    with pytest.raises(DomainError):
        TestFunctional(basis32.unit(1), "exp")


def small_setup(**kw):
    base = dict(n_modes=8, T=0.25, dt=0.125, eps_list=(0.25, 0.125), replicas=8, chunk=3)
    base.update(kw)
    return RunConfig(**base)


def test_zero_coupling_reports_zero():
    cfg = small_setup(c=0.0, eps_list=(0.25, 0.125, 0.0625, 0.03125))
    with pytest.warns(RuntimeWarning):
        with pytest.raises(StatisticsError):
            strong_error_vs_epsilon(cfg.setup(), cfg.eps_list, cfg.replicas)
    rep = hmm_gap_vs_Ma(small_setup(c=0.0, family="affine_y").setup(), (2, 4), 4)
    assert all(r["gap_rms"] == 0.0 for r in rep.rows)


def test_needs_two_replicas():
    cfg = small_setup()
    with pytest.raises(StatisticsError):
        strong_error_vs_epsilon(cfg.setup(), cfg.eps_list, 1)


def test_reports_are_thread_independent_and_reproducible():
    cfg = small_setup()
    s = cfg.setup()
    a = strong_error_vs_epsilon(s, cfg.eps_list, 8).to_json()
    b = strong_error_vs_epsilon(with_threads(s, 3), cfg.eps_list, 8).to_json()
    c = strong_error_vs_epsilon(s, cfg.eps_list, 8).to_json()
    assert a == b == c
    d = json.loads(a)
    assert RunConfig.from_text(d["config"]) == cfg
    assert d["seed_manifest"]["master_seed"] == cfg.seed


def test_weak_report_fields():
    cfg = small_setup()
    phi = cfg.functional()
    rep = weak_error_vs_epsilon(cfg.setup(), cfg.eps_list, [phi, TestFunctional(phi.weight, "tanh")], 8)
    row = rep.rows[0]
    assert row["weak[cos@e1]"] >= 0 and row["weak_se[cos@e1]"] > 0
    assert rep.extras["status"] in ("conclusive", "INCONCLUSIVE")
    assert "weak[tanh@e1]" in rep.extras["slopes"]
    assert rep.errors_csv().splitlines()[0].startswith("eps,t,")
    unc = weak_error_vs_epsilon(cfg.setup(), cfg.eps_list, phi, 8, coupled=False)
    assert unc.seed_manifest["averaged_seed"] != cfg.seed


def test_report_write(tmp_path):
    cfg = small_setup()
    rep = strong_error_vs_epsilon(cfg.setup(), cfg.eps_list, 4)
    paths = rep.write(tmp_path / "r")
    assert sorted(p.name for p in paths) == ["errors.csv", "rates.csv", "report.json"]
    rates = (tmp_path / "r" / "rates.csv").read_text().splitlines()
    assert rates[0] == "experiment,column,slope,slope_se,n_points"


def test_coupling_reduces_variance():
    cfg = small_setup()
    phi = cfg.functional()
    key = f"weak_se[{phi.name}]"
    co = weak_error_vs_epsilon(cfg.setup(), cfg.eps_list, phi, 64)
    un = weak_error_vs_epsilon(cfg.setup(), cfg.eps_list, phi, 64, coupled=False)
    for a, b in zip(co.rows, un.rows):
        assert a[key] < b[key]
