import numpy as np
import pytest

from spde_hmm import _kernels_py, kernels
from spde_hmm.fast import FastProcessModel, MicroSchemeState, micro_step, run_micro_chain
from spde_hmm.forcing import ROLE_FAST, CovarianceSpec, RngStream
from spde_hmm.spectral import eigenbasis

compiled = pytest.importorskip("spde_hmm._kernels", reason="compiled extension not built")


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")


def test_gaussians_agree():
    reps = np.arange(7, dtype=np.uint64)
    a = compiled.gaussians(42, reps, 1, 5, 9, 13)
    b = _kernels_py.gaussians(42, reps, 1, 5, 9, 13)
    assert a.shape == b.shape == (7, 9, 13)
    assert np.max(np.abs(a - b)) < 1e-14


def test_micro_chain_agrees():
    lam = (np.pi * np.arange(1, 11)) ** 2
    decay = 1 / (1 + 0.05 * lam)
    scale = np.sqrt(0.05) * decay
    reps = np.arange(4, dtype=np.uint64)
    y0 = np.ones((4, 10))
    ya, wa = compiled.micro_chain(y0, decay, scale, 3, reps, 1, 11, 40, 17)
    yb, wb = _kernels_py.micro_chain(y0, decay, scale, 3, reps, 1, 11, 40, 17)
    assert np.max(np.abs(ya - yb)) < 1e-14
    assert np.max(np.abs(wa - wb)) < 1e-14


def test_philox_agrees(rng):
    ctr = rng.integers(0, 2**63, size=(50, 4), dtype=np.uint64)
    assert np.array_equal(compiled.philox4x64(ctr, 77), _kernels_py.philox4x64(ctr, 77))


def test_chain_equals_repeated_steps():
    b = eigenbasis(6)
    model = FastProcessModel(CovarianceSpec("white"), b)
    rng = RngStream(8, np.arange(3), ROLE_FAST)
    s0 = MicroSchemeState(b.zeros(3), 0.02)
    s = s0
    for _ in range(25):
        s = micro_step(s, model, rng)
    chained, window = run_micro_chain(s0, model, rng, 25, 5)
    assert np.max(np.abs(chained.y.coeffs - s.y.coeffs)) < 1e-14
    assert chained.m == 25
    assert np.array_equal(window[:, -1], chained.y.coeffs)
