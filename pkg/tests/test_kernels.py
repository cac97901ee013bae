import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saia import _kernels_py as py
from saia import kernels
from saia.integrator import SplittingScheme

compiled = pytest.importorskip("saia._kernels")

SCHEMES = [SplittingScheme(1), SplittingScheme(2, 0.21), SplittingScheme(3, 0.12)]


def _spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T / d + np.eye(d)


@pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: f"k{s.k}")
def test_dense_gaussian_leg_matches(scheme, rng):
    d = 7
    P, mean = _spd(rng, d), rng.standard_normal(d)
    theta, p = rng.standard_normal(d), rng.standard_normal(d)
    out_c = compiled.leg_gaussian(P, mean, theta, p, scheme.kicks, scheme.drifts, 0.3, 9)
    out_p = py.leg_gaussian(P, mean, theta, p, scheme.kicks, scheme.drifts, 0.3, 9)
    np.testing.assert_allclose(out_c[0], out_p[0], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(out_c[1], out_p[1], rtol=1e-12, atol=1e-14)
    assert out_c[2] == out_p[2] == scheme.k * 9 + 1


@pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: f"k{s.k}")
def test_diagonal_gaussian_leg_matches(scheme, rng):
    d = 11
    prec, mean = rng.uniform(0.5, 3.0, d), rng.standard_normal(d)
    theta, p = rng.standard_normal(d), rng.standard_normal(d)
    out_c = compiled.leg_gaussian_diag(prec, mean, theta, p, scheme.kicks, scheme.drifts, 0.2, 5)
    out_p = py.leg_gaussian_diag(prec, mean, theta, p, scheme.kicks, scheme.drifts, 0.2, 5)
    np.testing.assert_allclose(out_c[0], out_p[0], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(out_c[1], out_p[1], rtol=1e-12, atol=1e-14)


def test_logistic_kernels_match(rng):
    X = rng.standard_normal((40, 5))
    y = (rng.uniform(size=40) < 0.5).astype(float)
    theta, p = rng.standard_normal(5), rng.standard_normal(5)
    np.testing.assert_allclose(compiled.logistic_gradient(X, y, 1.0, theta),
                               py.logistic_gradient(X, y, 1.0, theta), rtol=1e-12)
    s = SCHEMES[2]
    out_c = compiled.leg_logistic(X, y, 1.0, theta, p, s.kicks, s.drifts, 0.05, 6)
    out_p = py.leg_logistic(X, y, 1.0, theta, p, s.kicks, s.drifts, 0.05, 6)
    np.testing.assert_allclose(out_c[0], out_p[0], rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(out_c[1], out_p[1], rtol=1e-11, atol=1e-13)
    assert out_c[2] == out_p[2] == 19


def test_inputs_are_not_modified(rng):
    theta, p = rng.standard_normal(3), rng.standard_normal(3)
    t0, p0 = theta.copy(), p.copy()
    s = SCHEMES[1]
    compiled.leg_gaussian_diag(np.ones(3), np.zeros(3), theta, p, s.kicks, s.drifts, 0.5, 3)
    np.testing.assert_array_equal(theta, t0)
    np.testing.assert_array_equal(p, p0)


@settings(max_examples=200, deadline=None)
@given(k=st.sampled_from([2, 3]), h=st.floats(0.01, 6.0), b=st.floats(0.1, 0.26))
def test_rho_and_stability_match(k, h, b):
    assert compiled.stable_on(k, b, h) == py.stable_on(k, b, h)
    rc, rp = compiled.rho_value(k, h, b), py.rho_value(k, h, b)
    if np.isinf(rc) or np.isinf(rp):
        assert np.isinf(rc) and np.isinf(rp)
    else:
        assert rc == pytest.approx(rp, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("k,hbar", [(2, 1.5), (2, 3.0), (3, 2.0), (3, 4.5)])
def test_minimax_search_matches(k, hbar):
    args = (k, hbar, 0.1, 0.25 if k == 2 else 1 / 6)
    assert compiled.minimax_b(*args) == pytest.approx(py.minimax_b(*args), abs=1e-6)
    b = 0.2 if k == 2 else 0.12
    assert compiled.max_rho(k, b, hbar) == pytest.approx(py.max_rho(k, b, hbar), rel=1e-9)


def test_geyer_tau_matches(rng):
    x = np.cumsum(rng.standard_normal(3000)) * 0.01 + rng.standard_normal(3000)
    assert compiled.geyer_tau(x) == pytest.approx(py.geyer_tau(x), rel=1e-10)
    assert np.isnan(compiled.geyer_tau(np.ones(50)))
    assert np.isnan(py.geyer_tau(np.ones(50)))


def test_environment_variable_forces_fallback():
    code = "from saia import kernels; print(kernels.BACKEND, kernels.COMPILED)"
    env = dict(os.environ, SAIA_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout.split()
    assert out == ["python", "False"]


def test_default_backend_is_compiled():
    if os.environ.get("SAIA_PURE_PYTHON", "") not in ("", "0"):
        pytest.skip("fallback forced")
    assert kernels.COMPILED and kernels.BACKEND == "cython"


def test_read_only_inputs_are_accepted():
    prec = np.diag(np.eye(1))  # a read-only view
    assert not prec.flags.writeable
    s = SCHEMES[0]
    theta, p, n = compiled.leg_gaussian_diag(prec, np.zeros(1), np.ones(1), np.zeros(1),
                                             s.kicks, s.drifts, 1.0, 1)
    assert (theta[0], p[0], n) == (0.5, -0.75, 2)
