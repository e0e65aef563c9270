"""The compiled kernels and the numpy fallback must agree."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from patientstab import _backend, _fallback, sim
from patientstab.linalg import _SHIFT_AFTER

from conftest import load_fixture

try:
    compiled = _backend.load("cython")
except ImportError:  # pragma: no cover - depends on the build
    compiled = None

needs_ext = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def test_backend_name():
    assert _backend.BACKEND in ("cython", "python")
    assert _backend.load("python") is _fallback
    with pytest.raises(ValueError):
        _backend.load("fortran")


def test_pure_python_env_switch():
    env = dict(os.environ, PATIENTSTAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import patientstab; print(patientstab.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_thread_env(monkeypatch):
    monkeypatch.setenv("PATIENTSTAB_THREADS", "3")
    assert _backend.default_threads() == 3
    monkeypatch.setenv("PATIENTSTAB_THREADS", "zero")
    with pytest.raises(ValueError):
        _backend.default_threads()


@needs_ext
@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(0, 3, width=64))))
def test_power_iterate_parity(m):
    m = np.ascontiguousarray(m + 0.01)
    a = compiled.power_iterate(m, 1e-12, 100_000, _SHIFT_AFTER)
    b = _fallback.power_iterate(m, 1e-12, 100_000, _SHIFT_AFTER)
    assert a[3] == b[3] and a[4] == b[4]
    np.testing.assert_allclose(a[:3], b[:3], rtol=1e-12)


@needs_ext
@pytest.mark.parametrize("name", ["example1_mu3", "example2_H_iid", "example4_pibar", "example5_delayed"])
def test_simulate_parity(name):
    sys_ = load_fixture(name)
    n = getattr(sys_, "system", sys_).n
    x0 = np.random.default_rng(0).uniform(-2, 2, size=(20, n))
    a = sim.simulate(sys_, x0, 80, 20, seed=7, backend="cython")
    b = sim.simulate(sys_, x0, 80, 20, seed=7, backend="python")
    # identical operation order; only tanh implementations may differ in the last ulp
    np.testing.assert_allclose(a.states, b.states, rtol=1e-12, atol=1e-13)
    assert np.array_equal(a.diverged, b.diverged)


@needs_ext
def test_divergence_parity():
    from patientstab.systems import MapSpec, SwitchedSystem

    s = SwitchedSystem((MapSpec.build(2, linear=[[3.0, 1.0], [0.0, 2.0]]),), np.ones(1))
    a = sim.simulate(s, [[1.0, 1.0], [0.0, 0.0]], 60, 2, backend="cython")
    b = sim.simulate(s, [[1.0, 1.0], [0.0, 0.0]], 60, 2, backend="python")
    assert a.diverged.tolist() == b.diverged.tolist() == [True, False]
    np.testing.assert_array_equal(np.isnan(a.states), np.isnan(b.states))


@needs_ext
@pytest.mark.parametrize("name", ["example1_mu2", "example5"])
def test_product_norm_parity(name):
    ls = load_fixture(name)
    if hasattr(ls, "maps"):
        from patientstab.systems import lipschitz_set

        ls = lipschitz_set(ls)
    a = sim.mc_p_radius_estimate(ls, 1, 100, 200, seed=3, backend="cython")
    b = sim.mc_p_radius_estimate(ls, 1, 100, 200, seed=3, backend="python")
    assert a == pytest.approx(b, rel=1e-13)


def test_fallback_import_when_extension_missing(monkeypatch):
    real = importlib.import_module

    def fake(name, *args, **kwargs):
        if name == "patientstab._kernels":
            raise ImportError("no extension")
        return real(name, *args, **kwargs)

    monkeypatch.setattr(importlib, "import_module", fake)
    assert _backend.load(None) is _fallback
    with pytest.raises(ImportError):
        _backend.load("cython")
