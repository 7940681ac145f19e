import os
import subprocess
import sys

import numpy as np
import pytest

from repswarm import kernels


def _case(rng, n=5, m=300):
    h = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = 0.05 * (h + h.T)
    tau = np.abs(rng.standard_normal((n, n))) * 1e-6
    tau = tau + tau.T
    alpha = rng.uniform(0, 2, n)
    nu = rng.uniform(0, 1e-7, n)
    w = 2 * np.pi * (2e9 + np.linspace(-1e6, 1e6, m))
    return h, tau, alpha, nu, w


def _direct(h, tau, alpha, nu, w, w0, scale):
    out = []
    for wi in w:
        a = alpha * np.exp(-1j * wi * nu) * (w0 / wi if scale else 1.0)
        out.append(np.linalg.det(np.eye(len(alpha)) - a[:, None] * h * np.exp(-1j * (wi - w0) * tau)))
    return np.array(out)


@pytest.mark.parametrize("scale", [False, True])
def test_numpy_backend_matches_direct(rng, scale):
    h, tau, alpha, nu, w = _case(rng)
    got = kernels.sweep_det(h, tau, alpha, nu, w, 2 * np.pi * 2e9, scale, backend="numpy")
    np.testing.assert_allclose(got, _direct(h, tau, alpha, nu, w, 2 * np.pi * 2e9, scale), rtol=1e-12, atol=1e-13)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")
@pytest.mark.parametrize("scale", [False, True])
def test_backends_agree(rng, scale):
    h, tau, alpha, nu, w = _case(rng, n=9, m=2000)
    a = kernels.sweep_det(h, tau, alpha, nu, w, 2 * np.pi * 2e9, scale, backend="cython")
    b = kernels.sweep_det(h, tau, alpha, nu, w, 2 * np.pi * 2e9, scale, backend="numpy")
    np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)


def test_empty_swarm(rng):
    w = np.linspace(1, 2, 4)
    e = np.zeros((0, 0))
    np.testing.assert_array_equal(kernels.sweep_det(e, e, np.zeros(0), np.zeros(0), w, 1.0), np.ones(4))


def test_env_forces_fallback():
    env = dict(os.environ, REPSWARM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import repswarm.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")
def test_compiled_phase_recurrence_on_absolute_grid():
    # microsecond delays on a 2 GHz grid: one ulp of w shifts the phase by ~1e-11,
    # while rounding the ~4e3 rad argument w nu costs ~5e-13 in either backend
    from repswarm.stability import SweepGrid, alpha_g, circle_channelset

    cs = circle_channelset(15, 1000.0, 2e9)
    w = SweepGrid(2e9, 2e6, 100.0).omegas()
    args = (cs.HR, cs.r2r_delay_s, np.full(15, alpha_g(cs)), np.full(15, 3e-7), w, cs.omega)
    a = kernels.sweep_det(*args, backend="cython")
    b = kernels.sweep_det(*args, backend="numpy")
    assert np.max(np.abs(a - b) / np.abs(b)) < 5e-12


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")
def test_compiled_nonuniform_grid(rng):
    h, tau, alpha, nu, _ = _case(rng)
    w = 2 * np.pi * np.sort(2e9 + rng.uniform(-1e6, 1e6, 500))
    a = kernels.sweep_det(h, tau, alpha, nu, w, 2 * np.pi * 2e9, backend="cython")
    np.testing.assert_allclose(a, _direct(h, tau, alpha, nu, w, 2 * np.pi * 2e9, False), rtol=1e-12, atol=1e-13)
