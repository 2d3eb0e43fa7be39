import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from bubblelab import _kernels_py, kernels
from bubblelab.profile_core import sphere_area

compiled = pytest.mark.skipif(kernels.BACKEND != "compiled", reason="extension not built")


def _sphere_average_oracle(ty1, tr, sy1, sr, N):
    """Direct angular integral of |y - z|^(2-N) over the transverse sphere of z."""
    om = sphere_area(N - 3)
    f = lambda t: ((ty1 - sy1) ** 2 + tr ** 2 + sr ** 2 - 2 * tr * sr * np.cos(t)) ** (
        -(N - 2) / 2.0) * np.sin(t) ** (N - 3)
    return om * integrate.quad(f, 0, np.pi, epsrel=1e-12)[0]


@pytest.mark.parametrize("pt", [(0.3, 0.2, 0.0, 1.0), (1.0, 2.0, 0.5, 0.1), (0.0, 1.0, 0.01, 1.0)])
def test_riesz_kernel_matches_angular_integral(pt):
    ty1, tr, sy1, sr = pt
    got = _kernels_py.riesz_kernel(ty1, tr, np.array([sy1]), np.array([sr]), 7)[0]
    assert got == pytest.approx(_sphere_average_oracle(ty1, tr, sy1, sr, 7), rel=1e-9)


def test_weight_sum_single_center():
    w = kernels.weight_sum(np.array([0.0, 1.0]), np.array([0.0, 0.0]), np.array([0.0]),
                           np.array([4.0]), 2.5, 3.0)
    assert np.allclose(w, [4.0 ** 2.5, 4.0 ** 2.5 * 5.0 ** -3])


@compiled
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), N=st.sampled_from([5, 6, 7, 9]))
def test_compiled_riesz_matches_python(seed, N):
    rng = np.random.default_rng(seed)
    ty1, tr = rng.uniform(-2, 2, 7), rng.uniform(0, 2, 7)
    py1, pr, pw = rng.uniform(-2, 2, 300), rng.uniform(0, 2, 300), rng.uniform(-1, 1, 300)
    pw[::17] = 0.0
    a = kernels.riesz_sum(ty1, tr, py1, pr, pw, N)
    b = _kernels_py.riesz_sum(ty1, tr, py1, pr, pw, N)
    assert np.allclose(a, b, rtol=1e-10, atol=0)


@compiled
def test_compiled_riesz_near_singular_argument():
    # source ring almost through the target: k^2 -> 1, logarithmic branch
    ty1, tr = np.array([0.0, 0.0]), np.array([1.0, 1.0])
    py1, pr = np.array([1e-4, 1e-7]), np.array([1.0, 1.0 + 1e-7])
    pw = np.ones(2)
    a = kernels.riesz_sum(ty1, tr, py1, pr, pw, 7)
    b = _kernels_py.riesz_sum(ty1, tr, py1, pr, pw, 7)
    assert np.allclose(a, b, rtol=1e-9)


def test_pure_python_switch():
    code = "import bubblelab.kernels as k; print(k.BACKEND, k.riesz_sum.__module__)"
    env = dict(os.environ, BUBBLELAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["python", "bubblelab._kernels_py"]
