import os
import subprocess
import sys

import numpy as np
import pytest

from mcasim import kernels
from mcasim.rng import RngStream

needs_compiled = pytest.mark.skipif(kernels.compiled is None, reason="compiled extension not built")


def test_backend_flag_matches_import():
    assert kernels.BACKEND == ("cython" if kernels.compiled is not None else "numpy")


def test_pure_python_switch_forces_fallback():
    env = dict(os.environ, MCASIM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import mcasim.kernels as k; print(k.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numpy"


@needs_compiled
@pytest.mark.parametrize("mode_value", [0, 1, 2, -1])
def test_first_success_backends_agree(mode_value):
    rng = RngStream(3, f"fs:{mode_value}")
    n, block = 4000, 8
    g = -np.log1p(-rng.uniform((3, n, block)))
    mode = np.full(n, mode_value, dtype=np.int8)
    mode[::7] = (mode_value + 1) % 3
    icoef = 5.0 * rng.uniform(n)
    outs = []
    for backend in (kernels.compiled, kernels.fallback):
        out = np.full(n, -1, dtype=np.int64)
        out[::11] = 3  # already resolved rows must be left alone
        left = backend.first_success(np.ascontiguousarray(g[0]), np.ascontiguousarray(g[1]),
                                     np.ascontiguousarray(g[2]), mode, icoef, 1.0, 1.0, 16, out)
        outs.append((left, out))
    assert outs[0][0] == outs[1][0]
    np.testing.assert_array_equal(outs[0][1], outs[1][1])


@needs_compiled
def test_dup_isolated_handles_exhaustion_identically():
    u = np.zeros((2, 50, 4))  # every attempt fails
    u[:, ::5, 2] = 0.99
    p = np.array([0.5, 0.5])
    for discard in (False, True):
        a = kernels.compiled.dup_isolated(u, p, discard, 4, 1)
        b = kernels.fallback.dup_isolated(u, p, discard, 4, 1)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        assert (a[0][1:5] == -1).all() and (a[1][1:5] == 8).all()
