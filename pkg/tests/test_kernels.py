"""The numba and numpy kernel paths must agree."""

import numpy as np
import pytest

from doforecast import kernels

pytestmark = pytest.mark.skipif(not kernels.NUMBA_AVAILABLE, reason="numba not installed")


@pytest.mark.parametrize("k,d,cin,cout", [(1, 1, 1, 3), (2, 1, 2, 2), (3, 4, 3, 5), (3, 32, 4, 4)])
def test_conv_paths_agree(k, d, cin, cout):
    rng = np.random.default_rng(k * 100 + d)
    steps = 20
    xpad = rng.normal(size=(3, steps + d * (k - 1), cin))
    w = rng.normal(size=(k, cin, cout))
    b = rng.normal(size=cout)
    y1 = kernels.conv1d_fwd_numpy(xpad, w, b, d, steps)
    y2 = kernels.conv1d_fwd_numba(xpad, w, b, d, steps)
    np.testing.assert_allclose(y1, y2, rtol=1e-12, atol=1e-12)
    dy = rng.normal(size=y1.shape)
    for a, c in zip(kernels.conv1d_bwd_numpy(xpad, w, dy, d),
                    kernels.conv1d_bwd_numba(xpad, w, dy, d)):
        np.testing.assert_allclose(a, c, rtol=1e-12, atol=1e-12)


def test_maxpool_paths_agree_including_ties():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 3, size=(4, 11, 3)).astype(float)  # many ties
    o1, a1 = kernels.maxpool_fwd_numpy(x, 2)
    o2, a2 = kernels.maxpool_fwd_numba(x, 2)
    np.testing.assert_array_equal(o1, o2)
    np.testing.assert_array_equal(a1, a2)
    dy = rng.normal(size=o1.shape)
    np.testing.assert_array_equal(kernels.maxpool_bwd_numpy(dy, a1, 2, 11),
                                  kernels.maxpool_bwd_numba(dy, a2, 2, 11))


def test_backend_name():
    assert kernels.backend() in ("numba", "numpy")


def test_env_flag_selects_numpy_path():
    import os
    import subprocess
    import sys

    env = dict(os.environ, DOFORECAST_DISABLE_NUMBA="1")
    res = subprocess.run([sys.executable, "-c", "from doforecast import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "numpy"
