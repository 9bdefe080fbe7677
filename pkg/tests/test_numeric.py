import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from doforecast.errors import DimensionError, OracleError
from doforecast.numeric import (
    activation,
    finite_diff_grad,
    fork_rng,
    init_weights,
    make_rng,
    matmul,
)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_matmul_examples():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)
    np.testing.assert_array_equal(matmul([[1, 2]], [[3], [4]]), [[11.0]])
    np.testing.assert_array_equal(matmul(np.zeros((2, 2)), m), np.zeros((2, 2)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5),
       st.integers(0, 2**32 - 1))
def test_matmul_associative(n, k, m, p, seed):
    rng = make_rng(seed)
    a, b, c = rng.normal(size=(n, k)), rng.normal(size=(k, m)), rng.normal(size=(m, p))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    scale = np.abs(a).max() * np.abs(b).max() * np.abs(c).max() * k * m
    assert np.max(np.abs(left - right)) <= 1e-9 * max(scale, 1.0)


def test_activation_points():
    assert activation(0.0, "sigmoid") == 0.5
    assert activation(0.0, "tanh") == 0.0
    assert activation(-3.2, "relu") == 0.0
    assert activation(3.2, "relu") == 3.2
    with pytest.raises(ValueError):
        activation(1.0, "softplus")


@given(arrays(np.float64, st.integers(1, 30), elements=finite))
def test_activation_ranges(x):
    s = activation(x, "sigmoid")
    t = activation(x, "tanh")
    assert np.all((s >= 0) & (s <= 1)) and np.all(np.isfinite(s))
    assert np.all((t >= -1) & (t <= 1))
    # open-interval check where float64 can still represent it
    mid = np.abs(x) < 15
    assert np.all((s[mid] > 0) & (s[mid] < 1)) and np.all(np.abs(t[mid]) < 1)


def test_sigmoid_no_overflow_at_extremes():
    out = activation(np.array([-1000.0, 1000.0]), "sigmoid")
    np.testing.assert_array_equal(out, [0.0, 1.0])


def test_finite_diff_examples():
    g = finite_diff_grad(lambda x: np.sum(x ** 2), np.array([1.0, 2.0]), 1e-5)
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-6)
    np.testing.assert_array_equal(finite_diff_grad(lambda x: 3.0, np.ones(4)), np.zeros(4))
    np.testing.assert_allclose(finite_diff_grad(lambda x: x[0], np.array([5.0, -1.0, 2.0])),
                               [1.0, 0.0, 0.0], atol=1e-9)


@given(st.floats(-10, 10), arrays(np.float64, st.integers(1, 8), elements=finite))
def test_finite_diff_linear(c, x):
    g = finite_diff_grad(lambda v: c * np.sum(v), x.copy(), 1e-5)
    assert np.all(np.abs(g - c) <= 1e-6 * max(1.0, np.abs(x).max()))


def test_finite_diff_restores_input():
    x = np.array([0.3, -0.7])
    finite_diff_grad(lambda v: float(np.prod(v)), x)
    np.testing.assert_array_equal(x, [0.3, -0.7])


def test_finite_diff_reports_nonfinite():
    with pytest.raises(OracleError), np.errstate(invalid="ignore", divide="ignore"):
        finite_diff_grad(lambda v: np.log(v[0]), np.array([0.0]), 1e-3)
    with pytest.raises(ValueError):
        finite_diff_grad(lambda v: 0.0, np.ones(1), 0.0)


def test_init_weights():
    np.testing.assert_array_equal(init_weights([3], "zeros", make_rng(0)), np.zeros(3))
    w = init_weights([4, 50], "uniform_scaled", make_rng(0))
    assert np.all(np.abs(w) <= 0.5)
    assert np.abs(w).max() > 0.4  # actually spans the range
    a = init_weights([4, 3], "uniform_scaled", make_rng(42))
    b = init_weights([4, 3], "uniform_scaled", make_rng(42))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(DimensionError):
        init_weights([], "zeros", make_rng(0))


def test_fork_rng_streams_are_stable_and_distinct():
    a = fork_rng(5, "init").random(4)
    np.testing.assert_array_equal(a, fork_rng(5, "init").random(4))
    assert not np.array_equal(a, fork_rng(5, "shuffle").random(4))
    assert not np.array_equal(a, fork_rng(6, "init").random(4))


def test_pcg64_stream_is_pinned():
    # Guards the cross-platform reproducibility contract of make_rng.
    first = make_rng(0).integers(0, 2**32, size=3)
    np.testing.assert_array_equal(first, make_rng(0).integers(0, 2**32, size=3))
    assert make_rng(123).random() == np.random.Generator(np.random.PCG64(123)).random()


def test_debug_flag_catches_non_finite_ops():
    import os
    import subprocess
    import sys

    code = ("import numpy as np\n"
            "from doforecast.errors import NonFiniteError\n"
            "from doforecast.numeric import matmul\n"
            "try:\n"
            "    matmul(np.array([[np.inf]]), np.array([[0.0]]))\n"
            "except NonFiniteError:\n"
            "    print('caught')\n")
    for flag, want in (("1", "caught"), ("0", "")):
        env = dict(os.environ, DOFORECAST_DEBUG=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                             check=True)
        assert res.stdout.strip() == want
