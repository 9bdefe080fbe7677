"""Dense-array primitives: products, activations, initialization, RNG and a
central-difference gradient probe.

Tensors are plain float64 ``numpy.ndarray`` objects (C order, rank <= 3).
"""

from __future__ import annotations

import os
import zlib
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError, OracleError

DTYPE = np.float64

# Set DOFORECAST_DEBUG=1 to assert finiteness after every public op.
DEBUG = os.environ.get("DOFORECAST_DEBUG", "0").lower() in ("1", "true", "yes")

ACTIVATIONS = ("sigmoid", "tanh", "relu")


def check_finite(x: np.ndarray, where: str = "") -> np.ndarray:
    if DEBUG and not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values produced by {where or 'operation'}")
    return x


def as_tensor(x, rank: int | None = None) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if rank is not None and arr.ndim != rank:
        raise DimensionError(f"expected rank-{rank} tensor, got shape {arr.shape}")
    return arr


def make_rng(seed: int) -> np.random.Generator:
    """Generator backed by PCG64, whose stream is stable across platforms."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def fork_rng(seed: int, consumer: str) -> np.random.Generator:
    """Independent stream for a named consumer (``"init"``, ``"shuffle"``, ...).

    The child is a pure function of ``(seed, consumer)``, so adding a new
    consumer never perturbs the existing ones.
    """
    key = zlib.crc32(consumer.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.PCG64(ss))


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul")


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split on sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def activation(x, kind: str) -> np.ndarray:
    x = as_tensor(x)
    if kind == "sigmoid":
        y = sigmoid(x)
    elif kind == "tanh":
        y = np.tanh(x)
    elif kind == "relu":
        y = relu(x)
    else:
        raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
    return check_finite(y, kind)


def finite_diff_grad(f: Callable[[np.ndarray], float], x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x`` is perturbed in place one element at a time and restored, so callers
    may pass a live parameter array and have ``f`` close over it.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not isinstance(x, np.ndarray) or x.dtype != DTYPE:
        x = as_tensor(x)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError(f"f is not finite around element {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def init_weights(shape: Sequence[int], scheme: str, rng: np.random.Generator,
                 fan_in: int | None = None) -> np.ndarray:
    """``uniform_scaled`` draws U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    ``fan_in`` defaults to the product of all but the last axis (the first axis
    for vectors), matching the ``[in, out]`` / ``[k, in, out]`` layouts used here.
    """
    shape = tuple(int(s) for s in shape)
    if not shape:
        raise DimensionError("init_weights needs a non-empty shape")
    if any(s <= 0 for s in shape):
        raise DimensionError(f"shape entries must be positive, got {shape}")
    if scheme == "zeros":
        return np.zeros(shape, dtype=DTYPE)
    if scheme != "uniform_scaled":
        raise ValueError(f"unknown init scheme {scheme!r}")
    if fan_in is None:
        fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)
