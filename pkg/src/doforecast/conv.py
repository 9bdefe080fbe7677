"""1-D convolution, max pooling, weight normalization, spatial dropout and the
TCN residual block, each with its hand-written backward pass.

Activations are ``[batch, steps, channels]``; conv kernels are ``[k, in, out]``
with tap ``i`` reading ``x[t - d*(k-1-i)]`` under causal padding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionError
from .numeric import as_tensor, check_finite, init_weights, relu


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    kernel_size: int
    stride: int = 1
    dilation: int = 1
    padding: str = "causal"

    def __post_init__(self):
        if self.filters < 1 or self.kernel_size < 1 or self.stride < 1 or self.dilation < 1:
            raise ValueError(f"conv sizes must be positive: {self}")
        if self.padding not in ("causal", "none"):
            raise ValueError(f"padding must be 'causal' or 'none', got {self.padding!r}")

    @property
    def span(self) -> int:
        return self.dilation * (self.kernel_size - 1) + 1


@dataclass(frozen=True)
class TcnSpec:
    dilations: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    kernel_size: int = 3
    filters: int = 4
    dropout_rate: float = 0.0
    convs_per_block: int = 2

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ValueError("dilations must be a non-empty list of positive ints")
        if self.kernel_size < 1 or self.filters < 1:
            raise ValueError("kernel_size and filters must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.convs_per_block != 2:
            raise ValueError("residual blocks hold exactly two convolutions")


def receptive_field(kernel_size: int, dilations, convs_per_block: int = 2) -> int:
    return 1 + convs_per_block * (kernel_size - 1) * int(sum(dilations))


@dataclass
class ConvTrace:
    xpad: np.ndarray
    w: np.ndarray
    spec: ConvSpec
    in_steps: int
    full_len: int


def _pad(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    if spec.padding == "none":
        if x.shape[1] < spec.span:
            raise DimensionError(
                f"input of {x.shape[1]} steps is shorter than the kernel span {spec.span}")
        return x
    p = spec.span - 1
    if p == 0:
        return x
    out = np.zeros((x.shape[0], x.shape[1] + p, x.shape[2]))
    out[:, p:, :] = x
    return out


def conv1d_forward(x, spec: ConvSpec, weights, bias, return_trace: bool = False):
    x = as_tensor(x, rank=3)
    w = as_tensor(weights, rank=3)
    bias = as_tensor(bias, rank=1)
    if w.shape[0] != spec.kernel_size or w.shape[2] != spec.filters or w.shape[1] != x.shape[2]:
        raise DimensionError(
            f"kernel {w.shape} inconsistent with spec (k={spec.kernel_size}, "
            f"filters={spec.filters}) and input channels {x.shape[2]}")
    if bias.shape != (spec.filters,):
        raise DimensionError(f"bias must be [{spec.filters}], got {bias.shape}")
    xpad = _pad(x, spec)
    full_len = xpad.shape[1] - spec.span + 1
    y = kernels.conv1d_fwd(xpad, w, bias, spec.dilation, full_len)
    if spec.stride > 1:
        y = np.ascontiguousarray(y[:, ::spec.stride, :])
    check_finite(y, "conv1d_forward")
    if return_trace:
        return y, ConvTrace(xpad, w, spec, x.shape[1], full_len)
    return y


def conv_backward(trace: ConvTrace, grad_out):
    """Returns ``({"w", "b"} gradients, dL/dx)``."""
    dy = as_tensor(grad_out, rank=3)
    spec = trace.spec
    if spec.stride > 1:
        full = np.zeros((dy.shape[0], trace.full_len, dy.shape[2]))
        full[:, ::spec.stride, :] = dy
        dy = full
    if dy.shape[1] != trace.full_len or dy.shape[2] != trace.w.shape[2]:
        raise DimensionError(f"upstream gradient {dy.shape} does not match the traced conv")
    dxpad, dw, db = kernels.conv1d_bwd(trace.xpad, trace.w, dy, spec.dilation)
    dx = dxpad[:, dxpad.shape[1] - trace.in_steps:, :]
    return {"w": dw, "b": db}, np.ascontiguousarray(dx)


def max_pool1d(x, pool_size: int, return_argmax: bool = False):
    """Non-overlapping max pooling; trailing remainder dropped, ties go to the first index."""
    x = as_tensor(x, rank=3)
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    if pool_size > x.shape[1]:
        raise DimensionError(f"pool size {pool_size} exceeds sequence length {x.shape[1]}")
    out, arg = kernels.maxpool_fwd(x, int(pool_size))
    return (out, arg) if return_argmax else out


def max_pool1d_backward(grad_out, argmax, pool_size: int, steps: int):
    return kernels.maxpool_bwd(as_tensor(grad_out, rank=3), argmax, int(pool_size), int(steps))


def _wn_axes(v: np.ndarray, g) -> tuple:
    return tuple(range(v.ndim)) if np.ndim(g) == 0 else tuple(range(v.ndim - 1))


def weight_norm_apply(v, g):
    """``w = g * v / ||v||``, with one norm per output channel (last axis).

    A scalar ``g`` treats the whole of ``v`` as one channel.
    """
    v = as_tensor(v)
    g = np.asarray(g, dtype=np.float64)
    norm = np.sqrt(np.sum(v * v, axis=_wn_axes(v, g), keepdims=np.ndim(g) != 0))
    if np.any(norm == 0):
        raise ValueError("weight normalization needs a non-zero direction vector per channel")
    return g * v / norm


def weight_norm_backward(v, g, grad_w):
    """Returns ``(dL/dv, dL/dg)`` given ``dL/dw``."""
    axes = _wn_axes(v, g)
    keep = np.ndim(g) != 0
    norm = np.sqrt(np.sum(v * v, axis=axes, keepdims=keep))
    u = v / norm
    dg = np.sum(grad_w * u, axis=axes, keepdims=keep)
    dv = (g / norm) * (grad_w - dg * u)
    return dv, (dg.reshape(np.shape(g)) if keep else float(dg))


def dropout_mask(batch: int, channels: int, rate: float, rng: np.random.Generator):
    """Per-(sample, channel) keep mask, pre-scaled by ``1/(1-rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    keep = rng.random((batch, 1, channels)) >= rate
    return keep / (1.0 - rate)


def spatial_dropout(x, rate: float, rng: np.random.Generator | None, training: bool):
    x = as_tensor(x, rank=3)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    return x * dropout_mask(x.shape[0], x.shape[2], rate, rng)


@dataclass
class ResidualBlockParams:
    v1: np.ndarray
    g1: np.ndarray
    b1: np.ndarray
    v2: np.ndarray
    g2: np.ndarray
    b2: np.ndarray
    wm: np.ndarray | None = None
    bm: np.ndarray | None = None

    def __post_init__(self):
        if self.v1.shape[0] != self.v2.shape[0]:
            raise DimensionError("both convolutions in a block share one kernel size")
        if (self.wm is None) != (self.v1.shape[1] == self.v2.shape[2]):
            raise DimensionError("1x1 matching conv must be present iff channel counts differ")

    @property
    def in_channels(self) -> int:
        return self.v1.shape[1]

    @property
    def filters(self) -> int:
        return self.v2.shape[2]

    def arrays(self) -> dict[str, np.ndarray]:
        out = {k: getattr(self, k) for k in ("v1", "g1", "b1", "v2", "g2", "b2")}
        if self.wm is not None:
            out["wm"] = self.wm
            out["bm"] = self.bm
        return out

    @classmethod
    def init(cls, in_channels: int, filters: int, kernel_size: int, rng: np.random.Generator):
        v1 = init_weights([kernel_size, in_channels, filters], "uniform_scaled", rng)
        v2 = init_weights([kernel_size, filters, filters], "uniform_scaled", rng)
        # g starts at ||v|| so the initial effective kernel equals v.
        g1 = np.sqrt(np.sum(v1 * v1, axis=(0, 1)))
        g2 = np.sqrt(np.sum(v2 * v2, axis=(0, 1)))
        wm = bm = None
        if in_channels != filters:
            wm = init_weights([1, in_channels, filters], "uniform_scaled", rng)
            bm = np.zeros(filters)
        return cls(v1, g1, np.zeros(filters), v2, g2, np.zeros(filters), wm, bm)


@dataclass
class BlockTrace:
    conv1: ConvTrace
    h1: np.ndarray
    mask1: np.ndarray | None
    conv2: ConvTrace
    h2: np.ndarray
    mask2: np.ndarray | None
    skip_trace: ConvTrace | None
    pre: np.ndarray


def residual_block_forward(x, params: ResidualBlockParams, dilation: int, kernel_size: int,
                           rng: np.random.Generator | None = None, training: bool = False,
                           dropout_rate: float = 0.0):
    """``out = relu(match(x) + f(x))`` where ``f`` is
    ``[causal dilated conv (weight-normed) -> relu -> spatial dropout]`` twice."""
    x = as_tensor(x, rank=3)
    if x.shape[2] != params.in_channels:
        raise DimensionError(f"block expects {params.in_channels} channels, got {x.shape[2]}")
    filters = params.filters
    spec = ConvSpec(filters, kernel_size, dilation=dilation, padding="causal")
    drop = training and dropout_rate > 0.0

    w1 = weight_norm_apply(params.v1, params.g1)
    h1, c1 = conv1d_forward(x, spec, w1, params.b1, return_trace=True)
    a1 = relu(h1)
    m1 = dropout_mask(x.shape[0], filters, dropout_rate, rng) if drop else None
    if m1 is not None:
        a1 = a1 * m1

    w2 = weight_norm_apply(params.v2, params.g2)
    h2, c2 = conv1d_forward(a1, spec, w2, params.b2, return_trace=True)
    a2 = relu(h2)
    m2 = dropout_mask(x.shape[0], filters, dropout_rate, rng) if drop else None
    if m2 is not None:
        a2 = a2 * m2

    if params.wm is not None:
        skip, cs = conv1d_forward(x, ConvSpec(filters, 1), params.wm, params.bm, return_trace=True)
    else:
        skip, cs = x, None
    pre = skip + a2
    out = check_finite(relu(pre), "residual_block_forward")
    return out, BlockTrace(c1, h1, m1, c2, h2, m2, cs, pre)


def residual_block_backward(trace: BlockTrace, grad_out, params: ResidualBlockParams):
    """Returns ``(gradients keyed like ResidualBlockParams.arrays(), dL/dx)``."""
    dpre = as_tensor(grad_out, rank=3) * (trace.pre > 0)
    grads = {}
    if trace.skip_trace is not None:
        gs, dx = conv_backward(trace.skip_trace, dpre)
        grads["wm"], grads["bm"] = gs["w"], gs["b"]
    else:
        dx = dpre.copy()

    da2 = dpre if trace.mask2 is None else dpre * trace.mask2
    dh2 = da2 * (trace.h2 > 0)
    g2, da1 = conv_backward(trace.conv2, dh2)
    grads["v2"], grads["g2"] = weight_norm_backward(params.v2, params.g2, g2["w"])
    grads["b2"] = g2["b"]

    if trace.mask1 is not None:
        da1 = da1 * trace.mask1
    dh1 = da1 * (trace.h1 > 0)
    g1, dx1 = conv_backward(trace.conv1, dh1)
    grads["v1"], grads["g1"] = weight_norm_backward(params.v1, params.g1, g1["w"])
    grads["b1"] = g1["b"]
    return grads, dx + dx1


@dataclass
class TcnTrace:
    blocks: list = field(default_factory=list)
    trunk: np.ndarray | None = None


def tcn_trunk_forward(x, spec: TcnSpec, blocks: list, rng=None, training: bool = False):
    """Stack one residual block per dilation; output length equals input length."""
    if len(blocks) != len(spec.dilations):
        raise DimensionError(f"{len(blocks)} blocks for {len(spec.dilations)} dilations")
    h = as_tensor(x, rank=3)
    trace = TcnTrace()
    for d, bp in zip(spec.dilations, blocks):
        h, bt = residual_block_forward(h, bp, d, spec.kernel_size, rng, training, spec.dropout_rate)
        trace.blocks.append(bt)
    trace.trunk = h
    return h, trace


def tcn_trunk_backward(trace: TcnTrace, grad_trunk, blocks: list):
    grads = [None] * len(blocks)
    d = as_tensor(grad_trunk, rank=3)
    for j in reversed(range(len(blocks))):
        grads[j], d = residual_block_backward(trace.blocks[j], d, blocks[j])
    return grads, d
