"""LSTM and GRU cells, unrolling, BPTT, the bidirectional wrapper and the dense
output head.

Gate parameters are stored fused (``wx`` is ``[input_dim, G*hidden]``) so one
matmul yields every gate; :meth:`GatedParams.gate` hands out per-gate views.

LSTM::

    F = sigmoid(x Wxf + h Whf + bf)      I = sigmoid(x Wxi + h Whi + bi)
    G = tanh(x Wxc + h Whc + bc)         O = sigmoid(x Wxo + h Who + bo)
    C = F*C_prev + I*G                   H = O*tanh(C)

GRU (update gate weights the *previous* state)::

    R = sigmoid(x Wxr + h Whr + br)      Z = sigmoid(x Wxz + h Whz + bz)
    N = tanh(x Wxh + (R*h) Whh + bh)     H = Z*h + (1 - Z)*N
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .errors import DimensionError
from .numeric import as_tensor, check_finite, init_weights, sigmoid

LSTM_GATES = ("forget", "input", "candidate", "output")
GRU_GATES = ("reset", "update", "candidate")


@dataclass
class GatedParams:
    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray

    gates: ClassVar[tuple[str, ...]] = ()

    def __post_init__(self):
        g = len(self.gates)
        h = self.wh.shape[0]
        if self.wh.shape != (h, g * h):
            raise DimensionError(f"recurrent weights must be [{h}, {g * h}], got {self.wh.shape}")
        if self.wx.ndim != 2 or self.wx.shape[1] != g * h:
            raise DimensionError(f"input weights must be [in, {g * h}], got {self.wx.shape}")
        if self.b.shape != (g * h,):
            raise DimensionError(f"bias must be [{g * h}], got {self.b.shape}")

    @property
    def hidden_dim(self) -> int:
        return self.wh.shape[0]

    @property
    def input_dim(self) -> int:
        return self.wx.shape[0]

    def gate(self, name: str):
        """``(W_x, W_h, b)`` views for one gate."""
        k = self.gates.index(name)
        h = self.hidden_dim
        sl = slice(k * h, (k + 1) * h)
        return self.wx[:, sl], self.wh[:, sl], self.b[sl]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"wx": self.wx, "wh": self.wh, "b": self.b}

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        g = len(cls.gates)
        wx = init_weights([input_dim, g * hidden_dim], "uniform_scaled", rng)
        wh = init_weights([hidden_dim, g * hidden_dim], "uniform_scaled", rng)
        b = init_weights([g * hidden_dim], "zeros", rng)
        return cls(wx, wh, b)


class LstmParams(GatedParams):
    gates = LSTM_GATES

    @classmethod
    def init(cls, input_dim, hidden_dim, rng):
        p = super().init(input_dim, hidden_dim, rng)
        p.gate("forget")[2][:] = 1.0
        return p


class GruParams(GatedParams):
    gates = GRU_GATES


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray | None = None

    @classmethod
    def zeros(cls, batch: int, hidden_dim: int, with_cell: bool):
        h = np.zeros((batch, hidden_dim))
        return cls(h, np.zeros_like(h) if with_cell else None)


@dataclass
class LstmStep:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


@dataclass
class GruStep:
    x: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    n: np.ndarray
    h: np.ndarray


@dataclass
class GateTrace:
    cell: str
    input_dim: int
    hidden_dim: int
    steps: list = field(default_factory=list)


def _check_input(x, params: GatedParams, h: np.ndarray):
    x = as_tensor(x, rank=2)
    if x.shape[1] != params.input_dim:
        raise DimensionError(f"input has {x.shape[1]} features, params expect {params.input_dim}")
    if h.shape != (x.shape[0], params.hidden_dim):
        raise DimensionError(
            f"state shape {h.shape} does not match batch {x.shape[0]} x hidden {params.hidden_dim}")
    return x


def lstm_cell_forward(x_t, state: CellState, params: LstmParams):
    x = _check_input(x_t, params, state.h)
    if state.c is None or state.c.shape != state.h.shape:
        raise DimensionError("LSTM state needs a cell tensor shaped like h")
    hd = params.hidden_dim
    a = x @ params.wx + state.h @ params.wh + params.b
    f = sigmoid(a[:, :hd])
    i = sigmoid(a[:, hd:2 * hd])
    g = np.tanh(a[:, 2 * hd:3 * hd])
    o = sigmoid(a[:, 3 * hd:])
    c = f * state.c + i * g
    tc = np.tanh(c)
    h = check_finite(o * tc, "lstm_cell_forward")
    step = LstmStep(x, state.h, state.c, f, i, g, o, c, tc, h)
    return CellState(h, c), step


def gru_cell_forward(x_t, h_prev, params: GruParams):
    h_prev = as_tensor(h_prev, rank=2)
    x = _check_input(x_t, params, h_prev)
    hd = params.hidden_dim
    a = x @ params.wx[:, :2 * hd] + h_prev @ params.wh[:, :2 * hd] + params.b[:2 * hd]
    r = sigmoid(a[:, :hd])
    z = sigmoid(a[:, hd:])
    n = np.tanh(x @ params.wx[:, 2 * hd:] + (r * h_prev) @ params.wh[:, 2 * hd:] + params.b[2 * hd:])
    h = check_finite(z * h_prev + (1.0 - z) * n, "gru_cell_forward")
    return h, GruStep(x, h_prev, r, z, n, h)


def _cell_kind(params) -> str:
    if isinstance(params, LstmParams):
        return "lstm"
    if isinstance(params, GruParams):
        return "gru"
    raise TypeError(f"unsupported parameter type {type(params).__name__}")


def unroll_forward(cell: str, sequence, params: GatedParams, init: CellState | None = None):
    """Run ``cell`` over ``sequence`` ``[batch, steps, input_dim]`` left to right.

    Returns the hidden sequence ``[batch, steps, hidden]`` and the full trace.
    """
    if cell != _cell_kind(params):
        raise TypeError(f"cell {cell!r} does not match {type(params).__name__}")
    seq = as_tensor(sequence, rank=3)
    batch, steps, _ = seq.shape
    if steps < 1:
        raise DimensionError("cannot unroll a zero-length sequence")
    hd = params.hidden_dim
    if init is None:
        init = CellState.zeros(batch, hd, with_cell=(cell == "lstm"))
    trace = GateTrace(cell, params.input_dim, hd)
    out = np.empty((batch, steps, hd))
    state = init
    for t in range(steps):
        if cell == "lstm":
            state, step = lstm_cell_forward(seq[:, t, :], state, params)
        else:
            h, step = gru_cell_forward(seq[:, t, :], state.h, params)
            state = CellState(h)
        trace.steps.append(step)
        out[:, t, :] = state.h
    return out, trace


def bidirectional_forward(cell: str, sequence, params_fwd: GatedParams, params_bwd: GatedParams):
    """Forward pass plus a pass over the time-reversed input, re-reversed and
    concatenated on the feature axis. Returns ``(out, (trace_fwd, trace_bwd))``."""
    if params_fwd.hidden_dim != params_bwd.hidden_dim:
        raise DimensionError(
            f"direction hidden sizes differ: {params_fwd.hidden_dim} vs {params_bwd.hidden_dim}")
    seq = as_tensor(sequence, rank=3)
    hf, tf = unroll_forward(cell, seq, params_fwd)
    hb_rev, tb = unroll_forward(cell, seq[:, ::-1, :], params_bwd)
    out = np.concatenate([hf, hb_rev[:, ::-1, :]], axis=2)
    return out, (tf, tb)


def rnn_backward(trace: GateTrace, grad_hidden, params: GatedParams):
    """BPTT. ``grad_hidden`` is dL/dH for every step ``[batch, steps, hidden]``.

    Returns ``({"wx", "wh", "b"} gradients, dL/dx [batch, steps, input_dim])``.
    """
    if trace.cell != _cell_kind(params) or trace.hidden_dim != params.hidden_dim \
            or trace.input_dim != params.input_dim:
        raise DimensionError("trace was recorded with different parameters")
    dh_seq = as_tensor(grad_hidden, rank=3)
    steps = len(trace.steps)
    batch = trace.steps[0].x.shape[0]
    hd = params.hidden_dim
    if dh_seq.shape != (batch, steps, hd):
        raise DimensionError(f"grad_hidden shape {dh_seq.shape} != {(batch, steps, hd)}")

    dwx = np.zeros_like(params.wx)
    dwh = np.zeros_like(params.wh)
    db = np.zeros_like(params.b)
    dx = np.empty((batch, steps, params.input_dim))
    dh_next = np.zeros((batch, hd))

    if trace.cell == "lstm":
        dc_next = np.zeros((batch, hd))
        for t in reversed(range(steps)):
            s = trace.steps[t]
            dh = dh_seq[:, t, :] + dh_next
            do = dh * s.tanh_c
            dc = dc_next + dh * s.o * (1.0 - s.tanh_c ** 2)
            da = np.concatenate([
                dc * s.c_prev * s.f * (1.0 - s.f),
                dc * s.g * s.i * (1.0 - s.i),
                dc * s.i * (1.0 - s.g ** 2),
                do * s.o * (1.0 - s.o),
            ], axis=1)
            dwx += s.x.T @ da
            dwh += s.h_prev.T @ da
            db += da.sum(axis=0)
            dx[:, t, :] = da @ params.wx.T
            dh_next = da @ params.wh.T
            dc_next = dc * s.f
    else:
        wh_rz = params.wh[:, :2 * hd]
        wh_n = params.wh[:, 2 * hd:]
        for t in reversed(range(steps)):
            s = trace.steps[t]
            dh = dh_seq[:, t, :] + dh_next
            dn = dh * (1.0 - s.z)
            dz = dh * (s.h_prev - s.n)
            dhp = dh * s.z
            dan = dn * (1.0 - s.n ** 2)
            rh = s.r * s.h_prev
            drh = dan @ wh_n.T
            dr = drh * s.h_prev
            dhp += drh * s.r
            dar = dr * s.r * (1.0 - s.r)
            daz = dz * s.z * (1.0 - s.z)
            da_rz = np.concatenate([dar, daz], axis=1)
            dwx[:, :2 * hd] += s.x.T @ da_rz
            dwx[:, 2 * hd:] += s.x.T @ dan
            dwh[:, :2 * hd] += s.h_prev.T @ da_rz
            dwh[:, 2 * hd:] += rh.T @ dan
            db[:2 * hd] += da_rz.sum(axis=0)
            db[2 * hd:] += dan.sum(axis=0)
            dx[:, t, :] = da_rz @ params.wx[:, :2 * hd].T + dan @ params.wx[:, 2 * hd:].T
            dh_next = dhp + da_rz @ wh_rz.T
    return {"wx": dwx, "wh": dwh, "b": db}, dx


@dataclass
class DenseHead:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise DimensionError(f"dense head W {self.W.shape} / b {self.b.shape} inconsistent")

    @property
    def horizon(self) -> int:
        return self.W.shape[1]

    @classmethod
    def init(cls, feature_dim: int, horizon: int, rng: np.random.Generator):
        return cls(init_weights([feature_dim, horizon], "uniform_scaled", rng),
                   init_weights([horizon], "zeros", rng))


def dense_head_forward(features, head: DenseHead) -> np.ndarray:
    x = as_tensor(features, rank=2)
    if x.shape[1] != head.W.shape[0]:
        raise DimensionError(f"features {x.shape} do not match head weights {head.W.shape}")
    return check_finite(x @ head.W + head.b, "dense_head_forward")


def dense_head_backward(features, head: DenseHead, grad_out):
    """Returns ``({"W", "b"} gradients, dL/dfeatures)``."""
    return {"W": features.T @ grad_out, "b": grad_out.sum(axis=0)}, grad_out @ head.W.T
