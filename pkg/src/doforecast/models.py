"""The six forecasters (plus a linear baseline) behind one small interface.

Every model keeps its weights in ``self.params``, a flat ``name -> ndarray``
dict. Layer structures are rebuilt as views over those arrays on each pass, so
the optimizer can update ``params`` in place and serialization is a dict dump.

Inputs are ``[batch, in_len, 1]``; outputs ``[batch, out_len]``.
"""

from __future__ import annotations

import numpy as np

from .conv import (
    ConvSpec,
    ResidualBlockParams,
    TcnSpec,
    conv1d_forward,
    conv_backward,
    max_pool1d,
    max_pool1d_backward,
    tcn_trunk_backward,
    tcn_trunk_forward,
)
from .errors import DimensionError
from .numeric import as_tensor, fork_rng, init_weights, relu
from .recurrent import (
    DenseHead,
    GruParams,
    LstmParams,
    dense_head_backward,
    dense_head_forward,
    rnn_backward,
    unroll_forward,
)

MODEL_KINDS = ("lstm", "gru", "bilstm", "bigru", "cnn", "tcn")


class Forecaster:
    kind = "base"

    def __init__(self, in_len: int, out_len: int, params: dict[str, np.ndarray]):
        self.in_len = int(in_len)
        self.out_len = int(out_len)
        self.params = params

    def hyperparams(self) -> dict:
        return {}

    def config(self) -> dict:
        return {"kind": self.kind, "in_len": self.in_len, "out_len": self.out_len,
                **self.hyperparams()}

    def _check(self, x) -> np.ndarray:
        x = as_tensor(x, rank=3)
        if x.shape[1] != self.in_len or x.shape[2] != 1:
            raise DimensionError(
                f"{self.kind} expects input [batch, {self.in_len}, 1], got {x.shape}")
        return x

    def forward(self, x, training: bool = False, rng=None):
        raise NotImplementedError

    def backward(self, cache, grad_out) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def predict(self, x) -> np.ndarray:
        return self.forward(x, training=False)[0]

    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _head(self) -> DenseHead:
        return DenseHead(self.params["head.W"], self.params["head.b"])


class LinearForecaster(Forecaster):
    """Dense head on the flattened input window."""

    kind = "linear"

    @classmethod
    def create(cls, in_len, out_len, rng):
        head = DenseHead.init(in_len, out_len, rng)
        return cls(in_len, out_len, {"head.W": head.W, "head.b": head.b})

    def forward(self, x, training=False, rng=None):
        feats = self._check(x)[:, :, 0]
        return dense_head_forward(feats, self._head()), feats

    def backward(self, cache, grad_out):
        g, _ = dense_head_backward(cache, self._head(), grad_out)
        return {"head.W": g["W"], "head.b": g["b"]}


class RecurrentForecaster(Forecaster):
    """Single recurrent layer (optionally bidirectional) -> dense head on the
    final state(s). Initial states are zero for every window."""

    def __init__(self, in_len, out_len, params, cell: str, units: int, bidirectional: bool):
        super().__init__(in_len, out_len, params)
        if cell not in ("lstm", "gru"):
            raise ValueError(f"unknown cell {cell!r}")
        self.cell = cell
        self.units = int(units)
        self.bidirectional = bool(bidirectional)
        self.kind = ("bi" if bidirectional else "") + cell

    @classmethod
    def create(cls, in_len, out_len, rng, cell="lstm", units=50, bidirectional=False):
        pcls = LstmParams if cell == "lstm" else GruParams
        params = {}
        dirs = ("fwd", "bwd") if bidirectional else ("fwd",)
        for d in dirs:
            for name, arr in pcls.init(1, units, rng).arrays().items():
                params[f"{d}.{name}"] = arr
        head = DenseHead.init(units * len(dirs), out_len, rng)
        params["head.W"], params["head.b"] = head.W, head.b
        return cls(in_len, out_len, params, cell, units, bidirectional)

    def hyperparams(self):
        return {"units": self.units}

    def _cell_params(self, d: str):
        pcls = LstmParams if self.cell == "lstm" else GruParams
        p = self.params
        return pcls(p[f"{d}.wx"], p[f"{d}.wh"], p[f"{d}.b"])

    def forward(self, x, training=False, rng=None):
        x = self._check(x)
        hf, tf = unroll_forward(self.cell, x, self._cell_params("fwd"))
        if self.bidirectional:
            hb, tb = unroll_forward(self.cell, x[:, ::-1, :], self._cell_params("bwd"))
            feats = np.concatenate([hf[:, -1, :], hb[:, -1, :]], axis=1)
            traces = (tf, tb)
        else:
            feats = hf[:, -1, :]
            traces = (tf,)
        return dense_head_forward(feats, self._head()), (traces, feats)

    def backward(self, cache, grad_out):
        traces, feats = cache
        gh, dfeats = dense_head_backward(feats, self._head(), grad_out)
        grads = {"head.W": gh["W"], "head.b": gh["b"]}
        u = self.units
        for j, (d, tr) in enumerate(zip(("fwd", "bwd"), traces)):
            dseq = np.zeros((feats.shape[0], len(tr.steps), u))
            dseq[:, -1, :] = dfeats[:, j * u:(j + 1) * u]
            g, _ = rnn_backward(tr, dseq, self._cell_params(d))
            for name, arr in g.items():
                grads[f"{d}.{name}"] = arr
        return grads


class CnnForecaster(Forecaster):
    """Causal conv -> ReLU -> max pool -> flatten -> dense head."""

    kind = "cnn"

    def __init__(self, in_len, out_len, params, filters=16, kernel_size=3, pool_size=2):
        super().__init__(in_len, out_len, params)
        self.filters = int(filters)
        self.kernel_size = int(kernel_size)
        self.pool_size = int(pool_size)
        self.spec = ConvSpec(self.filters, self.kernel_size, padding="causal")
        if self.in_len < self.pool_size:
            raise DimensionError("input window shorter than the pooling size")

    @classmethod
    def create(cls, in_len, out_len, rng, filters=16, kernel_size=3, pool_size=2):
        w = init_weights([kernel_size, 1, filters], "uniform_scaled", rng)
        feat = (in_len // pool_size) * filters
        head = DenseHead.init(feat, out_len, rng)
        params = {"conv.w": w, "conv.b": np.zeros(filters), "head.W": head.W, "head.b": head.b}
        return cls(in_len, out_len, params, filters, kernel_size, pool_size)

    def hyperparams(self):
        return {"filters": self.filters, "kernel_size": self.kernel_size,
                "pool_size": self.pool_size}

    def forward(self, x, training=False, rng=None):
        x = self._check(x)
        h, ct = conv1d_forward(x, self.spec, self.params["conv.w"], self.params["conv.b"],
                               return_trace=True)
        a = relu(h)
        pooled, arg = max_pool1d(a, self.pool_size, return_argmax=True)
        feats = pooled.reshape(x.shape[0], -1)
        return dense_head_forward(feats, self._head()), (ct, h, arg, pooled.shape, feats)

    def backward(self, cache, grad_out):
        ct, h, arg, pshape, feats = cache
        gh, dfeats = dense_head_backward(feats, self._head(), grad_out)
        da = max_pool1d_backward(dfeats.reshape(pshape), arg, self.pool_size, h.shape[1])
        gc, _ = conv_backward(ct, da * (h > 0))
        return {"conv.w": gc["w"], "conv.b": gc["b"], "head.W": gh["W"], "head.b": gh["b"]}


class TcnForecaster(Forecaster):
    """Residual TCN trunk -> dense head on the last step's channel vector."""

    kind = "tcn"

    def __init__(self, in_len, out_len, params, spec: TcnSpec):
        super().__init__(in_len, out_len, params)
        self.spec = spec

    @classmethod
    def create(cls, in_len, out_len, rng, dilations=(1, 2, 4, 8, 16, 32), kernel_size=3,
               filters=4, dropout_rate=0.0):
        spec = TcnSpec(tuple(dilations), kernel_size, filters, dropout_rate)
        params = {}
        cin = 1
        for j in range(len(spec.dilations)):
            bp = ResidualBlockParams.init(cin, filters, kernel_size, rng)
            for name, arr in bp.arrays().items():
                params[f"block{j}.{name}"] = arr
            cin = filters
        head = DenseHead.init(filters, out_len, rng)
        params["head.W"], params["head.b"] = head.W, head.b
        return cls(in_len, out_len, params, spec)

    def hyperparams(self):
        return {"dilations": list(self.spec.dilations), "kernel_size": self.spec.kernel_size,
                "filters": self.spec.filters, "dropout_rate": self.spec.dropout_rate}

    def blocks(self) -> list[ResidualBlockParams]:
        out = []
        p = self.params
        for j in range(len(self.spec.dilations)):
            pre = f"block{j}."
            out.append(ResidualBlockParams(
                p[pre + "v1"], p[pre + "g1"], p[pre + "b1"],
                p[pre + "v2"], p[pre + "g2"], p[pre + "b2"],
                p.get(pre + "wm"), p.get(pre + "bm")))
        return out

    def trunk(self, x, training=False, rng=None):
        return tcn_trunk_forward(self._check(x), self.spec, self.blocks(), rng, training)

    def forward(self, x, training=False, rng=None):
        trunk, tr = self.trunk(x, training, rng)
        feats = trunk[:, -1, :]
        return dense_head_forward(feats, self._head()), (tr, trunk.shape, feats)

    def backward(self, cache, grad_out):
        tr, tshape, feats = cache
        gh, dfeats = dense_head_backward(feats, self._head(), grad_out)
        dtrunk = np.zeros(tshape)
        dtrunk[:, -1, :] = dfeats
        block_grads, _ = tcn_trunk_backward(tr, dtrunk, self.blocks())
        grads = {"head.W": gh["W"], "head.b": gh["b"]}
        for j, g in enumerate(block_grads):
            for name, arr in g.items():
                grads[f"block{j}.{name}"] = arr
        return grads


def tcn_forward(x, model: TcnForecaster, rng=None, training: bool = False) -> np.ndarray:
    return model.forward(x, training=training, rng=rng)[0]


def build_model(kind: str, in_len: int = 10, out_len: int = 10, seed: int = 0,
                rng: np.random.Generator | None = None, **hp) -> Forecaster:
    """Fresh model of ``kind`` with hyperparameters ``hp`` (published defaults otherwise)."""
    if rng is None:
        rng = fork_rng(seed, "init")
    if kind in ("lstm", "gru", "bilstm", "bigru"):
        return RecurrentForecaster.create(in_len, out_len, rng, cell=kind.removeprefix("bi"),
                                          units=hp.get("units", 50),
                                          bidirectional=kind.startswith("bi"))
    if kind == "cnn":
        return CnnForecaster.create(in_len, out_len, rng, filters=hp.get("filters", 16),
                                    kernel_size=hp.get("kernel_size", 3),
                                    pool_size=hp.get("pool_size", 2))
    if kind == "tcn":
        return TcnForecaster.create(in_len, out_len, rng,
                                    dilations=hp.get("dilations", (1, 2, 4, 8, 16, 32)),
                                    kernel_size=hp.get("kernel_size", 3),
                                    filters=hp.get("filters", 4),
                                    dropout_rate=hp.get("dropout_rate", 0.0))
    if kind == "linear":
        return LinearForecaster.create(in_len, out_len, rng)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def model_from_params(config: dict, params: dict[str, np.ndarray]) -> Forecaster:
    """Rebuild a model from :meth:`Forecaster.config` output and its arrays."""
    kind = config["kind"]
    in_len, out_len = config["in_len"], config["out_len"]
    if kind in ("lstm", "gru", "bilstm", "bigru"):
        model = RecurrentForecaster(in_len, out_len, params, kind.removeprefix("bi"),
                                    config["units"], kind.startswith("bi"))
    elif kind == "cnn":
        model = CnnForecaster(in_len, out_len, params, config["filters"],
                              config["kernel_size"], config["pool_size"])
    elif kind == "tcn":
        spec = TcnSpec(tuple(config["dilations"]), config["kernel_size"], config["filters"],
                       config.get("dropout_rate", 0.0))
        model = TcnForecaster(in_len, out_len, params, spec)
    elif kind == "linear":
        model = LinearForecaster(in_len, out_len, params)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    fresh = build_model(kind, in_len, out_len, rng=np.random.default_rng(0),
                        **{k: v for k, v in config.items()
                           if k not in ("kind", "in_len", "out_len")})
    for name, arr in fresh.params.items():
        if name not in params or params[name].shape != arr.shape:
            raise DimensionError(f"parameter {name!r} missing or misshapen for {kind}")
    if set(params) != set(fresh.params):
        raise DimensionError(f"unexpected parameters: {sorted(set(params) - set(fresh.params))}")
    return model
