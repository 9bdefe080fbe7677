import numpy as np
import pytest

from doforecast.errors import DataError, DimensionError
from doforecast.models import MODEL_KINDS, TcnForecaster, build_model, model_from_params, tcn_forward
from doforecast.numeric import make_rng
from doforecast.serialize import load_model, load_params, save_model, save_params

SMALL = {
    "lstm": dict(units=5), "gru": dict(units=5), "bilstm": dict(units=4), "bigru": dict(units=4),
    "cnn": dict(filters=4), "tcn": dict(dilations=(1, 2), filters=3),
}


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_output_shape_and_determinism(kind):
    m = build_model(kind, in_len=10, out_len=4, seed=3, **SMALL[kind])
    x = make_rng(0).normal(size=(7, 10, 1))
    y = m.predict(x)
    assert y.shape == (7, 4)
    np.testing.assert_array_equal(y, build_model(kind, 10, 4, seed=3, **SMALL[kind]).predict(x))
    assert not np.array_equal(y, build_model(kind, 10, 4, seed=4, **SMALL[kind]).predict(x))
    with pytest.raises(DimensionError):
        m.predict(np.zeros((2, 9, 1)))


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_serialization_round_trip_is_bit_exact(kind, tmp_path):
    m = build_model(kind, in_len=8, out_len=3, seed=1, **SMALL[kind])
    for arr in m.params.values():
        arr += make_rng(2).normal(size=arr.shape) / 3.0  # non-trivial mantissas
    path = save_model(tmp_path / "m.params", m, {"note": "x"})
    back, meta = load_model(path)
    assert meta["note"] == "x"
    assert back.config() == m.config()
    for name, arr in m.params.items():
        assert back.params[name].tobytes() == arr.tobytes()
    x = make_rng(3).normal(size=(4, 8, 1))
    assert back.predict(x).tobytes() == m.predict(x).tobytes()


def test_save_params_special_values(tmp_path):
    params = {"a": np.array([[0.1, -0.0], [1e-300, 5e300]]), "b": np.array([7.0])}
    loaded, meta = load_params(save_params(tmp_path / "p", params))
    assert meta == {}
    for k in params:
        assert loaded[k].tobytes() == params[k].tobytes()
    with pytest.raises(ValueError):
        save_params(tmp_path / "q", {"bad name": np.zeros(1)})


def test_load_params_rejects_corruption(tmp_path):
    path = save_params(tmp_path / "p", {"a": np.arange(4.0)})
    text = path.read_text()
    (tmp_path / "trunc").write_text(text.replace("end\n", ""))
    with pytest.raises(DataError):
        load_params(tmp_path / "trunc")
    (tmp_path / "junk").write_text("hello\n")
    with pytest.raises(DataError):
        load_params(tmp_path / "junk")
    with pytest.raises(DataError):
        load_params(tmp_path / "missing")


def test_model_from_params_validates():
    m = build_model("gru", 6, 2, seed=0, units=3)
    params = {k: v.copy() for k, v in m.params.items()}
    assert model_from_params(m.config(), params).config() == m.config()
    params["head.W"] = np.zeros((4, 2))
    with pytest.raises(DimensionError):
        model_from_params(m.config(), params)
    extra = dict(m.params, stray=np.zeros(1))
    with pytest.raises(DimensionError):
        model_from_params(m.config(), extra)
    with pytest.raises(ValueError):
        model_from_params(dict(m.config(), kind="transformer"), m.params)


def test_build_model_rejects_unknown_kind():
    with pytest.raises(ValueError):
        build_model("arima")


def test_tcn_defaults_and_head_uses_last_step():
    m = build_model("tcn", 10, 10, seed=0)
    assert isinstance(m, TcnForecaster)
    assert list(m.spec.dilations) == [1, 2, 4, 8, 16, 32]
    assert m.spec.kernel_size == 3 and m.spec.filters == 4
    x = make_rng(1).normal(size=(2, 10, 1))
    np.testing.assert_array_equal(tcn_forward(x, m), m.predict(x))
    # first block maps 1 -> 4 channels so it carries the matching conv
    assert "block0.wm" in m.params and "block1.wm" not in m.params


def test_recurrent_defaults():
    m = build_model("bilstm", 10, 10, seed=0)
    assert m.params["fwd.wh"].shape == (50, 200)
    assert m.params["head.W"].shape == (100, 10)
    g = build_model("gru", 10, 10, seed=0)
    assert g.params["fwd.wx"].shape == (1, 150)
