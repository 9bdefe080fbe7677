import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doforecast.data import synth_series
from doforecast.errors import DataError, DimensionError
from doforecast.evaluation import (
    FoldRecord,
    HorizonReport,
    MeanForecaster,
    RetrainContext,
    WalkForwardPlan,
    aggregate_horizon,
    fold_count,
    mae,
    r2,
    rank_reports,
    report_emit,
    report_read,
    rmse,
    walk_forward_evaluate,
    walk_forward_folds,
)
from doforecast.models import build_model
from doforecast.training import Scaler, TrainConfig, scaler_fit


def test_metric_examples():
    assert rmse([0.0, 0.0], [5.0, 0.0]) == math.sqrt(12.5)
    assert mae([0.0, 0.0], [1.0, 2.0]) == 1.5
    assert r2([0.0, 2.0], [2.0, 2.0]) == -1.0
    assert r2([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0
    assert r2([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == 0.0
    with pytest.raises(DataError):
        r2([4.0, 4.0], [4.0, 3.0])
    with pytest.raises(DimensionError):
        rmse([1.0], [1.0, 2.0])


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=40), st.integers(0, 2**31))
def test_metric_relations(ys, seed):
    y = np.array(ys)
    f = y + np.random.default_rng(seed).normal(size=y.size)
    assert mae(y, f) <= rmse(y, f) + 1e-12
    assert rmse(y, y) == 0.0 and mae(y, y) == 0.0


def test_fold_count_examples():
    assert fold_count(110, 10, 10) == 10
    assert fold_count(20, 10, 10) == 1
    assert fold_count(9, 10, 1) == 0
    assert fold_count(6437, 10, 1) == 6427


class _Affine:
    """Forecasts the last observed point for every step, in scaled units."""

    in_len, out_len = 10, 10

    def predict(self, x):
        return np.repeat(x[:, -1, :], self.out_len, axis=1)


def test_walk_forward_fold_layout():
    vals = np.arange(110.0) + 1.0
    recs = walk_forward_folds(_Affine(), Scaler(0.0, 200.0), vals, WalkForwardPlan())
    assert len(recs) == 10
    assert [r.history_length for r in recs] == list(range(10, 110, 10))
    np.testing.assert_array_equal(recs[0].actual, vals[10:20])
    np.testing.assert_allclose(recs[0].forecast, np.full(10, vals[9]), rtol=1e-14)
    recs = walk_forward_folds(_Affine(), Scaler(0.0, 200.0), vals, WalkForwardPlan(step=1))
    assert len(recs) == 100
    assert [len(r.actual) for r in recs[-3:]] == [3, 2, 1]


def _records(seed, folds=6, out_len=4):
    rng = np.random.default_rng(seed)
    return [FoldRecord(k, rng.normal(size=out_len), rng.normal(size=out_len), 10 + k)
            for k in range(folds)]


def test_aggregate_matches_brute_force():
    recs = _records(0)
    rep = aggregate_horizon(recs, "m")
    for h in range(4):
        ys = [r.actual[h] for r in recs]
        fs = [r.forecast[h] for r in recs]
        err = [(a - b) ** 2 for a, b in zip(ys, fs)]
        assert math.isclose(rep.rmse[h], math.sqrt(math.fsum(err) / 6), rel_tol=1e-14)
        assert math.isclose(rep.mae[h], math.fsum(abs(a - b) for a, b in zip(ys, fs)) / 6,
                            rel_tol=1e-14)
        mu = math.fsum(ys) / 6
        assert math.isclose(rep.r2[h], 1 - math.fsum(err) / math.fsum((a - mu) ** 2 for a in ys),
                            rel_tol=1e-12)
    assert rep.fold_counts == [6, 6, 6, 6]
    with pytest.raises(DataError):
        aggregate_horizon(recs[:1])


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.permutations(range(6)))
def test_aggregate_is_fold_order_invariant(seed, perm):
    recs = _records(seed)
    a = aggregate_horizon(recs)
    b = aggregate_horizon([recs[i] for i in perm])
    np.testing.assert_allclose(a.rmse, b.rmse, rtol=1e-13)
    np.testing.assert_allclose(a.r2, b.r2, rtol=1e-12)


def _report(name, base):
    return HorizonReport(name, [base + 0.1 * h for h in range(10)], [base / 2] * 10,
                         [1.0 - base] * 10, [99] * 10)


def test_report_emit_rows_and_round_trip(tmp_path):
    one = _report("gru", 0.123456789012345678)
    p = report_emit(one, "csv", tmp_path / "r.csv")
    assert len(p.read_text().splitlines()) == 11
    reps = [_report(m, 0.1 * (i + 1) / 3) for i, m in enumerate(["tcn", "cnn", "gru", "lstm", "bigru", "bilstm"])]
    for fmt in ("csv", "json"):
        path = report_emit(reps, fmt, tmp_path / f"all.{fmt}")
        back = report_read(path)
        assert [r.model for r in back] == sorted(r.model for r in reps)
        assert sum(r.out_len for r in back) == 60
        orig = {r.model: r for r in reps}
        for r in back:
            assert r.rmse == orig[r.model].rmse and r.r2 == orig[r.model].r2
            assert r.fold_counts == [99] * 10
    with pytest.raises(ValueError):
        report_emit(reps, "xml", tmp_path / "x")


def test_report_read_rejects_bad_header(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        report_read(tmp_path / "bad.csv")


def test_rank_reports_ties_and_order():
    reps = [_report("b", 0.2), _report("a", 0.2), _report("c", 0.1)]
    rows = rank_reports(reps)
    mean_rmse = [r for r in rows if r["scope"] == "mean" and r["metric"] == "rmse"]
    assert [(r["model"], r["rank"]) for r in mean_rmse] == [("c", 1), ("a", 2), ("b", 2)]
    mean_r2 = [r for r in rows if r["scope"] == "mean" and r["metric"] == "r2"]
    assert [(r["model"], r["rank"]) for r in mean_r2] == [("c", 1), ("a", 2), ("b", 2)]
    assert len(rows) == 3 * 3 * 11
    with pytest.raises(DataError):
        rank_reports(reps[:1])


class _Ar1Expectation:
    """Conditional mean forecast of a zero-mean AR(1) shifted by ``offset``."""

    def __init__(self, phi, level, out_len=10):
        self.phi, self.level, self.out_len = phi, level, out_len

    def predict(self, x):
        last = x[:, -1, 0:1] - self.level
        return self.level + last * self.phi ** np.arange(1, self.out_len + 1)


def test_ar1_error_grows_with_horizon():
    s = synth_series("ar1", 5000, seed=7, phi=0.9)
    sc = scaler_fit(s)
    model = _Ar1Expectation(0.9, float(sc.apply(8.0)))
    _, rep = walk_forward_evaluate(model, sc, s, WalkForwardPlan(step=1), model_id="ar1")
    assert all(b > a for a, b in zip(rep.rmse, rep.rmse[1:]))
    # theoretical h-step error variance sigma^2 * (1 - phi^(2h)) / (1 - phi^2)
    theory = [0.1 * math.sqrt((1 - 0.81 ** h) / 0.19) for h in (1, 10)]
    assert abs(rep.rmse[0] / theory[0] - 1) < 0.05
    assert abs(rep.rmse[9] / theory[1] - 1) < 0.1


def test_mean_forecaster_r2_near_zero():
    s = synth_series("ar1", 3000, seed=8, phi=0.5)
    sc = scaler_fit(s)
    _, rep = walk_forward_evaluate(MeanForecaster(float(np.mean(sc.apply(s.values)))), sc, s)
    assert all(abs(v) < 0.05 for v in rep.r2)


def test_retrain_per_fold_updates_model():
    s = synth_series("composite", 400, seed=9)
    sc = scaler_fit(s)
    tr, te = s.values[:300], s.values[300:]
    model = build_model("linear", 10, 10, seed=0)
    before = model.params["head.W"].copy()
    recs = walk_forward_folds(model, sc, te, WalkForwardPlan(retrain_per_fold=True),
                              RetrainContext(sc.apply(tr), TrainConfig(epochs=1, batch_size=32)))
    assert len(recs) == 9
    assert not np.array_equal(before, model.params["head.W"])
    with pytest.raises(ValueError):
        walk_forward_folds(model, sc, te, WalkForwardPlan(retrain_per_fold=True))


def test_walk_forward_guards():
    with pytest.raises(ValueError):
        walk_forward_folds(None, Scaler(0, 1), np.ones(30))
    with pytest.raises(DataError):
        walk_forward_folds(_Affine(), Scaler(0, 1), np.ones(15))
    with pytest.raises(ValueError):
        WalkForwardPlan(window_mode="sliding")
