"""Error metrics, expanding-window walk-forward evaluation and per-horizon
reports."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import make_windows
from .errors import DataError, DimensionError
from .training import TrainConfig, train

logger = logging.getLogger(__name__)

REPORT_FIELDS = ("model", "horizon_step", "rmse", "mae", "r2", "fold_count")


def _pair(y, yhat):
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.size != yhat.size:
        raise DimensionError(f"length mismatch: {y.size} actuals vs {yhat.size} forecasts")
    if y.size == 0:
        raise DimensionError("metrics need at least one pair")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return math.sqrt(float(np.mean((y - yhat) ** 2)))


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def r2(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    if y.size < 2:
        raise DimensionError("R^2 needs at least two pairs")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DataError("R^2 is undefined for constant actuals")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


@dataclass(frozen=True)
class WalkForwardPlan:
    in_len: int = 10
    out_len: int = 10
    step: int | None = None  # defaults to out_len
    retrain_per_fold: bool = False
    window_mode: str = "expanding_history"

    def __post_init__(self):
        if self.step is None:
            object.__setattr__(self, "step", self.out_len)
        if self.in_len < 1 or self.out_len < 1 or self.step < 1:
            raise ValueError("in_len, out_len and step must be positive")
        if self.window_mode != "expanding_history":
            raise ValueError(f"unsupported window mode {self.window_mode!r}")


def fold_count(length: int, in_len: int, step: int) -> int:
    return max(0, (length - in_len) // step)


@dataclass
class FoldRecord:
    fold: int
    forecast: np.ndarray
    actual: np.ndarray
    history_length: int


@dataclass
class HorizonReport:
    model: str
    rmse: list[float]
    mae: list[float]
    r2: list[float]
    fold_counts: list[int]

    @property
    def out_len(self) -> int:
        return len(self.rmse)

    @property
    def fold_count(self) -> int:
        return max(self.fold_counts)

    def rows(self) -> list[dict]:
        return [{"model": self.model, "horizon_step": h + 1, "rmse": self.rmse[h],
                 "mae": self.mae[h], "r2": self.r2[h], "fold_count": self.fold_counts[h]}
                for h in range(self.out_len)]


@dataclass
class RetrainContext:
    """What ``retrain_per_fold`` needs: the scaled training series the model was
    fitted on and the config for each refit."""

    train_values: np.ndarray
    config: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=1))


class MeanForecaster:
    """Predicts a constant (in scaled units) for every horizon step."""

    def __init__(self, level: float, in_len: int = 10, out_len: int = 10):
        self.level = float(level)
        self.in_len = in_len
        self.out_len = out_len

    def predict(self, x):
        return np.full((np.shape(x)[0], self.out_len), self.level)


class PerfectOracle:
    """Test hook that returns the true continuation of each input window.

    It locates the window inside the series it was handed (in scaled units) by
    exact match, so it only works on series whose windows are unique.
    """

    def __init__(self, scaled_values, in_len: int = 10, out_len: int = 10):
        self.values = np.asarray(scaled_values, dtype=np.float64)
        self.in_len = in_len
        self.out_len = out_len
        self._windows = np.lib.stride_tricks.sliding_window_view(self.values, in_len)

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)[:, :, 0]
        out = np.empty((x.shape[0], self.out_len))
        for b, win in enumerate(x):
            hits = np.flatnonzero(np.all(self._windows == win, axis=1))
            if hits.size == 0:
                raise DataError("oracle was shown a window that is not in its series")
            end = hits[0] + self.in_len
            fut = self.values[end:end + self.out_len]
            out[b] = np.concatenate([fut, np.full(self.out_len - fut.size, fut[-1] if fut.size else 0.0)])
        return out


def walk_forward_folds(model, scaler, test_series, plan: WalkForwardPlan | None = None,
                       context: RetrainContext | None = None) -> list[FoldRecord]:
    """Expanding-window walk-forward over ``test_series`` (physical units).

    Known history starts as the first ``in_len`` points. Each fold feeds the
    model the latest ``in_len`` known points, forecasts ``out_len`` steps, then
    reveals the next ``step`` actual observations, giving
    ``floor((len - in_len) / step)`` folds. With ``step < out_len`` the trailing
    folds run past the end of the series and are truncated to the actuals that
    exist. Metrics are in physical units.
    """
    plan = plan or WalkForwardPlan()
    if model is None or not hasattr(model, "predict"):
        raise ValueError("walk-forward evaluation needs a trained model with predict()")
    values = np.asarray(getattr(test_series, "values", test_series), dtype=np.float64)
    n = values.size
    if n < plan.in_len + plan.out_len:
        raise DataError(f"test series of {n} points is shorter than one "
                        f"{plan.in_len}+{plan.out_len} window")
    if plan.retrain_per_fold and context is None:
        raise ValueError("retrain_per_fold needs a RetrainContext")

    scaled = scaler.apply(values)
    records = []
    known = plan.in_len
    k = 0
    while known + plan.step <= n:
        if plan.retrain_per_fold and k > 0:
            series = np.concatenate([context.train_values, scaled[:known]])
            train(model, make_windows(series, plan.in_len, plan.out_len), context.config)
        x = scaled[known - plan.in_len:known].reshape(1, plan.in_len, 1)
        pred = np.asarray(model.predict(x), dtype=np.float64).reshape(-1)
        if pred.size != plan.out_len:
            raise DimensionError(f"model produced {pred.size} steps, plan expects {plan.out_len}")
        avail = min(plan.out_len, n - known)
        records.append(FoldRecord(k, scaler.invert(pred[:avail]), values[known:known + avail].copy(),
                                  known))
        known += plan.step
        k += 1
    return records


def walk_forward_evaluate(model, scaler, test_series, plan: WalkForwardPlan | None = None,
                          context: RetrainContext | None = None, model_id: str | None = None):
    """:func:`walk_forward_folds` followed by :func:`aggregate_horizon`.

    Returns ``(records, report)``.
    """
    records = walk_forward_folds(model, scaler, test_series, plan, context)
    return records, aggregate_horizon(records, model_id or getattr(model, "kind", "model"))


def aggregate_horizon(records, model_id: str = "model") -> HorizonReport:
    """Pool step-h pairs across folds and compute each metric once per h."""
    if len(records) < 2:
        raise DataError(f"need at least 2 folds to aggregate, got {len(records)}")
    out_len = max(len(r.actual) for r in records)
    out = HorizonReport(model_id, [], [], [], [])
    for h in range(out_len):
        ys = np.array([r.actual[h] for r in records if len(r.actual) > h])
        fs = np.array([r.forecast[h] for r in records if len(r.actual) > h])
        out.rmse.append(rmse(ys, fs))
        out.mae.append(mae(ys, fs))
        out.r2.append(r2(ys, fs))
        out.fold_counts.append(int(ys.size))
    return out


def _sorted_rows(reports) -> list[dict]:
    rows = [row for rep in reports for row in rep.rows()]
    rows.sort(key=lambda r: (r["model"], r["horizon_step"]))
    return rows


def report_emit(reports, fmt: str, path) -> Path:
    """Write one row per (model, horizon step), sorted by model then step.

    Floats use ``repr`` so a read-back reproduces them exactly.
    """
    if isinstance(reports, HorizonReport):
        reports = [reports]
    if not reports:
        raise ValueError("no reports to write")
    rows = _sorted_rows(reports)
    path = Path(path)
    try:
        if fmt == "csv":
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(REPORT_FIELDS)
                for r in rows:
                    w.writerow([r["model"], r["horizon_step"], repr(r["rmse"]), repr(r["mae"]),
                                repr(r["r2"]), r["fold_count"]])
        elif fmt == "json":
            path.write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise DataError(f"cannot write report to {path}: {exc}") from exc
    return path


def _rows_to_reports(rows) -> list[HorizonReport]:
    by_model: dict[str, list] = {}
    for r in rows:
        by_model.setdefault(r["model"], []).append(r)
    out = []
    for name in sorted(by_model):
        rs = sorted(by_model[name], key=lambda r: int(r["horizon_step"]))
        if [int(r["horizon_step"]) for r in rs] != list(range(1, len(rs) + 1)):
            raise DataError(f"report rows for {name!r} do not cover horizon steps 1..{len(rs)}")
        out.append(HorizonReport(name, [float(r["rmse"]) for r in rs], [float(r["mae"]) for r in rs],
                                 [float(r["r2"]) for r in rs], [int(r["fold_count"]) for r in rs]))
    return out


def report_read(path) -> list[HorizonReport]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such report: {path}")
    if path.suffix == ".json":
        rows = json.loads(path.read_text(encoding="utf-8"))
    else:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != REPORT_FIELDS:
                raise DataError(f"{path} does not have the report header {','.join(REPORT_FIELDS)}")
            rows = list(reader)
    return _rows_to_reports(rows)


def rank_reports(reports: list[HorizonReport]) -> list[dict]:
    """Long-format rankings: one row per (scope, metric, horizon, model).

    ``scope`` is ``"horizon"`` for per-step ranks and ``"mean"`` for the
    average over steps (``horizon_step`` is 0 there). Lower is better for RMSE
    and MAE, higher for R^2. Equal values share the lower rank; rows within a
    group are ordered by value then model name.
    """
    if len(reports) < 2:
        raise DataError("comparison needs at least two reports")
    horizons = {r.out_len for r in reports}
    if len(horizons) != 1:
        raise DataError(f"reports disagree on horizon length: {sorted(horizons)}")
    out_len = horizons.pop()
    rows = []
    for metric, higher_better in (("rmse", False), ("mae", False), ("r2", True)):
        scopes = [("horizon", h + 1, {r.model: getattr(r, metric)[h] for r in reports})
                  for h in range(out_len)]
        scopes.append(("mean", 0, {r.model: float(np.mean(getattr(r, metric))) for r in reports}))
        for scope, h, vals in scopes:
            order = sorted(vals, key=lambda m: (-vals[m] if higher_better else vals[m], m))
            rank = 0
            prev = None
            for pos, m in enumerate(order, start=1):
                if vals[m] != prev:
                    rank, prev = pos, vals[m]
                rows.append({"scope": scope, "metric": metric, "horizon_step": h, "model": m,
                             "value": vals[m], "rank": rank})
    return rows
