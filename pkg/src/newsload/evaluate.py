"""Forecast metrics, Diebold-Mariano comparison and error decomposition."""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats


@dataclass(frozen=True)
class DailyScore:
    date: dt.date | None
    rmse: float
    mae: float
    smape: float


@dataclass(frozen=True)
class ComparisonReport:
    model_a: str
    model_b: str
    statistic: float
    p_value: float


class DegenerateComparison(ValueError):
    """The loss differential has zero variance, so the test is undefined."""


def day_metrics(y, y_hat, date: dt.date | None = None) -> DailyScore:
    """RMSE and MAE in MW, SMAPE in percent, over the H slots of one day.

    SMAPE = 100/H * sum |y - y_hat| / ((|y| + |y_hat|) / 2).
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.ndim != 1 or y.size == 0:
        raise ValueError("truth and forecast must be non-empty 1-d vectors of equal length")
    if not (np.isfinite(y).all() and np.isfinite(y_hat).all()):
        raise ValueError("metrics need finite values")
    denom = (np.abs(y) + np.abs(y_hat)) / 2
    zero = np.flatnonzero(denom == 0)
    if zero.size:
        raise ValueError(f"SMAPE denominator is zero at slot h{zero[0] + 1}")
    err = y - y_hat
    return DailyScore(
        date,
        float(np.sqrt(np.mean(err**2))),
        float(np.mean(np.abs(err))),
        float(100.0 * np.mean(np.abs(err) / denom)),
    )


def daily_scores(truth: np.ndarray, forecast: np.ndarray, dates: Sequence[dt.date] | None = None) -> list[DailyScore]:
    truth = np.atleast_2d(truth)
    forecast = np.atleast_2d(forecast)
    if truth.shape != forecast.shape:
        raise ValueError(f"shape mismatch {truth.shape} vs {forecast.shape}")
    dates = list(dates) if dates is not None else [None] * len(truth)
    return [day_metrics(t, f, d) for t, f, d in zip(truth, forecast, dates)]


def period_metrics(scores: Sequence[DailyScore]) -> tuple[float, float, float]:
    """Means of the daily RMSE, MAE and SMAPE."""
    if not scores:
        raise ValueError("no daily scores")
    arr = np.sort(np.array([[s.rmse, s.mae, s.smape] for s in scores]), axis=0)
    return tuple(float(v) for v in arr.mean(axis=0))


def daily_mse(truth: np.ndarray, forecast: np.ndarray) -> np.ndarray:
    """Per-day mean squared error, the loss used for model comparison."""
    return np.mean((np.atleast_2d(truth) - np.atleast_2d(forecast)) ** 2, axis=1)


def newey_west_variance(d: np.ndarray, lags: int) -> float:
    """Long-run variance of ``d`` with Bartlett weights up to ``lags``."""
    u = d - d.mean()
    n = u.size
    var = float(u @ u) / n
    for k in range(1, lags + 1):
        var += 2 * (1 - k / (lags + 1)) * float(u[k:] @ u[:-k]) / n
    return var


def dm_test(
    loss_a,
    loss_b,
    names: tuple[str, str] = ("A", "B"),
    small_sample: bool = False,
) -> ComparisonReport:
    """One-sided Diebold-Mariano test of H1: model A has lower expected loss than B.

    The differential is d = loss_a - loss_b; its long-run variance uses a
    Newey-West window of ceil(n^(1/3)) lags. A small p favours A. With
    ``small_sample`` the Harvey-Leybourne-Newbold correction and a t
    reference are used instead of the normal.
    """
    a = np.asarray(loss_a, dtype=float)
    b = np.asarray(loss_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("loss series must be 1-d and of equal length")
    n = a.size
    if n < 10:
        raise ValueError(f"need at least 10 paired losses, got {n}")
    d = a - b
    lags = math.ceil(n ** (1 / 3))
    var = newey_west_variance(d, lags)
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    if not var > (1e-12 * scale) ** 2:
        raise DegenerateComparison(f"loss differential between {names[0]} and {names[1]} has zero variance")
    stat = d.mean() / math.sqrt(var / n)
    if small_sample:
        stat *= math.sqrt((n + 1 - 2 * lags + lags * (lags - 1) / n) / n)
        p = float(stats.t.cdf(stat, df=n - 1))
    else:
        p = float(stats.norm.cdf(stat))
    return ComparisonReport(names[0], names[1], float(stat), p)


def dm_matrix(losses: Mapping[str, np.ndarray], small_sample: bool = False) -> pd.DataFrame:
    """p-values with entry (row, col) testing "col is more accurate than row".

    The diagonal, and any pair with identical losses, is reported as 1.
    """
    names = list(losses)
    out = pd.DataFrame(1.0, index=names, columns=names)
    for row in names:
        for col in names:
            if row == col:
                continue
            try:
                out.loc[row, col] = dm_test(losses[col], losses[row], (col, row), small_sample).p_value
            except DegenerateComparison:
                out.loc[row, col] = 1.0
    return out


def _metric_frame(err: np.ndarray, truth: np.ndarray, forecast: np.ndarray) -> dict[str, float]:
    denom = (np.abs(truth) + np.abs(forecast)) / 2
    return {
        "rmse": float(np.sqrt(np.mean(err**2))),
        "mae": float(np.mean(np.abs(err))),
        "smape": float(100 * np.mean(np.abs(err) / denom)),
    }


def error_decomposition(
    forecast: np.ndarray, truth: np.ndarray, dates: Sequence[dt.date], holidays: frozenset | set = frozenset()
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Per hour-of-day metrics (two half-hours pooled per day) and per day-type means.

    The hour table averages, over days, the RMSE/MAE/SMAPE of each day's
    two half-hours in that hour. The day-type table is ``period_metrics``
    restricted to weekdays or weekends; holidays count as weekdays unless
    they fall on a weekend.
    """
    forecast = np.atleast_2d(np.asarray(forecast, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if forecast.shape != truth.shape or forecast.shape[1] % 24:
        raise ValueError("forecast and truth must share a (days, 24k) shape")
    if len(dates) != len(truth):
        raise ValueError("one date per forecast day required")
    per_hour = truth.shape[1] // 24
    hours = []
    for h in range(24):
        cols = slice(h * per_hour, (h + 1) * per_hour)
        days = [day_metrics(t[cols], f[cols]) for t, f in zip(truth, forecast)]
        rmse, mae, smape = period_metrics(days)
        hours.append({"hour": h, "rmse": rmse, "mae": mae, "smape": smape})
    scores = daily_scores(truth, forecast, dates)
    weekend = np.array([d.weekday() >= 5 for d in dates])
    types = []
    for label, mask in (("weekday", ~weekend), ("weekend", weekend)):
        chosen = [s for s, m in zip(scores, mask) if m]
        if chosen:
            rmse, mae, smape = period_metrics(chosen)
        else:
            rmse = mae = smape = float("nan")
        types.append({"day_type": label, "n_days": len(chosen), "rmse": rmse, "mae": mae, "smape": smape})
    return pd.DataFrame(hours), pd.DataFrame(types)


def scores_frame(scores: Sequence[DailyScore]) -> pd.DataFrame:
    return pd.DataFrame([{"date": s.date, "rmse": s.rmse, "mae": s.mae, "smape": s.smape} for s in scores])


def write_predictions(path: str | Path, dates: Sequence[dt.date], forecast: np.ndarray) -> None:
    forecast = np.atleast_2d(forecast)
    cols = [f"h{i + 1}" for i in range(forecast.shape[1])]
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["date", *cols]) + "\n")
        for d, row in zip(dates, forecast):
            fh.write(",".join([d.isoformat(), *(repr(float(v)) for v in row)]) + "\n")


def read_predictions(path: str | Path) -> tuple[list[dt.date], np.ndarray]:
    frame = pd.read_csv(path, float_precision="round_trip")
    dates = [dt.date.fromisoformat(s) for s in frame["date"].astype(str)]
    return dates, frame.drop(columns="date").to_numpy(dtype=float)


def write_key_values(path: str | Path, values: Mapping[str, object]) -> None:
    """Structured-text report: one ``key = value`` line per entry, sorted."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for key in sorted(values):
            val = values[key]
            fh.write(f"{key} = {repr(val) if isinstance(val, float) else val}\n")
