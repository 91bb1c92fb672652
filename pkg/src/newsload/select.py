"""Bilateral Granger screening of daily textual features against daily demand."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import linalg, stats
from statsmodels.tsa.stattools import adfuller

logger = logging.getLogger(__name__)


class GrangerError(ValueError):
    """A series cannot be tested (too short, constant, or collinear lags)."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


STATIONARITY_MODES = ("adf", "difference", "levels")


@dataclass(frozen=True)
class GrangerConfig:
    """``stationarity``: "adf" differences a pair only when an augmented
    Dickey-Fuller test cannot reject a unit root in either series;
    "difference" always differences; "levels" never does."""

    lags: int = 30
    alpha: float = 0.05
    stationarity: str = "adf"

    def __post_init__(self):
        if self.lags < 1:
            raise ValueError("lag order must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("significance level must lie in (0, 1)")
        if self.stationarity not in STATIONARITY_MODES:
            raise ValueError(f"stationarity must be one of {STATIONARITY_MODES}")


@dataclass(frozen=True)
class GrangerOutcome:
    feature: str
    p_xy: float
    p_yx: float
    selected: bool
    reason: str = ""


def _check_variance(series: np.ndarray, name: str) -> None:
    sd = series.std()
    if not np.isfinite(sd) or sd <= 1e-12 * max(1.0, np.abs(series).max(initial=0.0)):
        raise GrangerError("constant", f"{name} has zero variance")


def _prepare(series: np.ndarray, name: str, difference: bool) -> np.ndarray:
    out = np.diff(series) if difference else series
    _check_variance(out, name)
    return (out - out.mean()) / out.std()


def has_unit_root(series: np.ndarray, lags: int = 30, alpha: float = 0.05) -> bool:
    """True when the ADF test (constant, AIC lag choice up to ``lags``) cannot reject a unit root."""
    series = np.asarray(series, dtype=float)
    if series.size <= 2 * lags + 10:
        raise GrangerError("short", f"series of length {series.size} too short for {lags} lags")
    _check_variance(np.diff(series), "series")
    return bool(adfuller(series, maxlag=lags, regression="c", autolag="AIC")[1] >= alpha)


def _lag_block(series: np.ndarray, lags: int) -> np.ndarray:
    n = series.size
    return np.column_stack([series[lags - i : n - i] for i in range(1, lags + 1)])


def _rss(design: np.ndarray, target: np.ndarray) -> float:
    q, r, _ = linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(design.shape) * np.finfo(float).eps * diag[0]
    if (diag <= tol).any():
        raise GrangerError("collinear", "lagged regressors are collinear")
    resid = target - q @ (q.T @ target)
    return float(resid @ resid)


def granger_p(x: np.ndarray, y: np.ndarray, lags: int = 30, difference: bool = True) -> float:
    """p-value of the F-test that lags of ``x`` add nothing to an AR model of ``y``.

    Both series are standardized, after first differencing when
    ``difference`` is set. The restricted
    model regresses y on an intercept and ``lags`` of its own lags; the
    unrestricted one adds ``lags`` lags of x. The statistic has
    (lags, n - 2*lags - 1) degrees of freedom.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d series of equal length")
    if x.size <= 2 * lags + 10:
        raise GrangerError("short", f"series of length {x.size} too short for {lags} lags")
    xs = _prepare(x, "x", difference)
    ys = _prepare(y, "y", difference)

    target = ys[lags:]
    n = target.size
    ones = np.ones((n, 1))
    y_lags = _lag_block(ys, lags)
    restricted = np.hstack([ones, y_lags])
    full = np.hstack([restricted, _lag_block(xs, lags)])
    rss_r = _rss(restricted, target)
    rss_u = _rss(full, target)
    df_den = n - 2 * lags - 1
    stat = ((rss_r - rss_u) / lags) / (rss_u / df_den)
    return float(stats.f.sf(max(stat, 0.0), lags, df_den))


def granger_pair(
    name: str, x: np.ndarray, y: np.ndarray, config: GrangerConfig, y_unit_root: bool | None = None
) -> GrangerOutcome:
    """Test both directions; ``y_unit_root`` lets a caller reuse the target's ADF result."""
    try:
        if config.stationarity == "adf":
            if y_unit_root is None:
                y_unit_root = has_unit_root(y, config.lags)
            difference = y_unit_root or has_unit_root(x, config.lags)
        else:
            difference = config.stationarity == "difference"
        p_xy = granger_p(x, y, config.lags, difference)
        p_yx = granger_p(y, x, config.lags, difference)
    except GrangerError as exc:
        return GrangerOutcome(name, float("nan"), float("nan"), False, exc.reason)
    selected = p_xy < config.alpha and p_yx >= config.alpha
    return GrangerOutcome(name, p_xy, p_yx, selected)


def bilateral_select(
    features: Mapping[str, np.ndarray],
    target: np.ndarray,
    config: GrangerConfig = GrangerConfig(),
) -> tuple[list[str], list[GrangerOutcome]]:
    """Keep features where x Granger-causes y and y does not Granger-cause x.

    Every feature is tested on its own, so adding or removing one never
    changes another's outcome. Untestable features come back unselected
    with a reason.
    """
    target = np.asarray(target, dtype=float)
    y_unit_root = has_unit_root(target, config.lags) if config.stationarity == "adf" else None
    outcomes = [
        granger_pair(name, np.asarray(series, dtype=float), target, config, y_unit_root)
        for name, series in features.items()
    ]
    selected = [o.feature for o in outcomes if o.selected]
    logger.info("granger: kept %d of %d features", len(selected), len(outcomes))
    return selected, outcomes


def write_audit(outcomes: Iterable[GrangerOutcome], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "p_xy", "p_yx", "selected", "reason"])
        for o in outcomes:
            writer.writerow([o.feature, repr(o.p_xy), repr(o.p_yx), int(o.selected), o.reason])


def read_audit(path: str | Path) -> list[GrangerOutcome]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return [
            GrangerOutcome(r["feature"], float(r["p_xy"]), float(r["p_yx"]), r["selected"] == "1", r["reason"])
            for r in csv.DictReader(fh)
        ]
