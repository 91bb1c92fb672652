"""Global, local and causal explanations of textual features.

* ``pearson_grid`` correlates a feature with hourly demand two days later,
  per (hour, season, day type) stratum.
* ``lime_explain`` fits a kernel-weighted linear surrogate around one row.
* ``double_ml`` estimates a constant treatment effect in a partially linear
  model with cross-fitted Extra-Trees nuisances; ``effect_profile`` repeats
  it per half-hour.
"""
from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .trees import ExtraTreesConfig, fit_extratrees

logger = logging.getLogger(__name__)

SEASONS = ("winter", "spring", "summer", "autumn")
DAY_TYPES = ("weekday", "weekend")
MIN_STRATUM_DAYS = 10
SIGNIFICANCE = 0.05


def season_of(day: dt.date) -> str:
    """Meteorological season: Dec-Feb winter, Mar-May spring, and so on."""
    return SEASONS[(day.month % 12) // 3]


def day_type_of(day: dt.date) -> str:
    return "weekend" if day.weekday() >= 5 else "weekday"


# ---------------------------------------------------------------- Pearson


@dataclass(frozen=True)
class PearsonCell:
    feature: str
    hour: int
    season: str
    day_type: str
    n_days: int
    r: float
    p: float
    insufficient: bool = False

    @property
    def significant(self) -> bool:
        return not self.insufficient and self.p < SIGNIFICANCE


def hourly_means(demand: np.ndarray) -> np.ndarray:
    """Collapse (days, 24k) half-hourly demand to (days, 24) hourly means."""
    demand = np.asarray(demand, dtype=float)
    return demand.reshape(len(demand), 24, -1).mean(axis=2)


def pearson_grid(
    name: str,
    feature: Mapping[dt.date, float] | pd.Series,
    dates: Sequence[dt.date],
    demand: np.ndarray,
    lag_days: int = 2,
    min_days: int = MIN_STRATUM_DAYS,
) -> list[PearsonCell]:
    """Correlate the feature on day t - ``lag_days`` with hourly demand on day t.

    With the forecasting alignment (text from d-1, target d+1) the lag is
    two days. Strata are keyed by the demand day's season and day type.
    Strata with fewer than ``min_days`` pairs, or with a constant side,
    are returned with ``insufficient`` set and NaN r and p.
    """
    feature = dict(feature.items()) if isinstance(feature, pd.Series) else dict(feature)
    hourly = hourly_means(demand)
    lag = dt.timedelta(days=lag_days)
    pairs: dict[tuple[str, str], list[tuple[float, np.ndarray]]] = {}
    for day, row in zip(dates, hourly):
        src = day - lag
        if src not in feature:
            continue
        pairs.setdefault((season_of(day), day_type_of(day)), []).append((float(feature[src]), row))

    cells = []
    for season in SEASONS:
        for day_type in DAY_TYPES:
            group = pairs.get((season, day_type), [])
            x = np.array([g[0] for g in group])
            ys = np.array([g[1] for g in group]).reshape(len(group), 24)
            for hour in range(24):
                y = ys[:, hour]
                if len(group) < min_days or np.ptp(x) == 0 or np.ptp(y) == 0:
                    cells.append(PearsonCell(name, hour, season, day_type, len(group), np.nan, np.nan, True))
                    continue
                res = stats.pearsonr(x, y)
                cells.append(PearsonCell(name, hour, season, day_type, len(group), float(res.statistic), float(res.pvalue)))
    return cells


def cells_frame(cells: Sequence[PearsonCell]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "feature": c.feature,
                "hour": c.hour,
                "season": c.season,
                "day_type": c.day_type,
                "n_days": c.n_days,
                "r": c.r,
                "p": c.p,
                "significant": int(c.significant),
                "insufficient": int(c.insufficient),
            }
            for c in cells
        ]
    )


# ---------------------------------------------------------------- LIME


@dataclass
class LimeReport:
    instance: dt.date | None
    features: list[str]
    coefficients: np.ndarray  # per unit of the raw feature
    std_coefficients: np.ndarray  # per training standard deviation
    std_errors: np.ndarray  # of the raw-unit coefficients
    intercept: float
    r2: float
    n_samples: int
    kernel_width: float
    ridge: float = 0.0
    flagged_singular: bool = False

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "feature": self.features,
                "coefficient": self.coefficients,
                "std_coefficient": self.std_coefficients,
                "std_error": self.std_errors,
            }
        )


def _weighted_fit(Z: np.ndarray, y: np.ndarray, w: np.ndarray, ridge: float):
    A = np.column_stack([np.ones(len(Z)), Z])
    sw = np.sqrt(w)
    gram = (A * w[:, None]).T @ A
    penalty = np.eye(A.shape[1]) * ridge
    penalty[0, 0] = 0.0
    rank = np.linalg.matrix_rank(sw[:, None] * A)
    if ridge == 0.0 and rank < A.shape[1]:
        nan = np.full(A.shape[1], np.nan)
        return nan, nan, np.nan, rank
    beta = np.linalg.solve(gram + penalty, (A * w[:, None]).T @ y)
    resid = y - A @ beta
    dof = max(len(y) - A.shape[1], 1)
    sigma2 = float((w * resid**2).sum()) / dof
    cov = sigma2 * np.linalg.inv(gram + penalty)
    ybar = np.average(y, weights=w)
    tss = float((w * (y - ybar) ** 2).sum())
    r2 = 1.0 - float((w * resid**2).sum()) / tss if tss > 0 else 0.0
    return beta, np.sqrt(np.clip(np.diag(cov), 0, None)), r2, rank


def lime_explain(
    predict: Callable[[np.ndarray], np.ndarray],
    instance: np.ndarray,
    mean: np.ndarray,
    scale: np.ndarray,
    feature_names: Sequence[str],
    explain: Sequence[str] | None = None,
    n_samples: int = 5000,
    kernel_width: float | None = None,
    seed: int = 0,
    output: int | None = None,
    date: dt.date | None = None,
) -> LimeReport:
    """Local linear surrogate of ``predict`` around ``instance``.

    Perturbations are drawn from a unit normal around the standardized
    instance (training ``mean``/``scale``), mapped back to raw units and
    scored by ``predict``. The response is the daily mean of the predicted
    vector, or the single slot ``output`` when given. Samples are weighted
    by exp(-d^2 / width^2) and a weighted least-squares fit with intercept
    gives the coefficients. Only the ``explain`` columns are reported.
    """
    instance = np.asarray(instance, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float)
    scale = np.where(np.asarray(scale, dtype=float) > 0, scale, 1.0)
    p = instance.size
    if len(feature_names) != p:
        raise ValueError("one name per feature required")
    width = 0.75 * np.sqrt(p) if kernel_width is None else float(kernel_width)
    if width <= 0:
        raise ValueError("kernel width must be positive")
    rng = np.random.default_rng(seed)
    z0 = (instance - mean) / scale
    Z = z0 + rng.standard_normal((n_samples, p))
    pred = np.atleast_2d(np.asarray(predict(Z * scale + mean), dtype=float))
    if pred.shape[0] != n_samples:
        pred = pred.T
    y = pred.mean(axis=1) if output is None else pred[:, output]
    dist2 = ((Z - z0) ** 2).sum(axis=1)
    w = np.exp(-(dist2 - dist2.min()) / width**2)
    w = w / w.mean()

    ridge, flagged = 0.0, False
    beta, se, r2, rank = _weighted_fit(Z - z0, y, w, ridge)
    if rank < p + 1 or not np.isfinite(beta).all():
        flagged = True
        ridge = 1e-8 * float(w.sum())
        while True:
            try:
                beta, se, r2, _ = _weighted_fit(Z - z0, y, w, ridge)
            except np.linalg.LinAlgError:
                beta = np.array([np.nan])
            if np.isfinite(beta).all():
                break
            ridge *= 10
        logger.warning("LIME system singular; ridge %.3g applied", ridge)

    names = list(feature_names)
    chosen = names if explain is None else list(explain)
    pos = [names.index(c) for c in chosen]
    std_coef = beta[1:][pos]
    return LimeReport(
        date,
        chosen,
        std_coef / scale[pos],
        std_coef,
        se[1:][pos] / scale[pos],
        float(beta[0]),
        float(r2),
        n_samples,
        width,
        ridge,
        flagged,
    )


# ---------------------------------------------------------------- Double ML

# heavily smoothed forests keep the nuisance noise from inflating the
# final-stage variance (null rejection stays near the nominal 5%)
DEFAULT_NUISANCE = ExtraTreesConfig(n_trees=100, max_features="third", min_samples_split=20, seed=0)


class TreatmentExplained(ValueError):
    """The treatment is (almost) a deterministic function of the confounders."""


@dataclass(frozen=True)
class DmlResult:
    tau: float
    std_error: float
    p_value: float
    n: int
    folds: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...] = field(repr=False, default=())


def crossfit_folds(n: int, n_folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, n_folds)]


def _residualize(X, targets, folds, config, cross_fit, n_jobs):
    """Out-of-fold residuals of each target column; also returns fold bookkeeping."""
    resid = np.empty_like(targets)
    log = []
    if not cross_fit:
        model = fit_extratrees(X, targets, config, n_jobs=n_jobs)
        resid[:] = targets - model.predict(X)
        everything = tuple(range(len(X)))
        return resid, ((everything, everything),)
    for k, held in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != k])
        assert np.intersect1d(train, held).size == 0, "nuisance trained on residualized rows"
        model = fit_extratrees(X[train], targets[train], config, n_jobs=n_jobs)
        resid[held] = targets[held] - model.predict(X[held])
        log.append((tuple(train.tolist()), tuple(held.tolist())))
    return resid, tuple(log)


def _final_stage(v: np.ndarray, u: np.ndarray, scale_t: float) -> tuple[float, float, float]:
    n = v.size
    vv = float(v @ v)
    if vv <= 1e-10 * n * scale_t**2:
        raise TreatmentExplained("treatment explained by confounders")
    tau = float(v @ u) / vv
    eps = u - tau * v
    se = np.sqrt(float((v**2 * eps**2).sum()) * n / (n - 1)) / vv
    p = float(2 * stats.norm.sf(abs(tau) / se)) if se > 0 else 0.0
    return tau, float(se), p


def double_ml(
    X: np.ndarray,
    T: np.ndarray,
    Y: np.ndarray,
    config: ExtraTreesConfig = DEFAULT_NUISANCE,
    n_folds: int = 2,
    cross_fit: bool = True,
    seed: int | None = None,
    n_jobs: int = 1,
) -> DmlResult:
    """Effect of T on Y in Y = tau*T + g(X) + e, T = h(X) + v.

    Nuisances g and h are Extra-Trees fitted on one fold and evaluated on
    the other; tau is the no-intercept least-squares slope of the pooled
    Y residuals on the T residuals, with a heteroskedasticity-robust
    standard error and a two-sided normal p-value.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    T = np.asarray(T, dtype=float).ravel()
    Y = np.asarray(Y, dtype=float).ravel()
    if not (len(X) == T.size == Y.size):
        raise ValueError("X, T and Y need the same number of rows")
    if np.ptp(T) == 0:
        raise TreatmentExplained("treatment has zero variance")
    seed = config.seed if seed is None else seed
    folds = crossfit_folds(len(X), n_folds, seed)
    ru, log_y = _residualize(X, Y[:, None], folds, config, cross_fit, n_jobs)
    rv, _ = _residualize(X, T[:, None], folds, config, cross_fit, n_jobs)
    tau, se, p = _final_stage(rv[:, 0], ru[:, 0], float(np.std(T)))
    return DmlResult(tau, se, p, len(X), log_y)


@dataclass
class EffectReport:
    feature: str
    tau: np.ndarray
    p_values: np.ndarray
    std_errors: np.ndarray

    def __post_init__(self):
        if not (self.tau.size == self.p_values.size == self.std_errors.size):
            raise ValueError("tau, p and standard errors must align")

    @property
    def retained(self) -> list[int]:
        """Zero-based half-hour indices with p < 0.05."""
        return [int(i) for i in np.flatnonzero(self.p_values < SIGNIFICANCE)]

    @property
    def plotted(self) -> np.ndarray:
        """tau where significant, 0 elsewhere."""
        return np.where(self.p_values < SIGNIFICANCE, self.tau, 0.0)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "feature": self.feature,
                "halfhour": np.arange(1, self.tau.size + 1),
                "tau": self.tau,
                "std_error": self.std_errors,
                "p": self.p_values,
                "retained": (self.p_values < SIGNIFICANCE).astype(int),
                "plotted_tau": self.plotted,
            }
        )


def effect_profile(
    feature: str,
    treatment: np.ndarray,
    X: np.ndarray,
    demand: np.ndarray,
    config: ExtraTreesConfig = DEFAULT_NUISANCE,
    cross_fit: bool = True,
    n_jobs: int = 1,
) -> EffectReport:
    """Double ML once per half-hour column of ``demand``, sharing the folds.

    The treatment nuisance does not depend on the half-hour, so it is
    fitted once; the 48 demand nuisances share one multi-output forest
    per fold.
    """
    X = np.asarray(X, dtype=float)
    demand = np.asarray(demand, dtype=float)
    T = np.asarray(treatment, dtype=float).ravel()
    if np.ptp(T) == 0:
        raise TreatmentExplained("treatment has zero variance")
    folds = crossfit_folds(len(X), 2, config.seed)
    ru = _residualize(X, demand, folds, config, cross_fit, n_jobs)[0]
    v = _residualize(X, T[:, None], folds, config, cross_fit, n_jobs)[0][:, 0]
    out = np.array([_final_stage(v, ru[:, j], float(np.std(T))) for j in range(demand.shape[1])])
    return EffectReport(feature, out[:, 0], out[:, 2], out[:, 1])
