"""Day-ahead design matrix, model fitting and time-ordered grid search."""
from __future__ import annotations

import datetime as dt
import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .features import columns_for, parse_family_id
from .ingest import AlignedDataset
from .trees import ExtraTreesConfig, ExtraTreesModel, fit_extratrees

logger = logging.getLogger(__name__)

DEMAND_LAGS = (1, 2, 7)
CALENDAR_COLUMNS = ("dow_sin", "dow_cos", "doy_sin", "doy_cos", "is_weekend", "is_holiday")

BENCHMARKS = {
    "D": ("D",),
    "D+C": ("D", "C"),
    "D+T": ("D", "T"),
    "D+C+T": ("D", "C", "T"),
}
# feature-combination battery, each on top of D+C+T
COMBINATIONS = {
    "M0": ("WF_T",),
    "M1": ("WF_T", "WF_D", "WF_B"),
    "M2": ("WF_T", "SE_B"),
    "M3": ("WF_T", "TD_B"),
    "M4": ("WF_T", "GWE_B"),
    "M5": ("WF_T", "SE_B", "TD_B"),
    "M6": ("WF_T", "SE_B", "GWE_B"),
    "M7": ("WF_T", "TD_B", "GWE_B"),
    "M8": ("WF_T", "SE_B", "TD_B", "GWE_B"),
}


@dataclass(frozen=True)
class FeatureSetSpec:
    demand: bool = True
    calendar: bool = True
    temperature: bool = True
    text_families: tuple[str, ...] = ()

    def __post_init__(self):
        if not (self.demand or self.calendar or self.temperature or self.text_families):
            raise ValueError("feature set is empty")

    @classmethod
    def parse(cls, label: str) -> "FeatureSetSpec":
        """``"D+C+T"``, ``"D+C+T+WF_T+SE_B"`` or a battery name like ``"M6"``."""
        if label in COMBINATIONS:
            return cls(True, True, True, COMBINATIONS[label])
        parts = label.split("+")
        fams = tuple(p for p in parts if p not in ("D", "C", "T"))
        return cls("D" in parts, "C" in parts, "T" in parts, fams)

    @property
    def label(self) -> str:
        base = [k for k, on in (("D", self.demand), ("C", self.calendar), ("T", self.temperature)) if on]
        return "+".join(base + list(self.text_families))


@dataclass
class DesignMatrix:
    issue_dates: list[dt.date]
    target_dates: list[dt.date]
    columns: list[str]
    X: np.ndarray
    Y: np.ndarray

    def __len__(self) -> int:
        return len(self.issue_dates)

    @property
    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.X, columns=self.columns, index=pd.Index(self.issue_dates, name="issue_date"))

    def rows(self, mask: np.ndarray) -> "DesignMatrix":
        keep = np.flatnonzero(mask)
        return DesignMatrix(
            [self.issue_dates[i] for i in keep],
            [self.target_dates[i] for i in keep],
            self.columns,
            self.X[keep],
            self.Y[keep],
        )

    def split(self, first_test_target: dt.date) -> tuple["DesignMatrix", "DesignMatrix"]:
        is_test = np.array([d >= first_test_target for d in self.target_dates])
        return self.rows(~is_test), self.rows(is_test)


def calendar_columns(day: dt.date, is_holiday: bool) -> list[float]:
    dow = day.weekday()
    doy = day.timetuple().tm_yday
    return [
        np.sin(2 * np.pi * dow / 7),
        np.cos(2 * np.pi * dow / 7),
        np.sin(2 * np.pi * (doy - 1) / 365.25),
        np.cos(2 * np.pi * (doy - 1) / 365.25),
        float(dow >= 5),
        float(is_holiday),
    ]


def text_columns(features: pd.DataFrame | None, spec: FeatureSetSpec, selected: Iterable[str] | None) -> list[str]:
    """Feature-table columns used by ``spec``'s text families, limited to ``selected``."""
    if not spec.text_families:
        return []
    if features is None:
        raise ValueError("text families requested but no feature table given")
    keep = None if selected is None else set(selected)
    cols = []
    for fid in spec.text_families:
        family, text_type = parse_family_id(fid)
        cols += [c for c in columns_for(features.columns, family, text_type) if keep is None or c in keep]
    return cols


def build_design(
    aligned: AlignedDataset,
    features: pd.DataFrame | None = None,
    spec: FeatureSetSpec = FeatureSetSpec(),
    selected: Iterable[str] | None = None,
) -> DesignMatrix:
    """One row per issue day d, predicting the 48 slots of day d+1.

    Demand lags are the full days d-1, d-2 and d-7; calendar flags and the
    observed temperature describe day d+1; textual columns are taken from
    day d-1. Rows whose inputs are not all present are dropped.
    """
    index = aligned.index
    text_cols = text_columns(features, spec, selected)
    holidays = aligned.holidays
    columns: list[str] = []
    if spec.demand:
        columns += [f"demand_lag{lag}_h{h + 1}" for lag in DEMAND_LAGS for h in range(aligned.demand.shape[1])]
    if spec.calendar:
        columns += list(CALENDAR_COLUMNS)
    if spec.temperature:
        columns.append("temperature")
    columns += text_cols
    feat_values = features[text_cols] if text_cols else None

    issue, target, rows, ys = [], [], [], []
    one = dt.timedelta(days=1)
    for d in aligned.dates:
        nxt = d + one
        if nxt not in index:
            continue
        lag_days = [d - dt.timedelta(days=lag) for lag in DEMAND_LAGS]
        if spec.demand and any(ld not in index for ld in lag_days):
            continue
        prev = d - one
        if text_cols and prev not in feat_values.index:
            continue
        parts: list[np.ndarray | list[float]] = []
        if spec.demand:
            parts += [aligned.demand[index[ld]] for ld in lag_days]
        if spec.calendar:
            parts.append(calendar_columns(nxt, nxt in holidays))
        if spec.temperature:
            parts.append([aligned.temperature[index[nxt]]])
        if text_cols:
            parts.append(feat_values.loc[prev].to_numpy(dtype=float))
        issue.append(d)
        target.append(nxt)
        rows.append(np.concatenate([np.asarray(p, dtype=float) for p in parts]))
        ys.append(aligned.demand[index[nxt]])
    if not rows:
        raise ValueError("design matrix is empty after lag trimming")
    X = np.vstack(rows)
    if not np.isfinite(X).all():
        raise ValueError("design matrix has non-finite entries")
    return DesignMatrix(issue, target, columns, X, np.vstack(ys))


def persistence_forecast(aligned: AlignedDataset, target_dates: Sequence[dt.date], lag_days: int = 7) -> np.ndarray:
    """Same half-hour ``lag_days`` before each target day."""
    idx = aligned.index
    return np.vstack([aligned.demand[idx[d - dt.timedelta(days=lag_days)]] for d in target_dates])


def time_folds(n_rows: int, n_folds: int = 5) -> list[np.ndarray]:
    """Contiguous, time-ordered blocks that partition ``range(n_rows)``."""
    if n_rows < n_folds:
        raise ValueError(f"{n_rows} rows cannot form {n_folds} folds")
    return np.array_split(np.arange(n_rows), n_folds)


def default_grid(seed: int = 0) -> list[ExtraTreesConfig]:
    return [
        ExtraTreesConfig(n_trees=m, max_features=k, min_samples_split=n, seed=seed)
        for m, k, n in itertools.product((100, 300), ("sqrt", "third"), (2, 5))
    ]


@dataclass
class GridSearchResult:
    best: ExtraTreesConfig
    table: pd.DataFrame = field(repr=False)


def grid_search_cv(
    X: np.ndarray,
    Y: np.ndarray,
    grid: Sequence[ExtraTreesConfig],
    n_folds: int = 5,
    n_jobs: int = 1,
) -> GridSearchResult:
    """Score each config by mean validation RMSE over contiguous folds.

    Ties go to fewer trees, then fewer candidate features.
    """
    if not grid:
        raise ValueError("empty grid")
    folds = time_folds(len(X), n_folds)
    p = X.shape[1]
    records = []
    for cfg in grid:
        scores = []
        for k, val in enumerate(folds):
            train = np.concatenate([f for j, f in enumerate(folds) if j != k])
            model = fit_extratrees(X[train], Y[train], cfg, n_jobs=n_jobs)
            err = model.predict(X[val]) - Y[val].reshape(len(val), -1)
            scores.append(float(np.sqrt(np.mean(err**2))))
        records.append(
            {
                "n_trees": cfg.n_trees,
                "max_features": str(cfg.max_features),
                "k": cfg.resolve_max_features(p),
                "min_samples_split": cfg.min_samples_split,
                "rmse": float(np.mean(scores)),
                **{f"fold{i}": s for i, s in enumerate(scores)},
            }
        )
        logger.info("grid %s: cv rmse %.3f", cfg, records[-1]["rmse"])
    table = pd.DataFrame(records)
    order = sorted(range(len(grid)), key=lambda i: (records[i]["rmse"], grid[i].n_trees, records[i]["k"]))
    return GridSearchResult(grid[order[0]], table)


def fit_design(design: DesignMatrix, config: ExtraTreesConfig, n_jobs: int = 1) -> ExtraTreesModel:
    return fit_extratrees(design.X, design.Y, config, feature_names=design.columns, n_jobs=n_jobs)


def with_seed(config: ExtraTreesConfig, seed: int) -> ExtraTreesConfig:
    return replace(config, seed=seed)
