import datetime as dt

import numpy as np
import pandas as pd
import pytest

from newsload.features import build_vocabulary, daily_rows, prepare, rows_to_frame
from newsload.forecast import (
    BENCHMARKS,
    COMBINATIONS,
    FeatureSetSpec,
    build_design,
    calendar_columns,
    default_grid,
    grid_search_cv,
    persistence_forecast,
    time_folds,
)
from newsload.trees import ExtraTreesConfig


@pytest.fixture(scope="module")
def wordfreq(small_synth):
    ds, _ = small_synth
    arts = {d: prepare(ds.day_articles(d), "title") for d in ds.dates}
    vocab = build_vocabulary([a.tokens for d in ds.dates if d.year == 2019 for a in arts[d]], 150)
    return rows_to_frame(daily_rows(arts, "title", "wordfreq", vocabulary=vocab))


def test_monday_calendar_encoding():
    row = calendar_columns(dt.date(2020, 1, 6), False)
    assert row[0] == 0.0 and row[1] == 1.0 and row[4] == 0.0
    assert calendar_columns(dt.date(2020, 1, 5), True)[4:] == [1.0, 1.0]


def test_column_count_and_first_rows(small_synth, wordfreq):
    ds, _ = small_synth
    selected = [c for c in wordfreq.columns][:3]
    design = build_design(ds, wordfreq, FeatureSetSpec(text_families=("WF_T",)), selected)
    assert design.X.shape[1] == 144 + 6 + 1 + len(selected)
    assert design.columns[-3:] == selected
    assert design.issue_dates[0] == ds.dates[7]
    assert design.target_dates[0] == ds.dates[8]
    assert design.issue_dates[-1] == ds.dates[-2]
    assert np.isfinite(design.X).all()


def test_row_contents(small_synth, wordfreq):
    ds, _ = small_synth
    design = build_design(ds, wordfreq, FeatureSetSpec(text_families=("WF_T",)))
    i = 100
    d = design.issue_dates[i]
    idx = ds.index
    day = dt.timedelta(days=1)
    np.testing.assert_array_equal(design.X[i, :48], ds.demand[idx[d - day]])
    np.testing.assert_array_equal(design.X[i, 96:144], ds.demand[idx[d - 7 * day]])
    assert design.X[i, 150] == ds.temperature[idx[d + day]]
    np.testing.assert_array_equal(design.X[i, 151:], wordfreq.loc[d - day].to_numpy())
    np.testing.assert_array_equal(design.Y[i], ds.demand[idx[d + day]])


def test_no_look_ahead(small_synth, wordfreq):
    ds, _ = small_synth
    spec = FeatureSetSpec(text_families=("WF_T",))
    full = build_design(ds, wordfreq, spec)
    for i in (0, 200, 500):
        d = full.issue_dates[i]
        target = d + dt.timedelta(days=1)
        cut = ds.subset(end=target)
        feats = wordfreq.loc[[x for x in wordfreq.index if x < d]]
        row = build_design(cut, feats, spec)
        assert row.issue_dates[-1] == d
        np.testing.assert_array_equal(row.X[-1], full.X[i])


def test_benchmark_and_battery_definitions():
    assert list(BENCHMARKS) == ["D", "D+C", "D+T", "D+C+T"]
    assert COMBINATIONS["M0"] == ("WF_T",)
    assert COMBINATIONS["M1"] == ("WF_T", "WF_D", "WF_B")
    assert COMBINATIONS["M8"] == ("WF_T", "SE_B", "TD_B", "GWE_B")
    assert len(COMBINATIONS) == 9
    spec = FeatureSetSpec.parse("M6")
    assert spec.label == "D+C+T+WF_T+SE_B+GWE_B"
    assert FeatureSetSpec.parse(spec.label) == spec
    assert FeatureSetSpec.parse("D+T") == FeatureSetSpec(True, False, True)


def test_persistence_uses_same_slot_a_week_earlier(small_synth):
    ds, _ = small_synth
    targets = ds.dates[10:13]
    np.testing.assert_array_equal(persistence_forecast(ds, targets), ds.demand[3:6])


def test_folds_partition_rows():
    folds = time_folds(103, 5)
    joined = np.concatenate(folds)
    assert np.array_equal(joined, np.arange(103))
    assert all(f.size in (20, 21) for f in folds)
    with pytest.raises(ValueError):
        time_folds(3, 5)


def test_default_grid_shape():
    grid = default_grid(3)
    assert len(grid) == 8
    assert {(c.n_trees, c.max_features, c.min_samples_split) for c in grid} == {
        (m, k, n) for m in (100, 300) for k in ("sqrt", "third") for n in (2, 5)
    }


def test_single_config_grid_returned(small_synth):
    ds, _ = small_synth
    design = build_design(ds.subset(end=dt.date(2019, 6, 30)), spec=FeatureSetSpec())
    cfg = ExtraTreesConfig(n_trees=5)
    result = grid_search_cv(design.X, design.Y, [cfg])
    assert result.best is cfg
    assert len(result.table) == 1 and np.isfinite(result.table.loc[0, "rmse"])


def test_grid_prefers_more_trees(small_synth):
    ds, _ = small_synth
    design = build_design(ds.subset(end=dt.date(2019, 12, 31)), spec=FeatureSetSpec())
    grid = [ExtraTreesConfig(n_trees=10, seed=1), ExtraTreesConfig(n_trees=200, seed=1)]
    result = grid_search_cv(design.X, design.Y, grid, n_jobs=4)
    assert result.best.n_trees == 200
    assert result.table.loc[1, "rmse"] < result.table.loc[0, "rmse"]


def test_split_by_target_date(small_synth):
    ds, _ = small_synth
    design = build_design(ds)
    train, test = design.split(dt.date(2020, 1, 1))
    assert len(train) + len(test) == len(design)
    assert max(train.target_dates) < dt.date(2020, 1, 1) <= min(test.target_dates)
    assert isinstance(design.frame, pd.DataFrame)
