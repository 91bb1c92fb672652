"""Does a news keyword help a day-ahead demand forecast?

Generates four years of synthetic demand in which the keyword "blackout"
in headlines is followed, two days later, by a 500 MW drop. Builds
title word frequencies, screens them with the bilateral Granger filter,
and compares Extra-Trees forecasts with and without the selected words.
"""
import datetime as dt

import numpy as np

from newsload.evaluate import daily_mse, daily_scores, dm_test, period_metrics
from newsload.features import build_vocabulary, daily_rows, prepare, rows_to_frame
from newsload.forecast import FeatureSetSpec, build_design, fit_design, persistence_forecast
from newsload.select import bilateral_select
from newsload.synth import SynthConfig, generate
from newsload.trees import ExtraTreesConfig

SPLIT = dt.date(2020, 1, 1)

ds, truth = generate(SynthConfig(seed=0))
print(f"{len(ds)} days, {sum(map(len, ds.articles.values()))} articles, {len(truth.event_days)} keyword days")

# vocabulary from training headlines only
titles = {d: prepare(ds.day_articles(d), "title") for d in ds.dates}
vocab = build_vocabulary([a.tokens for d in ds.dates if d < SPLIT for a in titles[d]], 200)
freq = rows_to_frame(daily_rows(titles, "title", "wordfreq", vocabulary=vocab))
print(f"title vocabulary: {len(vocab)} words")

train_days = [d for d in ds.dates if d < SPLIT]
daily_mean = ds.demand[: len(train_days)].mean(axis=1)
selected, audit = bilateral_select({c: freq.loc[train_days, c].to_numpy() for c in freq.columns}, daily_mean)
print("Granger-selected:", selected)

forest = ExtraTreesConfig(n_trees=100, max_features="all", min_samples_split=5, seed=0)
results = {}
for spec in (FeatureSetSpec(), FeatureSetSpec(text_families=("WF_T",))):
    train, test = build_design(ds, freq, spec, selected).split(SPLIT)
    results[spec.label] = fit_design(train, forest).predict(test.X)
results["persistence (d-7)"] = persistence_forecast(ds, test.target_dates)

print(f"\n{'model':<20}{'rmse':>10}{'mae':>10}{'smape %':>10}")
for label, forecast in results.items():
    rmse, mae, smape = period_metrics(daily_scores(test.Y, forecast))
    print(f"{label:<20}{rmse:>10.1f}{mae:>10.1f}{smape:>10.2f}")

dm = dm_test(daily_mse(test.Y, results["D+C+T+WF_T"]), daily_mse(test.Y, results["D+C+T"]), ("D+C+T+WF_T", "D+C+T"))
print(f"\nDM test, text model more accurate: statistic {dm.statistic:.2f}, p = {dm.p_value:.2g}")
