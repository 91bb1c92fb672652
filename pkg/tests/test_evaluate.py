import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from newsload.evaluate import (
    DegenerateComparison,
    daily_mse,
    daily_scores,
    day_metrics,
    dm_matrix,
    dm_test,
    error_decomposition,
    period_metrics,
    read_predictions,
    write_predictions,
)


def brute_force(y, f):
    h = len(y)
    sq = ab = sm = 0.0
    for i in range(h):
        e = y[i] - f[i]
        sq += e * e
        ab += abs(e)
        sm += abs(e) / ((abs(y[i]) + abs(f[i])) / 2)
    return math.sqrt(sq / h), ab / h, 100 * sm / h


def test_identical_forecast_scores_zero():
    y = np.linspace(1, 2, 48)
    s = day_metrics(y, y)
    assert (s.rmse, s.mae, s.smape) == (0.0, 0.0, 0.0)


def test_hand_example():
    s = day_metrics([100, 300], [110, 290])
    assert s.rmse == pytest.approx(10) and s.mae == pytest.approx(10)
    assert s.smape == pytest.approx(50 * (10 / 105 + 10 / 295), abs=1e-12)
    assert s.smape == pytest.approx(6.457, abs=1e-3)


def test_zero_denominator_reported():
    with pytest.raises(ValueError, match="h2"):
        day_metrics([1.0, 0.0], [1.0, 0.0])


positive = arrays(float, 48, elements=st.floats(1.0, 1e5))


@given(positive, positive)
def test_metric_invariants(y, f):
    s = day_metrics(y, f)
    assert s.rmse >= s.mae - 1e-9 and 0 <= s.smape <= 200
    ref = brute_force(y, f)
    assert np.allclose([s.rmse, s.mae, s.smape], ref, rtol=0, atol=1e-9 * max(1.0, max(ref)))


def test_period_metrics_permutation_invariant():
    rng = np.random.default_rng(0)
    truth = rng.uniform(1e4, 4e4, (60, 48))
    fc = truth + rng.normal(0, 800, truth.shape)
    scores = daily_scores(truth, fc)
    order = rng.permutation(60)
    assert period_metrics(scores) == period_metrics([scores[i] for i in order])
    assert period_metrics(scores[:1]) == (scores[0].rmse, scores[0].mae, scores[0].smape)


def test_dm_antisymmetric():
    rng = np.random.default_rng(1)
    a, b = rng.gamma(2, size=200), rng.gamma(2.2, size=200)
    ab, ba = dm_test(a, b), dm_test(b, a)
    assert ab.p_value == pytest.approx(1 - ba.p_value, abs=1e-12)
    assert ab.statistic == -ba.statistic


def test_dm_degenerate():
    a = np.random.default_rng(2).gamma(2, size=50)
    with pytest.raises(DegenerateComparison):
        dm_test(a, a.copy())
    with pytest.raises(ValueError, match="at least 10"):
        dm_test(a[:5], a[:5] + 1)


def test_dm_planted_inferiority():
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        truth = rng.normal(30000, 3000, (120, 48))
        fa = truth + rng.normal(0, 500, truth.shape)
        fb = fa + rng.normal(0, 500, truth.shape)
        hits += dm_test(daily_mse(truth, fa), daily_mse(truth, fb)).p_value < 0.05
    assert hits >= 45


def test_dm_null_uniform():
    ps = []
    for seed in range(200):
        rng = np.random.default_rng(seed)
        truth = rng.normal(0, 1, (150, 48))
        fa = truth + rng.normal(0, 1, truth.shape)
        fb = truth + rng.normal(0, 1, truth.shape)
        ps.append(dm_test(daily_mse(truth, fa), daily_mse(truth, fb)).p_value)
    assert stats.kstest(ps, "uniform").statistic < 0.1


def test_small_sample_correction_is_more_conservative():
    rng = np.random.default_rng(3)
    a, b = rng.gamma(2, size=40), rng.gamma(2.6, size=40)
    plain, hln = dm_test(a, b), dm_test(a, b, small_sample=True)
    assert hln.p_value > plain.p_value


def test_dm_matrix_convention():
    rng = np.random.default_rng(4)
    base = rng.gamma(2, size=100)
    losses = {"good": base, "bad": base + rng.gamma(1, size=100), "same": base.copy()}
    m = dm_matrix(losses)
    assert (np.diag(m.to_numpy()) == 1).all()
    assert m.loc["bad", "good"] < 0.05  # column "good" beats row "bad"
    assert m.loc["good", "bad"] > 0.95
    assert m.loc["good", "same"] == 1.0


def test_error_decomposition():
    rng = np.random.default_rng(5)
    dates = [dt.date(2021, 1, 4) + dt.timedelta(days=i) for i in range(14)]
    truth = rng.uniform(2e4, 3e4, (14, 48))
    hours, types = error_decomposition(truth, truth, dates)
    assert (hours[["rmse", "mae", "smape"]].to_numpy() == 0).all()
    assert types["n_days"].sum() == 14 and list(types["n_days"]) == [10, 4]

    fc = truth + rng.normal(0, 300, truth.shape)
    hours, _ = error_decomposition(fc[:1], truth[:1], dates[:1])
    for h in (0, 11, 23):
        s = day_metrics(truth[0, 2 * h : 2 * h + 2], fc[0, 2 * h : 2 * h + 2])
        assert hours.loc[h, "rmse"] == pytest.approx(s.rmse) and hours.loc[h, "smape"] == pytest.approx(s.smape)


def test_predictions_round_trip(tmp_path):
    dates = [dt.date(2021, 1, 1), dt.date(2021, 1, 2)]
    fc = np.random.default_rng(6).normal(size=(2, 48)) * 1e4
    write_predictions(tmp_path / "p.csv", dates, fc)
    d2, f2 = read_predictions(tmp_path / "p.csv")
    assert d2 == dates and np.array_equal(f2, fc)
