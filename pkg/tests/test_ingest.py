import datetime as dt
import json

import numpy as np
import pytest

from newsload.ingest import (
    IngestError,
    NewsItem,
    align,
    ingest_corpus,
    ingest_demand,
    load_aligned,
    save_aligned,
    write_demand,
)

D0 = dt.date(2020, 1, 1)


def _write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")


def test_two_records_parse(tmp_path):
    path = tmp_path / "c.jsonl"
    _write_jsonl(
        path,
        [
            {"date": "2020-01-01", "section": "UK", "title": "A", "description": "d", "body": "b"},
            {"date": "2020-01-02", "section": "Business", "title": "B", "description": "", "body": ""},
        ],
    )
    corpus = ingest_corpus(path)
    assert len(corpus.items) == 2 and corpus.n_skipped == 0
    assert corpus.items[1].empty_body
    assert corpus.n_empty_body == 1


def test_skips_are_counted(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(
        "\n".join(
            [
                json.dumps({"date": "2020-01-01", "title": "ok"}),
                "{broken",
                json.dumps({"date": "not a date", "title": "x"}),
                json.dumps({"date": "2020-01-01", "title": ""}),
                json.dumps({"date": "2015-01-01", "title": "old"}),
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    corpus = ingest_corpus(path, window=(dt.date(2016, 6, 1), dt.date(2021, 5, 31)))
    assert corpus.n_raw == 5
    assert len(corpus.items) + corpus.n_skipped == corpus.n_raw
    assert [line for line, _ in corpus.skipped] == [2, 3, 4, 5]
    assert all(dt.date(2016, 6, 1) <= i.date <= dt.date(2021, 5, 31) for i in corpus.items)


def test_table_reader(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("date,section,title,description,body\n2020-01-01,uk,Hello,,\n", encoding="utf-8")
    corpus = ingest_corpus(path, format="csv")
    assert corpus.items[0].section == "uk" and corpus.items[0].title == "Hello"


def test_two_clean_days(tmp_path):
    values = np.arange(96, dtype=float).reshape(2, 48) + 1000
    path = tmp_path / "d.csv"
    write_demand([D0, D0 + dt.timedelta(days=1)], values, path)
    series = ingest_demand(path)
    assert series.dates == [D0, D0 + dt.timedelta(days=1)]
    np.testing.assert_array_equal(series.values, values)
    assert series.repaired == []


def test_spring_forward_day_interpolated(tmp_path):
    # 2021-03-28 in Europe/London has 46 local half-hours
    day = dt.date(2021, 3, 28)
    start = np.datetime64("2021-03-28T00:00")
    stamps = [start + np.timedelta64(30 * i, "m") for i in range(46)]
    mw = 1000.0 + 10.0 * np.arange(46)
    path = tmp_path / "d.csv"
    path.write_text(
        "timestamp,MW\n" + "".join(f"{s}Z,{v}\n" for s, v in zip(stamps, mw)), encoding="utf-8"
    )
    series = ingest_demand(path, day_tz="Europe/London")
    assert series.dates == [day]
    assert series.repaired == [day]
    row = series.values[0]
    assert row.shape == (48,)
    # UTC 00:00 is local 00:00, UTC 01:00 is local 02:00: slots 2 and 3 are missing
    np.testing.assert_array_equal(row[:2], mw[:2])
    np.testing.assert_allclose(row[2:4], [mw[1] + (mw[2] - mw[1]) / 3, mw[1] + 2 * (mw[2] - mw[1]) / 3])
    np.testing.assert_array_equal(row[4:], mw[2:])


def test_four_slot_toy_interpolation(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("timestamp,MW\n2020-01-01T00:00Z,10\n2020-01-01T18:00Z,40\n", encoding="utf-8")
    series = ingest_demand(path, slots_per_day=4, max_missing=2)
    np.testing.assert_allclose(series.values[0], [10, 20, 30, 40])


def test_fall_back_day_averaged(tmp_path):
    # 2021-10-31 in Europe/London has 50 local half-hours; 01:00 and 01:30 repeat
    start = np.datetime64("2021-10-31T00:00") - np.timedelta64(60, "m")
    stamps = [start + np.timedelta64(30 * i, "m") for i in range(50)]
    mw = np.arange(50, dtype=float)
    path = tmp_path / "d.csv"
    path.write_text("timestamp,MW\n" + "".join(f"{s}Z,{v}\n" for s, v in zip(stamps, mw)), encoding="utf-8")
    series = ingest_demand(path, day_tz="Europe/London")
    row = series.values[0]
    assert row.shape == (48,) and series.repaired == [dt.date(2021, 10, 31)]
    assert row[2] == (2 + 4) / 2 and row[3] == (3 + 5) / 2


def test_negative_demand_names_timestamp(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("timestamp,MW\n2020-01-01T00:00Z,10\n2020-01-01T00:30Z,-5\n", encoding="utf-8")
    with pytest.raises(IngestError, match="2020-01-01T00:30Z"):
        ingest_demand(path)


def _demand(n_days):
    from newsload.ingest import DemandSeries

    dates = [D0 + dt.timedelta(days=i) for i in range(n_days)]
    return DemandSeries(dates, np.full((n_days, 48), 500.0))


def test_align_drops_dates_without_temperature():
    items = [NewsItem(D0, "uk", "Hello")]
    temps = {D0: 5.0, D0 + dt.timedelta(days=2): 6.0}
    ds = align(items, _demand(3), temps)
    assert ds.dates == [D0, D0 + dt.timedelta(days=2)]
    assert ds.gaps == [(D0 + dt.timedelta(days=1), "missing temperature")]
    assert ds.day_articles(D0 + dt.timedelta(days=2)) == []
    assert all(row.size == 48 for row in ds.demand)


def test_align_three_complete_dates():
    temps = {D0 + dt.timedelta(days=i): 1.0 for i in range(3)}
    ds = align([], _demand(3), temps)
    assert len(ds) == 3 and ds.contiguous and ds.gaps == []


def test_round_trip(tmp_path, small_synth):
    ds, _ = small_synth
    part = ds.subset(dt.date(2019, 3, 1), dt.date(2019, 4, 30))
    save_aligned(part, tmp_path / "fx")
    again = load_aligned(tmp_path / "fx")
    assert part.equals(again)
