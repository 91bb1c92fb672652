"""Reading, validating and aligning the corpus, demand, temperature and calendar inputs."""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SLOTS_PER_DAY = 48

# BBC news sections; anything else maps to "other"
SECTIONS: tuple[str, ...] = (
    "uk",
    "world",
    "business",
    "politics",
    "technology",
    "science_and_environment",
    "health",
    "education",
    "entertainment_and_arts",
    "england",
    "scotland",
    "wales",
    "northern_ireland",
    "asia",
    "europe",
    "africa",
    "middle_east",
    "us_and_canada",
)
_SECTION_ALIASES = {
    "uk_politics": "politics",
    "science": "science_and_environment",
    "entertainment": "entertainment_and_arts",
    "us": "us_and_canada",
    "tech": "technology",
}

REFERENCE_WINDOW = (dt.date(2016, 6, 1), dt.date(2021, 5, 31))


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class NewsItem:
    date: dt.date
    section: str
    title: str
    description: str = ""
    body: str = ""

    @property
    def empty_body(self) -> bool:
        return not self.body.strip()

    @property
    def empty_description(self) -> bool:
        return not self.description.strip()

    def text(self, text_type: str) -> str:
        return getattr(self, text_type)

    def to_record(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "section": self.section,
            "title": self.title,
            "description": self.description,
            "body": self.body,
        }


@dataclass
class Corpus:
    items: list[NewsItem]
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_skipped(self) -> int:
        return len(self.skipped)

    @property
    def n_raw(self) -> int:
        return len(self.items) + len(self.skipped)

    @property
    def n_empty_body(self) -> int:
        return sum(item.empty_body for item in self.items)

    def by_date(self) -> dict[dt.date, list[NewsItem]]:
        out: dict[dt.date, list[NewsItem]] = {}
        for item in self.items:
            out.setdefault(item.date, []).append(item)
        return out


@dataclass
class DemandSeries:
    """Daily matrix of half-hourly demand on the reference clock."""

    dates: list[dt.date]
    values: np.ndarray
    repaired: list[dt.date] = field(default_factory=list)
    dropped: list[tuple[dt.date, str]] = field(default_factory=list)
    n_duplicates: int = 0

    def as_dict(self) -> dict[dt.date, np.ndarray]:
        return dict(zip(self.dates, self.values))


def normalize_section(raw: str | None) -> str:
    if not raw:
        return "other"
    key = str(raw).strip().lower().replace("&", "and").replace("-", "_").replace(" ", "_")
    key = _SECTION_ALIASES.get(key, key)
    return key if key in SECTIONS else "other"


def parse_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    return dt.date.fromisoformat(str(value).strip()[:10])


def _records_jsonl(path: Path) -> Iterable[tuple[int, dict | None, str]]:
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, None, f"malformed record: {exc.msg}"
                continue
            if not isinstance(rec, dict):
                yield lineno, None, "record is not an object"
                continue
            yield lineno, rec, ""


def _records_table(path: Path) -> Iterable[tuple[int, dict | None, str]]:
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, rec in enumerate(reader, 2):
            yield lineno, rec, ""


def ingest_corpus(
    path: str | Path,
    format: str = "jsonl",
    window: tuple[dt.date, dt.date] | None = None,
) -> Corpus:
    """Read a news corpus from line-delimited JSON or a delimited table.

    Records with unparseable dates, an empty title, or (when ``window`` is
    given) a date outside the window are skipped and listed in
    ``Corpus.skipped`` as ``(line, reason)``.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"cannot read corpus file {path}")
    if format in ("jsonl", "json", "lines"):
        records = _records_jsonl(path)
    elif format in ("csv", "table"):
        records = _records_table(path)
    else:
        raise ValueError(f"unknown corpus format {format!r}")

    items: list[NewsItem] = []
    skipped: list[tuple[int, str]] = []
    for lineno, rec, problem in records:
        if rec is None:
            skipped.append((lineno, problem))
            continue
        try:
            date = parse_date(rec.get("date"))
        except (TypeError, ValueError):
            skipped.append((lineno, f"unparseable date {rec.get('date')!r}"))
            continue
        if window is not None and not (window[0] <= date <= window[1]):
            skipped.append((lineno, "outside window"))
            continue
        title = (rec.get("title") or "").strip()
        if not title:
            skipped.append((lineno, "empty title"))
            continue
        items.append(
            NewsItem(
                date=date,
                section=normalize_section(rec.get("section")),
                title=title,
                description=rec.get("description") or "",
                body=rec.get("body") or "",
            )
        )
    if skipped:
        logger.warning("corpus %s: skipped %d of %d records", path, len(skipped), len(items) + len(skipped))
    if not items:
        raise IngestError(f"corpus {path} contains no valid records")
    return Corpus(items, skipped)


def write_corpus(items: Iterable[NewsItem], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_record(), ensure_ascii=False) + "\n")


def ingest_demand(
    path: str | Path,
    day_tz: str | None = None,
    source_tz: str | None = None,
    slots_per_day: int = SLOTS_PER_DAY,
    max_missing: int = 4,
) -> DemandSeries:
    """Read a ``timestamp,MW`` table into a per-day slot matrix.

    Timestamps are first normalized to UTC (offset-aware stamps are
    converted, naive stamps are read as ``source_tz`` or UTC). Days are then
    cut on the ``day_tz`` wall clock. Spring-forward days (missing slots)
    are filled by linear interpolation along the slot axis; fall-back days
    (two readings for one wall-clock slot) are averaged. Repaired days are
    listed in ``repaired``. Days missing more than ``max_missing`` slots are
    dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"cannot read demand file {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if frame.shape[1] < 2:
        raise IngestError(f"demand file {path} needs timestamp and MW columns")
    ts_col, mw_col = frame.columns[:2]
    raw_ts = frame[ts_col].astype(str)
    mw = pd.to_numeric(frame[mw_col], errors="coerce").to_numpy(dtype=float)

    bad = ~np.isfinite(mw)
    if bad.any():
        raise IngestError(f"non-finite demand at {raw_ts.iloc[int(np.argmax(bad))]}")
    neg = mw < 0
    if neg.any():
        raise IngestError(f"negative demand {mw[neg][0]} at {raw_ts.iloc[int(np.argmax(neg))]}")

    if raw_ts.empty:
        raise IngestError(f"demand file {path} has no rows")
    if pd.Timestamp(raw_ts.iloc[0]).tzinfo is not None:
        # offsets may change across clock changes, so convert while parsing
        stamps = pd.to_datetime(raw_ts, utc=True, format="ISO8601")
    else:
        stamps = pd.to_datetime(raw_ts, format="ISO8601")
        stamps = stamps.dt.tz_localize(source_tz or "UTC", ambiguous="infer", nonexistent="raise").dt.tz_convert("UTC")

    steps = np.diff(stamps.dt.tz_localize(None).to_numpy().astype("datetime64[s]").astype(np.int64))
    if (steps < 0).any():
        where = int(np.argmax(steps < 0)) + 1
        raise IngestError(f"non-monotonic timestamp {raw_ts.iloc[where]}")
    n_dup = int((steps == 0).sum())
    if n_dup:
        logger.warning("demand %s: %d duplicate timestamps averaged", path, n_dup)

    local = stamps.dt.tz_convert(day_tz) if day_tz else stamps
    slot_minutes = 24 * 60 // slots_per_day
    slot = ((local.dt.hour * 60 + local.dt.minute) // slot_minutes).to_numpy()
    days = local.dt.date.to_numpy()

    grouped = (
        pd.DataFrame({"day": days, "slot": slot, "mw": mw})
        .groupby(["day", "slot"], sort=True)["mw"]
        .agg(["mean", "size"])
    )
    dates: list[dt.date] = []
    rows: list[np.ndarray] = []
    repaired: list[dt.date] = []
    dropped: list[tuple[dt.date, str]] = []
    grid = np.arange(slots_per_day)
    for day, sub in grouped.groupby(level="day", sort=True):
        present = sub.index.get_level_values("slot").to_numpy()
        vals = sub["mean"].to_numpy()
        n_missing = slots_per_day - present.size
        if n_missing > max_missing:
            dropped.append((day, f"{present.size} of {slots_per_day} slots"))
            continue
        row = np.interp(grid, present, vals) if n_missing else vals.copy()
        if n_missing or (sub["size"] > 1).any():
            repaired.append(day)
        dates.append(day)
        rows.append(row)
    if dropped:
        logger.warning("demand %s: dropped %d incomplete days", path, len(dropped))
    if repaired:
        logger.info("demand %s: repaired %d days to %d slots", path, len(repaired), slots_per_day)
    values = np.vstack(rows) if rows else np.empty((0, slots_per_day))
    return DemandSeries(dates, values, repaired, dropped, n_dup)


def write_demand(dates: Sequence[dt.date], values: np.ndarray, path: str | Path) -> None:
    """Write a slot matrix back out as UTC ``timestamp,MW`` rows."""
    slots = values.shape[1]
    step = dt.timedelta(minutes=24 * 60 // slots)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("timestamp,MW\n")
        for day, row in zip(dates, values):
            t0 = dt.datetime.combine(day, dt.time(0, 0))
            for i, v in enumerate(row):
                fh.write(f"{(t0 + i * step).isoformat()}Z,{float(v)!r}\n")


def ingest_temperature(path: str | Path) -> dict[dt.date, float]:
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"cannot read temperature file {path}")
    out: dict[dt.date, float] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        for row in reader:
            if not row:
                continue
            day = parse_date(row[0])
            value = float(row[1])
            if not math.isfinite(value):
                raise IngestError(f"non-finite temperature on {day}")
            if day in out:
                raise IngestError(f"duplicate temperature for {day}")
            out[day] = value
    if header is None:
        raise IngestError(f"temperature file {path} is empty")
    return out


def write_temperature(temps: dict[dt.date, float], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("date,temperature\n")
        for day in sorted(temps):
            fh.write(f"{day.isoformat()},{float(temps[day])!r}\n")


def ingest_holidays(path: str | Path | None) -> set[dt.date]:
    if path is None:
        return set()
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return {parse_date(line) for line in lines if line.strip() and not line.startswith("#")}


def write_holidays(holidays: Iterable[dt.date], path: str | Path) -> None:
    Path(path).write_text("".join(f"{d.isoformat()}\n" for d in sorted(holidays)), encoding="utf-8")


def build_calendar(dates: Sequence[dt.date], holidays: Iterable[dt.date] = ()) -> pd.DataFrame:
    """Calendar flags per date; Monday is day 0 and the weekend is {5, 6}."""
    hol = set(holidays)
    dow = [d.weekday() for d in dates]
    return pd.DataFrame(
        {
            "day_of_week": dow,
            "day_of_year": [d.timetuple().tm_yday for d in dates],
            "is_weekend": [w >= 5 for w in dow],
            "is_holiday": [d in hol for d in dates],
        },
        index=pd.Index(list(dates), name="date"),
    )


def date_range(start: dt.date, end: dt.date) -> list[dt.date]:
    return [start + dt.timedelta(days=i) for i in range((end - start).days + 1)]


@dataclass
class AlignedDataset:
    dates: list[dt.date]
    demand: np.ndarray
    temperature: np.ndarray
    calendar: pd.DataFrame
    articles: dict[dt.date, list[NewsItem]]
    holidays: set[dt.date] = field(default_factory=set)
    gaps: list[tuple[dt.date, str]] = field(default_factory=list)

    def __post_init__(self):
        self.index = {d: i for i, d in enumerate(self.dates)}

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def contiguous(self) -> bool:
        return all((b - a).days == 1 for a, b in zip(self.dates, self.dates[1:]))

    def day_articles(self, day: dt.date) -> list[NewsItem]:
        return self.articles.get(day, [])

    def subset(self, start: dt.date | None = None, end: dt.date | None = None) -> "AlignedDataset":
        keep = [i for i, d in enumerate(self.dates) if (start is None or d >= start) and (end is None or d <= end)]
        dates = [self.dates[i] for i in keep]
        return AlignedDataset(
            dates,
            self.demand[keep],
            self.temperature[keep],
            self.calendar.loc[dates],
            {d: self.articles.get(d, []) for d in dates},
            set(self.holidays),
            [g for g in self.gaps if (start is None or g[0] >= start) and (end is None or g[0] <= end)],
        )

    def equals(self, other: "AlignedDataset") -> bool:
        return (
            self.dates == other.dates
            and np.array_equal(self.demand, other.demand)
            and np.array_equal(self.temperature, other.temperature)
            and self.calendar.equals(other.calendar)
            and all(self.day_articles(d) == other.day_articles(d) for d in self.dates)
        )


def align(
    corpus: Corpus | Sequence[NewsItem],
    demand: DemandSeries,
    temperature: dict[dt.date, float],
    holidays: Iterable[dt.date] = (),
    window: tuple[dt.date, dt.date] | None = None,
) -> AlignedDataset:
    """Join all inputs per date.

    Dates without demand or temperature are dropped and listed in ``gaps``.
    Dates with no articles stay in with an empty article list.
    """
    items = corpus.items if isinstance(corpus, Corpus) else list(corpus)
    by_day: dict[dt.date, list[NewsItem]] = {}
    for item in items:
        by_day.setdefault(item.date, []).append(item)
    demand_map = demand.as_dict()
    if window is None:
        candidates = sorted(set(demand_map) | set(temperature))
        if not candidates:
            raise IngestError("no dates in demand or temperature")
        window = (candidates[0], candidates[-1])

    dates, gaps = [], []
    for day in date_range(*window):
        missing = [name for name, src in (("demand", demand_map), ("temperature", temperature)) if day not in src]
        if missing:
            gaps.append((day, "missing " + "+".join(missing)))
        else:
            dates.append(day)
    if not dates:
        raise IngestError(f"no date in {window[0]}..{window[1]} has all inputs")
    if gaps:
        logger.warning("align: dropped %d dates lacking inputs", len(gaps))
    hol = set(holidays)
    return AlignedDataset(
        dates=dates,
        demand=np.vstack([demand_map[d] for d in dates]),
        temperature=np.array([temperature[d] for d in dates], dtype=float),
        calendar=build_calendar(dates, hol),
        articles={d: by_day.get(d, []) for d in dates},
        holidays=hol,
        gaps=gaps,
    )


def save_aligned(ds: AlignedDataset, directory: str | Path) -> Path:
    """Write the dataset in the ingest file formats, plus a small manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_corpus((a for d in ds.dates for a in ds.day_articles(d)), directory / "corpus.jsonl")
    write_demand(ds.dates, ds.demand, directory / "demand.csv")
    write_temperature(dict(zip(ds.dates, ds.temperature)), directory / "temperature.csv")
    write_holidays(ds.holidays, directory / "holidays.txt")
    manifest = {"start": ds.dates[0].isoformat(), "end": ds.dates[-1].isoformat(), "slots": int(ds.demand.shape[1])}
    (directory / "dataset.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return directory


def load_aligned(directory: str | Path) -> AlignedDataset:
    directory = Path(directory)
    manifest = json.loads((directory / "dataset.json").read_text(encoding="utf-8"))
    window = (parse_date(manifest["start"]), parse_date(manifest["end"]))
    corpus_path = directory / "corpus.jsonl"
    items = ingest_corpus(corpus_path, window=window).items if corpus_path.stat().st_size else []
    return align(
        items,
        ingest_demand(directory / "demand.csv", slots_per_day=manifest.get("slots", SLOTS_PER_DAY)),
        ingest_temperature(directory / "temperature.csv"),
        ingest_holidays(directory / "holidays.txt"),
        window,
    )
