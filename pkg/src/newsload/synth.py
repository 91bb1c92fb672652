"""Synthetic aligned datasets with a planted news -> demand effect.

The daily demand level is

    base + weekly cosine + annual cosine + temp_sensitivity * (temp - temp_ref)
         + holiday_effect * holiday + effect * event[d - lag]

and half-hour h of day d is ``level[d] * shape[h] + noise``, where ``shape``
is a fixed two-peak template with mean 1. On event days a few articles carry
one of the planted keywords in their title and body; the keywords never
appear otherwise unless ``keyword_background_rate`` > 0.
"""
from __future__ import annotations

import datetime as dt
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .features import EmbeddingTable, default_lexicon
from .ingest import SECTIONS, AlignedDataset, NewsItem, build_calendar, date_range, save_aligned
from .textprep import default_stopwords

SLOTS = 48


@dataclass(frozen=True)
class SynthConfig:
    start: dt.date = dt.date(2017, 1, 1)
    end: dt.date = dt.date(2020, 12, 31)
    base_load: float = 30000.0
    weekly_amplitude: float = 1000.0
    annual_amplitude: float = 2000.0
    temp_sensitivity: float = -120.0  # MW per degree C
    temp_reference: float = 11.0
    temp_mean: float = 11.0
    temp_amplitude: float = 6.0
    temp_noise: float = 1.5
    holiday_effect: float = -2000.0
    event_keywords: tuple[str, ...] = ("blackout",)
    event_rate: float = 0.25
    effect: float = -500.0  # MW on the daily level
    lag: int = 2  # days from keyword burst to demand effect
    event_articles: int = 3
    keyword_background_rate: float = 0.0  # per-article chance outside events
    noise_std: float = 150.0  # per half-hour
    background_vocabulary: int = 400
    sentiment_vocabulary: int = 120
    articles_per_day: tuple[int, int] = (6, 12)
    title_words: tuple[int, int] = (5, 9)
    description_words: tuple[int, int] = (10, 18)
    body_words: tuple[int, int] = (30, 60)
    embedding_dim: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.lag < 1:
            raise ValueError("effect lag must be at least one day")
        if min(self.weekly_amplitude, self.annual_amplitude, self.temp_amplitude, self.noise_std, self.temp_noise) < 0:
            raise ValueError("amplitudes and noise levels must be non-negative")
        if not 0 <= self.event_rate <= 1 or not 0 <= self.keyword_background_rate <= 1:
            raise ValueError("rates must lie in [0, 1]")
        if self.end <= self.start:
            raise ValueError("end must follow start")
        if not self.event_keywords:
            raise ValueError("at least one event keyword is required")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["start"], out["end"] = self.start.isoformat(), self.end.isoformat()
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthConfig":
        raw = dict(raw)
        for key in ("start", "end"):
            if isinstance(raw.get(key), str):
                raw[key] = dt.date.fromisoformat(raw[key])
        for key in ("event_keywords", "articles_per_day", "title_words", "description_words", "body_words"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


@dataclass
class GroundTruth:
    config: SynthConfig
    dates: list[dt.date]
    temperature: np.ndarray
    holidays: list[dt.date]
    event_days: list[dt.date]
    keywords: tuple[str, ...]
    effect: float
    lag: int
    effect_days: list[dt.date] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config.to_dict(),
                "dates": [d.isoformat() for d in self.dates],
                "temperature": [float(t) for t in self.temperature],
                "holidays": [d.isoformat() for d in self.holidays],
                "event_days": [d.isoformat() for d in self.event_days],
                "effect_days": [d.isoformat() for d in self.effect_days],
                "keywords": list(self.keywords),
                "effect_mw": self.effect,
                "lag_days": self.lag,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        raw = json.loads(text)
        dates = lambda key: [dt.date.fromisoformat(s) for s in raw[key]]  # noqa: E731
        return cls(
            SynthConfig.from_dict(raw["config"]),
            dates("dates"),
            np.array(raw["temperature"], dtype=float),
            dates("holidays"),
            dates("event_days"),
            tuple(raw["keywords"]),
            float(raw["effect_mw"]),
            int(raw["lag_days"]),
            dates("effect_days"),
        )


def load_shape(slots: int = SLOTS) -> np.ndarray:
    """Two-peak daily template (morning and evening), normalised to mean 1."""
    hours = (np.arange(slots) + 0.5) * 24 / slots
    shape = (
        0.75
        + 0.25 * np.exp(-((hours - 8.5) ** 2) / (2 * 1.5**2))
        + 0.35 * np.exp(-((hours - 18.0) ** 2) / (2 * 2.0**2))
        + 0.12 * np.exp(-((hours - 13.0) ** 2) / (2 * 3.0**2))
        - 0.12 * np.exp(-((hours - 3.5) ** 2) / (2 * 2.0**2))
    )
    return shape / shape.mean()


def fixed_holidays(start: dt.date, end: dt.date) -> list[dt.date]:
    """A handful of fixed-date holidays per year inside the range."""
    days = []
    for year in range(start.year, end.year + 1):
        for month, day in ((1, 1), (5, 1), (8, 28), (12, 25), (12, 26)):
            d = dt.date(year, month, day)
            if start <= d <= end:
                days.append(d)
    return days


def _seasonal(day: dt.date) -> tuple[float, float]:
    """(weekly, annual) unit cosines; weekly peaks mid-week, annual mid-January."""
    weekly = np.cos(2 * np.pi * (day.weekday() - 2) / 7)
    annual = np.cos(2 * np.pi * (day.timetuple().tm_yday - 15) / 365.25)
    return float(weekly), float(annual)


def daily_level(config: SynthConfig, truth: GroundTruth) -> np.ndarray:
    effect_days = set(truth.effect_days)
    holidays = set(truth.holidays)
    out = np.empty(len(truth.dates))
    for i, day in enumerate(truth.dates):
        weekly, annual = _seasonal(day)
        out[i] = (
            config.base_load
            + config.weekly_amplitude * weekly
            + config.annual_amplitude * annual
            + config.temp_sensitivity * (truth.temperature[i] - config.temp_reference)
            + config.holiday_effect * (day in holidays)
            + truth.effect * (day in effect_days)
        )
    return out


def noiseless_demand(truth: GroundTruth) -> np.ndarray:
    """Demand without the per-slot noise, rebuilt from the ground truth alone."""
    return np.outer(daily_level(truth.config, truth), load_shape())


def _pseudo_words(n: int, exclude: frozenset[str]) -> list[str]:
    onsets = "b c d f g k l m n p r s t v z".split()
    vowels = "a e i o u".split()
    codas = ["", "n", "r", "l", "s"]
    combos = ["".join(parts) for parts in itertools.product(onsets, vowels, onsets, vowels, codas)]
    # fixed shuffle so the pool does not all share one prefix
    order = np.random.default_rng(12345).permutation(len(combos))
    out = [combos[i] for i in order if combos[i] not in exclude][:n]
    if len(out) < n:
        raise ValueError(f"cannot build {n} pseudo-words")
    return out


class _Vocab:
    def __init__(self, config: SynthConfig):
        lex = default_lexicon()
        stop = default_stopwords()
        scored = sorted(w for w, (pol, _) in lex.scores.items() if abs(pol) >= 0.3 and len(w) >= 3 and w not in stop and w.isalpha())
        keywords = set(config.event_keywords)
        candidates = [w for w in scored if w not in keywords]
        # an even spread over the alphabet rather than the first n entries
        step = max(1, len(candidates) // max(config.sentiment_vocabulary, 1))
        self.sentiment = candidates[::step][: config.sentiment_vocabulary]
        self.background = _pseudo_words(config.background_vocabulary, frozenset(lex.scores) | stop | keywords)


def _sentence(rng: np.random.Generator, words: list[str], planted: str | None) -> str:
    words = list(words)
    if planted is not None:
        words.insert(int(rng.integers(len(words) + 1)), planted)
    return " ".join(words).capitalize()


def _draw_words(rng, pool, bounds, zipf_weights):
    n = int(rng.integers(bounds[0], bounds[1] + 1))
    return [pool[i] for i in rng.choice(len(pool), size=n, p=zipf_weights)]


def _article(rng, day, vocab: _Vocab, weights, config: SynthConfig, keyword: str | None) -> NewsItem:
    title = _draw_words(rng, vocab.background, config.title_words, weights)
    desc = _draw_words(rng, vocab.background, config.description_words, weights)
    body_sentences = []
    remaining = int(rng.integers(config.body_words[0], config.body_words[1] + 1))
    while remaining > 0:
        n = min(remaining, int(rng.integers(6, 14)))
        words = [vocab.background[i] for i in rng.choice(len(vocab.background), size=n, p=weights)]
        # roughly one word in five carries sentiment
        for j in range(n):
            if rng.random() < 0.2:
                words[j] = vocab.sentiment[int(rng.integers(len(vocab.sentiment)))]
        body_sentences.append(_sentence(rng, words, None))
        remaining -= n
    if keyword is not None:
        body_sentences.insert(0, _sentence(rng, _draw_words(rng, vocab.background, (4, 8), weights), keyword))
    return NewsItem(
        day,
        SECTIONS[int(rng.integers(len(SECTIONS)))],
        _sentence(rng, title, keyword),
        _sentence(rng, desc, None) + ".",
        ". ".join(body_sentences) + ".",
    )


def generate(config: SynthConfig = SynthConfig()) -> tuple[AlignedDataset, GroundTruth]:
    """Build the dataset and its ground truth; identical configs give identical output.

    Independent random streams drive temperature, events, noise and text,
    so e.g. changing the noise level leaves the event days unchanged.
    """
    streams = np.random.SeedSequence(config.seed).spawn(4)
    rng_temp, rng_event, rng_noise, rng_text = (np.random.default_rng(s) for s in streams)
    dates = date_range(config.start, config.end)
    n = len(dates)

    doy = np.array([d.timetuple().tm_yday for d in dates])
    temperature = (
        config.temp_mean
        - config.temp_amplitude * np.cos(2 * np.pi * (doy - 15) / 365.25)
        + config.temp_noise * rng_temp.standard_normal(n)
    )
    is_event = rng_event.random(n) < config.event_rate
    event_days = [d for d, e in zip(dates, is_event) if e]
    lag = dt.timedelta(days=config.lag)
    effect_days = sorted({d + lag for d in event_days if d + lag <= config.end})
    holidays = fixed_holidays(config.start, config.end)
    truth = GroundTruth(config, dates, temperature, holidays, event_days, tuple(config.event_keywords), config.effect, config.lag, effect_days)

    demand = noiseless_demand(truth) + config.noise_std * rng_noise.standard_normal((n, SLOTS))

    vocab = _Vocab(config)
    ranks = np.arange(1, len(vocab.background) + 1)
    weights = (1.0 / ranks) / (1.0 / ranks).sum()
    articles: dict[dt.date, list[NewsItem]] = {}
    for day, event in zip(dates, is_event):
        n_art = int(rng_text.integers(config.articles_per_day[0], config.articles_per_day[1] + 1))
        carriers = set(rng_text.choice(n_art, size=min(config.event_articles, n_art), replace=False).tolist()) if event else set()
        day_items = []
        for a in range(n_art):
            keyword = None
            if a in carriers or rng_text.random() < config.keyword_background_rate:
                keyword = config.event_keywords[int(rng_text.integers(len(config.event_keywords)))]
            day_items.append(_article(rng_text, day, vocab, weights, config, keyword))
        articles[day] = day_items

    dataset = AlignedDataset(
        dates=dates,
        demand=demand,
        temperature=temperature,
        calendar=build_calendar(dates, holidays),
        articles=articles,
        holidays=set(holidays),
    )
    return dataset, truth


def embedding_table(config: SynthConfig) -> EmbeddingTable:
    """Random unit-scale vectors for every generated word, seeded from the config."""
    vocab = _Vocab(config)
    words = sorted(set(vocab.background) | set(vocab.sentiment) | set(config.event_keywords))
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(5)[4])
    return EmbeddingTable(words, rng.standard_normal((len(words), config.embedding_dim)) / np.sqrt(config.embedding_dim))


def write_fixture(config: SynthConfig, directory: str | Path) -> tuple[AlignedDataset, GroundTruth]:
    """Write the dataset in the ingest formats plus embeddings and ground truth."""
    directory = Path(directory)
    dataset, truth = generate(config)
    save_aligned(dataset, directory)
    embedding_table(config).save(directory / "embeddings.txt")
    (directory / "ground_truth.json").write_text(truth.to_json() + "\n", encoding="utf-8")
    return dataset, truth
