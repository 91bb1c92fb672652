"""Daily textual feature families: counts, word frequencies, sentiment, embeddings."""
from __future__ import annotations

import csv
import datetime as dt
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from io import StringIO
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .ingest import SECTIONS, NewsItem
from .textprep import default_stopwords, normalize, tokenize

TEXT_TYPES = ("title", "description", "body")
TEXT_TYPE_CODES = {"title": "T", "description": "D", "body": "B"}
FAMILIES = ("count", "wordfreq", "sentiment", "embedding", "topic")
FAMILY_CODES = {"count": "CF", "wordfreq": "WF", "sentiment": "SE", "topic": "TD", "embedding": "GWE"}

COUNT_NAMES = (
    "n_words",
    "n_sentences",
    "n_unique_words",
    "n_content_words",
    "mean_sentences_per_article",
    "mean_words_per_sentence",
    "n_articles",
) + tuple(f"section_{s}" for s in SECTIONS)

SENTIMENT_NAMES = (
    tuple(f"polarity_q{i}" for i in range(5))
    + tuple(f"subjectivity_q{i}" for i in range(5))
    + ("polarity_max", "polarity_min", "polarity_mean", "polarity_std")
    + ("subjectivity_max", "subjectivity_min", "subjectivity_mean", "subjectivity_std")
)

DEFAULT_THRESHOLDS = {"title": 200, "description": 400, "body": 5000}


@dataclass
class DailyFeatureRow:
    date: dt.date
    text_type: str
    family: str
    values: dict[str, float]
    flags: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        arr = np.fromiter(self.values.values(), dtype=float, count=len(self.values))
        if not np.isfinite(arr).all():
            raise ValueError(f"non-finite {self.family} feature on {self.date}")

    @property
    def missing(self) -> bool:
        return self.flags.get("missing", False)

    def columns(self) -> dict[str, float]:
        return {column_name(self.family, self.text_type, k): v for k, v in self.values.items()}


def column_name(family: str, text_type: str, name: str) -> str:
    return f"{family}.{text_type}.{name}"


def family_id(family: str, text_type: str) -> str:
    """Short identifier such as ``WF_T`` for (wordfreq, title)."""
    return f"{FAMILY_CODES[family]}_{TEXT_TYPE_CODES[text_type]}"


def parse_family_id(fid: str) -> tuple[str, str]:
    code, tcode = fid.split("_")
    family = {v: k for k, v in FAMILY_CODES.items()}[code]
    text_type = {v: k for k, v in TEXT_TYPE_CODES.items()}[tcode]
    return family, text_type


class Article(NamedTuple):
    """One text field of one article after tokenization."""

    section: str
    raw: list[str]
    n_sentences: int
    tokens: list[str]


def prepare(items: Iterable[NewsItem], text_type: str, stopwords: frozenset[str] | None = None) -> list[Article]:
    sw = default_stopwords() if stopwords is None else stopwords
    out = []
    for item in items:
        tok = tokenize(item.text(text_type))
        out.append(Article(item.section, tok.tokens, tok.n_sentences, normalize(tok.tokens, sw)))
    return out


# --- counts -----------------------------------------------------------------


def count_features(day: dt.date, articles: Sequence[Article], text_type: str) -> DailyFeatureRow:
    n_articles = len(articles)
    n_words = sum(len(a.raw) for a in articles)
    n_sent = sum(a.n_sentences for a in articles)
    values = dict.fromkeys(COUNT_NAMES, 0.0)
    values.update(
        n_words=float(n_words),
        n_sentences=float(n_sent),
        n_unique_words=float(len({t for a in articles for t in a.raw})),
        n_content_words=float(sum(len(a.tokens) for a in articles)),
        mean_sentences_per_article=n_sent / n_articles if n_articles else 0.0,
        mean_words_per_sentence=n_words / n_sent if n_sent else 0.0,
        n_articles=float(n_articles),
    )
    # denominator is articles in a known section, so the proportions sum to 1
    sections = Counter(a.section for a in articles if a.section in SECTIONS)
    known = sum(sections.values())
    for s, c in sections.items():
        values[f"section_{s}"] = c / known
    return DailyFeatureRow(day, text_type, "count", values, {"missing": n_articles == 0})


# --- word frequencies -------------------------------------------------------


@dataclass(frozen=True)
class WordFreqConfig:
    title: int = DEFAULT_THRESHOLDS["title"]
    description: int = DEFAULT_THRESHOLDS["description"]
    body: int = DEFAULT_THRESHOLDS["body"]

    def __post_init__(self):
        for t in TEXT_TYPES:
            if getattr(self, t) < 0:
                raise ValueError(f"threshold for {t} must be non-negative")

    def threshold(self, text_type: str) -> int:
        return getattr(self, text_type)


class VocabularyError(ValueError):
    pass


def build_vocabulary(token_lists: Iterable[Sequence[str]], threshold: int) -> list[str]:
    """Words whose training-period frequency exceeds ``threshold``.

    Ordered by descending frequency, then alphabetically.
    """
    freq = Counter()
    for toks in token_lists:
        freq.update(toks)
    vocab = sorted((w for w, c in freq.items() if c > threshold), key=lambda w: (-freq[w], w))
    if not vocab:
        raise VocabularyError(f"no word occurs more than {threshold} times; lower the threshold")
    return vocab


def word_frequency_features(
    day: dt.date,
    articles: Sequence[Article],
    vocabulary: Sequence[str],
    text_type: str,
    normalize_by_total: bool = True,
) -> DailyFeatureRow:
    counts = Counter(t for a in articles for t in a.tokens)
    total = sum(counts.values())
    if normalize_by_total:
        values = {w: (counts[w] / total if total else 0.0) for w in vocabulary}
    else:
        values = {w: float(counts[w]) for w in vocabulary}
    return DailyFeatureRow(day, text_type, "wordfreq", values, {"missing": not articles})


# --- sentiment --------------------------------------------------------------


@dataclass
class SentimentLexicon:
    scores: dict[str, tuple[float, float]]
    modifiers: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for w, (p, s) in self.scores.items():
            if not (-1.0 <= p <= 1.0 and 0.0 <= s <= 1.0):
                raise ValueError(f"lexicon entry {w!r} out of range: ({p}, {s})")
        for w, m in self.modifiers.items():
            if m <= 0:
                raise ValueError(f"modifier {w!r} must have positive intensity")
        # a modifier is never scored itself
        overlap = set(self.scores) & set(self.modifiers)
        for w in overlap:
            del self.scores[w]

    @classmethod
    def from_files(cls, lexicon_path: str | Path, modifiers_path: str | Path | None = None) -> "SentimentLexicon":
        scores = _read_lexicon(Path(lexicon_path).read_text(encoding="utf-8"))
        mods = _read_modifiers(Path(modifiers_path).read_text(encoding="utf-8")) if modifiers_path else {}
        return cls(scores, mods)


def _read_lexicon(text: str) -> dict[str, tuple[float, float]]:
    reader = csv.reader(StringIO(text))
    out = {}
    for row in reader:
        if not row or row[0] == "word" or row[0].startswith("#"):
            continue
        out[row[0].strip().lower()] = (float(row[1]), float(row[2]))
    return out


def _read_modifiers(text: str) -> dict[str, float]:
    reader = csv.reader(StringIO(text))
    return {row[0].strip().lower(): float(row[1]) for row in reader if row and row[0] != "word"}


@lru_cache(maxsize=1)
def default_lexicon() -> SentimentLexicon:
    data = resources.files("newsload.data")
    return SentimentLexicon(
        _read_lexicon(data.joinpath("lexicon.csv").read_text(encoding="utf-8")),
        _read_modifiers(data.joinpath("modifiers.csv").read_text(encoding="utf-8")),
    )


class SentimentScore(NamedTuple):
    polarity: float
    subjectivity: float
    neutral: bool


def sentiment_scores(tokens: Sequence[str], lexicon: SentimentLexicon) -> SentimentScore:
    """Mean word polarity and subjectivity over lexicon hits.

    A modifier multiplies the polarity of the next scored word (clamped to
    [-1, 1]); consecutive modifiers compound.
    """
    pols, subs = [], []
    boost = 1.0
    for tok in tokens:
        mult = lexicon.modifiers.get(tok)
        if mult is not None:
            boost *= mult
            continue
        hit = lexicon.scores.get(tok)
        if hit is None:
            continue
        pols.append(min(1.0, max(-1.0, hit[0] * boost)))
        subs.append(hit[1])
        boost = 1.0
    if not pols:
        return SentimentScore(0.0, 0.0, True)
    pol = min(1.0, max(-1.0, sum(pols) / len(pols)))
    return SentimentScore(pol, sum(subs) / len(subs), False)


def quintile_histogram(values: np.ndarray) -> np.ndarray:
    """Proportions in [0,.2), [.2,.4), [.4,.6), [.6,.8), [.8,1]."""
    if values.size == 0:
        return np.zeros(5)
    idx = np.clip(np.floor(np.asarray(values) * 5).astype(int), 0, 4)
    return np.bincount(idx, minlength=5) / values.size


def sentiment_features(
    day: dt.date, articles: Sequence[Article], lexicon: SentimentLexicon, text_type: str
) -> DailyFeatureRow:
    if not articles:
        return DailyFeatureRow(day, text_type, "sentiment", dict.fromkeys(SENTIMENT_NAMES, 0.0), {"missing": True})
    scores = [sentiment_scores(a.tokens, lexicon) for a in articles]
    pol = np.array([s.polarity for s in scores])
    sub = np.array([s.subjectivity for s in scores])
    vec = np.concatenate(
        [
            quintile_histogram((pol + 1.0) / 2.0),
            quintile_histogram(sub),
            [pol.max(), pol.min(), pol.mean(), pol.std()],
            [sub.max(), sub.min(), sub.mean(), sub.std()],
        ]
    )
    return DailyFeatureRow(
        day,
        text_type,
        "sentiment",
        dict(zip(SENTIMENT_NAMES, vec.tolist())),
        {"missing": False, "all_neutral": all(s.neutral for s in scores)},
    )


# --- embeddings -------------------------------------------------------------


class EmbeddingTable:
    """Read-only word -> vector table."""

    def __init__(self, words: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim != 2 or vectors.shape[0] != len(words):
            raise ValueError("need one vector per word")
        if not np.isfinite(vectors).all():
            raise ValueError("embedding table has non-finite entries")
        self.vectors = vectors
        self.index = {w: i for i, w in enumerate(words)}
        self.words = list(words)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def __len__(self) -> int:
        return len(self.words)

    @classmethod
    def load(cls, path: str | Path, dim: int | None = None) -> "EmbeddingTable":
        """Parse ``word v1 ... vD`` lines; every line must have the same D."""
        words, rows = [], []
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                if dim is None:
                    dim = len(parts) - 1
                if len(parts) - 1 != dim:
                    raise ValueError(f"{path}:{lineno}: expected {dim} values, found {len(parts) - 1}")
                words.append(parts[0])
                rows.append(np.array(parts[1:], dtype=float))
        if not rows:
            raise ValueError(f"embedding file {path} is empty")
        return cls(words, np.vstack(rows))

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for w, v in zip(self.words, self.vectors):
                fh.write(w + " " + " ".join(repr(float(x)) for x in v) + "\n")

    def text_vector(self, tokens: Sequence[str]) -> np.ndarray | None:
        idx = [self.index[t] for t in tokens if t in self.index]
        if not idx:
            return None
        return _order_free_mean(self.vectors[idx])


def _order_free_mean(rows: np.ndarray) -> np.ndarray:
    # sorting each column first makes the float sum independent of row order
    return np.sort(rows, axis=0).mean(axis=0)


def embedding_features(
    day: dt.date, articles: Sequence[Article], table: EmbeddingTable, text_type: str
) -> DailyFeatureRow:
    vecs = [v for v in (table.text_vector(a.tokens) for a in articles) if v is not None]
    if vecs:
        day_vec = _order_free_mean(np.vstack(vecs))
    else:
        day_vec = np.zeros(table.dim)
    names = [f"dim_{i}" for i in range(table.dim)]
    return DailyFeatureRow(day, text_type, "embedding", dict(zip(names, day_vec.tolist())), {"missing": not vecs})


# --- tables -----------------------------------------------------------------


def rows_to_frame(rows: Iterable[DailyFeatureRow]) -> pd.DataFrame:
    """Wide table, one row per date, columns ``family.texttype.name``.

    A ``missing.<texttype>`` indicator is added per text type from the
    count rows (1 when the day had no articles).
    """
    per_date: dict[dt.date, dict[str, float]] = {}
    seen: set[tuple[dt.date, str, str]] = set()
    for row in rows:
        key = (row.date, row.text_type, row.family)
        if key in seen:
            raise ValueError(f"duplicate feature row {key}")
        seen.add(key)
        cols = per_date.setdefault(row.date, {})
        cols.update(row.columns())
        if row.family == "count":
            cols[f"missing.{row.text_type}"] = float(row.missing)
    frame = pd.DataFrame.from_dict(per_date, orient="index").sort_index()
    frame.index.name = "date"
    return frame


def write_feature_table(frame: pd.DataFrame, path: str | Path) -> None:
    out = frame.copy()
    out.index = [d.isoformat() for d in out.index]
    out.index.name = "date"
    out.to_csv(path, float_format="%.17g")


def read_feature_table(path: str | Path) -> pd.DataFrame:
    frame = pd.read_csv(path, index_col=0, float_precision="round_trip").astype(float)
    frame.index = [dt.date.fromisoformat(d) for d in frame.index]
    frame.index.name = "date"
    return frame


def columns_for(frame_columns: Iterable[str], family: str, text_type: str) -> list[str]:
    prefix = f"{family}.{text_type}."
    return [c for c in frame_columns if c.startswith(prefix)]


def daily_rows(
    articles_by_day: Mapping[dt.date, Sequence[Article]],
    text_type: str,
    family: str,
    **kwargs,
) -> list[DailyFeatureRow]:
    """Apply one family to every day (kwargs: vocabulary, lexicon or table)."""
    out = []
    for day in sorted(articles_by_day):
        arts = articles_by_day[day]
        if family == "count":
            out.append(count_features(day, arts, text_type))
        elif family == "wordfreq":
            out.append(word_frequency_features(day, arts, kwargs["vocabulary"], text_type, kwargs.get("normalize", True)))
        elif family == "sentiment":
            out.append(sentiment_features(day, arts, kwargs["lexicon"], text_type))
        elif family == "embedding":
            out.append(embedding_features(day, arts, kwargs["table"], text_type))
        else:
            raise ValueError(f"family {family!r} is not handled here")
    return out
