"""Tokenization and normalization of article texts into word lists."""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple

# letters only: \w minus digits and underscore, so diacritics survive
_WORD_RE = re.compile(r"[^\W\d_]+")
_SENTENCE_SPLIT_RE = re.compile(r"[.!?]+(?=\s|$)")
_ALNUM_RE = re.compile(r"[^\W_]")

MIN_TOKEN_LEN = 3


class Tokenized(NamedTuple):
    tokens: list[str]
    n_sentences: int


def tokenize(text: str | None) -> Tokenized:
    """Split ``text`` into lowercase alphabetic runs and count its sentences.

    Hyphens, apostrophes and digits all break tokens, so ``"COVID-19"``
    becomes ``["covid"]``. A trailing fragment without a terminator still
    counts as a sentence, which keeps headlines at one sentence each.
    """
    if not text:
        return Tokenized([], 0)
    tokens = [m.group(0).lower() for m in _WORD_RE.finditer(text)]
    pieces = _SENTENCE_SPLIT_RE.split(text)
    n_sentences = sum(1 for p in pieces if _ALNUM_RE.search(p))
    return Tokenized(tokens, n_sentences)


def normalize(tokens: Iterable[str], stopwords: frozenset[str] | set[str]) -> list[str]:
    out = []
    for tok in tokens:
        tok = tok.lower()
        if len(tok) < MIN_TOKEN_LEN or tok in stopwords:
            continue
        if any(ch.isdigit() for ch in tok):
            continue
        out.append(tok)
    return out


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Read a stopword file (one word per line); ``None`` gives the bundled list."""
    if path is None:
        return default_stopwords()
    words = _parse_wordlist(Path(path).read_text(encoding="utf-8"))
    if not words:
        raise ValueError(f"stopword file {path} is empty")
    return words


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    text = resources.files("newsload.data").joinpath("stopwords.txt").read_text(encoding="utf-8")
    return _parse_wordlist(text)


def _parse_wordlist(text: str) -> frozenset[str]:
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#"))
