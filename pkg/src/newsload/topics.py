"""LDA topic model fitted by collapsed Gibbs sampling, and daily topic features."""
from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .features import DailyFeatureRow

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_TOPIC_COUNTS = {"title": 87, "description": 100, "body": 69}


@dataclass(frozen=True)
class LdaConfig:
    n_topics: int
    alpha: float | None = None  # None -> 50 / n_topics
    beta: float = 0.01
    sweeps: int = 1000
    burn_in: int = 500
    seed: int = 0
    infer_sweeps: int = 50
    infer_burn_in: int = 20

    def __post_init__(self):
        if self.n_topics < 1:
            raise ValueError("n_topics must be at least 1")
        if (self.alpha is not None and self.alpha <= 0) or self.beta <= 0:
            raise ValueError("Dirichlet priors must be positive")
        if self.sweeps <= self.burn_in or self.infer_sweeps <= self.infer_burn_in:
            raise ValueError("sweep count must exceed burn-in")

    @property
    def alpha_(self) -> float:
        return 50.0 / self.n_topics if self.alpha is None else float(self.alpha)


@numba.njit(cache=True)
def _gibbs_sweep(words, docs, z, nkw, ndk, nk, alpha, beta, uniforms):
    n_topics, n_vocab = nkw.shape
    vbeta = n_vocab * beta
    p = np.empty(n_topics)
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        k = z[i]
        nkw[k, w] -= 1
        ndk[d, k] -= 1
        nk[k] -= 1
        total = 0.0
        for t in range(n_topics):
            total += (nkw[t, w] + beta) / (nk[t] + vbeta) * (ndk[d, t] + alpha)
            p[t] = total
        target = uniforms[i] * total
        k = 0
        while k < n_topics - 1 and p[k] <= target:
            k += 1
        z[i] = k
        nkw[k, w] += 1
        ndk[d, k] += 1
        nk[k] += 1


@numba.njit(cache=True)
def _fold_in(words, phi, alpha, uniforms, sweeps, burn_in, z):
    """Resample topics of one document with phi fixed; returns the mean theta."""
    n_topics = phi.shape[0]
    n = words.shape[0]
    ndk = np.zeros(n_topics)
    for i in range(n):
        ndk[z[i]] += 1
    acc = np.zeros(n_topics)
    p = np.empty(n_topics)
    u = 0
    for s in range(sweeps):
        for i in range(n):
            w = words[i]
            ndk[z[i]] -= 1
            total = 0.0
            for t in range(n_topics):
                total += phi[t, w] * (ndk[t] + alpha)
                p[t] = total
            target = uniforms[u] * total
            u += 1
            k = 0
            while k < n_topics - 1 and p[k] <= target:
                k += 1
            z[i] = k
            ndk[k] += 1
        if s >= burn_in:
            acc += (ndk + alpha) / (n + n_topics * alpha)
    return acc / (sweeps - burn_in)


class TopicInference(NamedTuple):
    distribution: np.ndarray
    empty: bool


@dataclass
class LdaModel:
    vocabulary: list[str]
    phi: np.ndarray
    theta: np.ndarray
    config: LdaConfig

    def __post_init__(self):
        self.word_index = {w: i for i, w in enumerate(self.vocabulary)}

    @property
    def n_topics(self) -> int:
        return self.phi.shape[0]

    def top_words(self, topic: int, n: int = 10) -> list[str]:
        order = np.lexsort((np.arange(self.phi.shape[1]), -self.phi[topic]))
        return [self.vocabulary[i] for i in order[:n]]

    def save(self, path: str | Path) -> None:
        meta = {"format_version": FORMAT_VERSION, "config": asdict(self.config)}
        with Path(path).open("wb") as fh:
            np.savez(
                fh,
                vocabulary=np.array(self.vocabulary, dtype=str),
                phi=self.phi,
                theta=self.theta,
                meta=np.array(json.dumps(meta, sort_keys=True)),
            )

    @classmethod
    def load(cls, path: str | Path) -> "LdaModel":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta["format_version"] != FORMAT_VERSION:
                raise ValueError(f"unsupported topic model version {meta['format_version']}")
            return cls([str(w) for w in data["vocabulary"]], data["phi"].copy(), data["theta"].copy(), LdaConfig(**meta["config"]))


def _row_normalize(mat: np.ndarray) -> np.ndarray:
    return mat / mat.sum(axis=1, keepdims=True)


def fit_lda(documents: Sequence[Sequence[str]], config: LdaConfig) -> LdaModel:
    """Collapsed Gibbs sampling; phi and theta are averaged over post-burn-in sweeps."""
    if not any(len(doc) for doc in documents):
        raise ValueError("cannot fit a topic model on an empty corpus")
    n_distinct = len({tuple(doc) for doc in documents if doc})
    if config.n_topics > n_distinct:
        raise ValueError(f"{config.n_topics} topics exceed {n_distinct} distinct documents")

    vocabulary = sorted({w for doc in documents for w in doc})
    index = {w: i for i, w in enumerate(vocabulary)}
    words = np.array([index[w] for doc in documents for w in doc], dtype=np.int64)
    docs = np.repeat(np.arange(len(documents)), [len(doc) for doc in documents]).astype(np.int64)
    k, v, n_docs = config.n_topics, len(vocabulary), len(documents)
    alpha, beta = config.alpha_, config.beta

    rng = np.random.default_rng(config.seed)
    z = rng.integers(k, size=words.size).astype(np.int64)
    nkw = np.zeros((k, v), dtype=np.int64)
    ndk = np.zeros((n_docs, k), dtype=np.int64)
    np.add.at(nkw, (z, words), 1)
    np.add.at(ndk, (docs, z), 1)
    nk = nkw.sum(axis=1)
    nd = ndk.sum(axis=1, keepdims=True)

    phi_acc = np.zeros((k, v))
    theta_acc = np.zeros((n_docs, k))
    for sweep in range(config.sweeps):
        _gibbs_sweep(words, docs, z, nkw, ndk, nk, alpha, beta, rng.random(words.size))
        if sweep >= config.burn_in:
            phi_acc += (nkw + beta) / (nk[:, None] + v * beta)
            theta_acc += (ndk + alpha) / (nd + k * alpha)
    n_samples = config.sweeps - config.burn_in
    return LdaModel(vocabulary, _row_normalize(phi_acc / n_samples), _row_normalize(theta_acc / n_samples), config)


def infer_doc_topics(model: LdaModel, tokens: Sequence[str]) -> TopicInference:
    """Fold-in Gibbs inference for one document with phi held fixed.

    Seeded from the model, so a document always gets the same answer
    regardless of what else is inferred.
    """
    k = model.n_topics
    ids = np.array([model.word_index[t] for t in tokens if t in model.word_index], dtype=np.int64)
    if ids.size == 0:
        return TopicInference(np.full(k, 1.0 / k), True)
    cfg = model.config
    rng = np.random.default_rng(cfg.seed)
    z = rng.integers(k, size=ids.size).astype(np.int64)
    u = rng.random(ids.size * cfg.infer_sweeps)
    theta = _fold_in(ids, model.phi, cfg.alpha_, u, cfg.infer_sweeps, cfg.infer_burn_in, z)
    return TopicInference(theta / theta.sum(), False)


def daily_topic_features(
    model: LdaModel, day: dt.date, documents: Sequence[Sequence[str]], text_type: str
) -> DailyFeatureRow:
    k = model.n_topics
    names = [f"topic_{i}" for i in range(k)]
    if not documents:
        return DailyFeatureRow(day, text_type, "topic", dict(zip(names, [1.0 / k] * k)), {"missing": True})
    dists = np.vstack([infer_doc_topics(model, doc).distribution for doc in documents])
    mean = np.sort(dists, axis=0).mean(axis=0)
    mean /= mean.sum()
    return DailyFeatureRow(day, text_type, "topic", dict(zip(names, mean.tolist())), {"missing": False})


def log_likelihood(model: LdaModel, documents: Sequence[Sequence[str]]) -> float:
    """Held-out log-likelihood per token using fold-in topic mixtures.

    Out-of-vocabulary tokens are ignored.
    """
    total, n = 0.0, 0
    for doc in documents:
        ids = [model.word_index[t] for t in doc if t in model.word_index]
        if not ids:
            continue
        theta = infer_doc_topics(model, doc).distribution
        total += float(np.log(theta @ model.phi[:, ids]).sum())
        n += len(ids)
    return total / max(n, 1)


def umass_coherence(model: LdaModel, documents: Sequence[Sequence[str]], top_n: int = 10) -> float:
    """Mean UMass coherence of each topic's top words, from document co-occurrence."""
    doc_sets = [set(doc) for doc in documents]
    scores = []
    for t in range(model.n_topics):
        top = model.top_words(t, top_n)
        df = {w: sum(w in s for s in doc_sets) for w in top}
        score = 0.0
        for m in range(1, len(top)):
            for l in range(m):
                co = sum(top[m] in s and top[l] in s for s in doc_sets)
                score += np.log((co + 1.0) / df[top[l]])
        scores.append(score)
    return float(np.mean(scores))


def select_topic_count(
    documents: Sequence[Sequence[str]],
    candidates: Sequence[int],
    base: LdaConfig | None = None,
    rel_tol: float = 0.05,
) -> tuple[int, dict[int, float]]:
    """Pick the topic count with the highest coherence.

    Scores within ``rel_tol`` (relative to the best) count as a tie, and
    ties go to the smaller count.
    """
    candidates = sorted(set(candidates))
    if len(candidates) == 1:
        return candidates[0], {}
    base = base or LdaConfig(n_topics=candidates[0])
    scores = {}
    for k in candidates:
        cfg = LdaConfig(**{**asdict(base), "n_topics": k, "alpha": None if base.alpha is None else base.alpha})
        scores[k] = umass_coherence(fit_lda(documents, cfg), documents)
        logger.info("topic count %d: coherence %.4f", k, scores[k])
    best = max(scores.values())
    tol = rel_tol * abs(best)
    chosen = min(k for k, s in scores.items() if s >= best - tol)
    return chosen, scores
