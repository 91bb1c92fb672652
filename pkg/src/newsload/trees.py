"""Multi-output extremely randomized trees.

Each tree sees the full training set (no bootstrap). At every node, up to
``max_features`` non-constant features are tried, each with one threshold
drawn uniformly between the feature's node-local min and max; the split with
the largest variance reduction summed over all outputs wins.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numba
import numpy as np
import pandas as pd

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ExtraTreesConfig:
    n_trees: int = 100
    max_features: int | float | str = "third"
    min_samples_split: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("need at least one tree")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be at least 2")

    def resolve_max_features(self, n_features: int) -> int:
        mf = self.max_features
        if mf == "sqrt":
            k = int(math.sqrt(n_features))
        elif mf == "third":
            k = n_features // 3
        elif mf in ("all", None):
            k = n_features
        elif isinstance(mf, float):
            k = int(mf * n_features)
        else:
            k = int(mf)
        return min(max(k, 1), n_features)


@numba.njit(cache=True, nogil=True)
def _build_tree(X, Y, max_features, min_samples_split, seed):
    np.random.seed(seed)
    n, p = X.shape
    m = Y.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, m))
    count = np.zeros(cap, dtype=np.int64)

    idx = np.arange(n)
    perm = np.arange(p)
    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    top = 1
    n_nodes = 1
    sum_all = np.empty(m)
    sum_left = np.empty(m)

    while top > 0:
        top -= 1
        node = stack_node[top]
        s = stack_start[top]
        e = stack_end[top]
        ns = e - s
        count[node] = ns

        # node mean; an exactly constant target keeps its value verbatim
        constant = True
        first = idx[s]
        for j in range(m):
            acc = 0.0
            for r in range(s, e):
                v = Y[idx[r], j]
                acc += v
                if v != Y[first, j]:
                    constant = False
            sum_all[j] = acc
            value[node, j] = acc / ns
        if constant:
            for j in range(m):
                value[node, j] = Y[first, j]
        if ns < min_samples_split or constant:
            continue

        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        tried = 0
        # partial Fisher-Yates: draw features without replacement, skipping constants
        for i in range(p):
            if tried >= max_features:
                break
            jdx = i + np.random.randint(p - i)
            tmp = perm[i]
            perm[i] = perm[jdx]
            perm[jdx] = tmp
            f = perm[i]
            lo = X[idx[s], f]
            hi = lo
            for r in range(s + 1, e):
                v = X[idx[r], f]
                if v < lo:
                    lo = v
                elif v > hi:
                    hi = v
            if not hi > lo:
                continue
            tried += 1
            thr = lo + np.random.random() * (hi - lo)
            if thr >= hi:
                thr = lo
            n_left = 0
            for j in range(m):
                sum_left[j] = 0.0
            for r in range(s, e):
                row = idx[r]
                if X[row, f] <= thr:
                    n_left += 1
                    for j in range(m):
                        sum_left[j] += Y[row, j]
            n_right = ns - n_left
            # SSE reduction = n_l*|mean_l|^2 + n_r*|mean_r|^2 - n*|mean|^2
            gain = 0.0
            for j in range(m):
                sl = sum_left[j]
                sr = sum_all[j] - sl
                gain += sl * sl / n_left + sr * sr / n_right - sum_all[j] * sum_all[j] / ns
            if gain > best_score:
                best_score = gain
                best_f = f
                best_thr = thr
        if best_f < 0:
            continue

        # partition idx[s:e] so rows going left come first
        mid = s
        for r in range(s, e):
            if X[idx[r], best_f] <= best_thr:
                tmp = idx[r]
                idx[r] = idx[mid]
                idx[mid] = tmp
                mid += 1
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes
        stack_start[top] = s
        stack_end[top] = mid
        top += 1
        stack_node[top] = n_nodes + 1
        stack_start[top] = mid
        stack_end[top] = e
        top += 1
        n_nodes += 2

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        count[:n_nodes].copy(),
    )


@numba.njit(cache=True, nogil=True)
def _apply(X, roots, feature, threshold, left, right):
    n = X.shape[0]
    n_trees = roots.shape[0]
    out = np.empty((n_trees, n), dtype=np.int64)
    for t in range(n_trees):
        for i in range(n):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[t, i] = node
    return out


@numba.njit(cache=True, nogil=True)
def _mean_leaves(leaves, value):
    n_trees, n = leaves.shape
    m = value.shape[1]
    out = np.empty((n, m))
    buf = np.empty(n_trees)
    for i in range(n):
        for j in range(m):
            for t in range(n_trees):
                buf[t] = value[leaves[t, i], j]
            # summing in sorted order keeps the mean independent of tree order
            buf.sort()
            acc = 0.0
            for t in range(n_trees):
                acc += buf[t]
            out[i, j] = acc / n_trees
    return out


class ExtraTreesModel:
    """A fitted forest, stored as flat node arrays with one root offset per tree."""

    def __init__(self, config, feature_names, roots, feature, threshold, left, right, value, count):
        self.config = config
        self.feature_names = list(feature_names)
        self.roots = roots
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.count = count

    @property
    def n_trees(self) -> int:
        return self.roots.size

    @property
    def n_outputs(self) -> int:
        return self.value.shape[1]

    def _matrix(self, X) -> np.ndarray:
        if isinstance(X, pd.DataFrame):
            missing = [c for c in self.feature_names if c not in X.columns]
            if missing:
                raise KeyError(f"missing feature {missing[0]!r}")
            X = X[self.feature_names].to_numpy(dtype=float)
        elif isinstance(X, Mapping):
            missing = [c for c in self.feature_names if c not in X]
            if missing:
                raise KeyError(f"missing feature {missing[0]!r}")
            X = np.array([[float(X[c]) for c in self.feature_names]])
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        return X

    def apply(self, X) -> np.ndarray:
        """Leaf node index reached by each row in each tree, shape (trees, rows)."""
        return _apply(self._matrix(X), self.roots, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return _mean_leaves(self.apply(X), self.value)

    def predict_tree(self, tree: int, X) -> np.ndarray:
        leaves = _apply(self._matrix(X), self.roots[tree : tree + 1], self.feature, self.threshold, self.left, self.right)
        return self.value[leaves[0]]

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        meta = {
            "format_version": FORMAT_VERSION,
            "config": asdict(self.config),
            "feature_names": self.feature_names,
            **(extra or {}),
        }
        with Path(path).open("wb") as fh:
            np.savez(
                fh,
                roots=self.roots,
                feature=self.feature,
                threshold=self.threshold,
                left=self.left,
                right=self.right,
                value=self.value,
                count=self.count,
                meta=np.array(json.dumps(meta, sort_keys=True)),
            )

    @classmethod
    def load(cls, path: str | Path) -> "ExtraTreesModel":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta["format_version"] != FORMAT_VERSION:
                raise ValueError(f"unsupported model version {meta['format_version']}")
            arrays = {k: data[k].copy() for k in ("roots", "feature", "threshold", "left", "right", "value", "count")}
        return cls(ExtraTreesConfig(**meta["config"]), meta["feature_names"], **arrays)


def fit_extratrees(
    X,
    Y,
    config: ExtraTreesConfig = ExtraTreesConfig(),
    feature_names: Sequence[str] | None = None,
    n_jobs: int = 1,
) -> ExtraTreesModel:
    """Grow ``config.n_trees`` trees; per-tree seeds derive from ``config.seed``.

    ``n_jobs`` only changes how many trees grow at once, never the result.
    """
    if isinstance(X, pd.DataFrame):
        feature_names = list(X.columns) if feature_names is None else feature_names
        X = X.to_numpy(dtype=float)
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    Y = np.ascontiguousarray(Y)
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must have the same number of rows")
    if X.shape[0] < config.min_samples_split:
        raise ValueError(f"need at least {config.min_samples_split} rows, got {X.shape[0]}")
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise ValueError("training data contains non-finite values")
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(X.shape[1])]

    k = config.resolve_max_features(X.shape[1])
    seeds = np.random.SeedSequence(config.seed).generate_state(config.n_trees)

    def grow(seed):
        return _build_tree(X, Y, k, config.min_samples_split, int(seed))

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(grow, seeds))
    else:
        trees = [grow(s) for s in seeds]

    sizes = np.array([t[0].size for t in trees])
    roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    shift = lambda arr, off: np.where(arr >= 0, arr + off, -1)  # noqa: E731
    return ExtraTreesModel(
        config,
        feature_names,
        roots,
        np.concatenate([t[0] for t in trees]),
        np.concatenate([t[1] for t in trees]),
        np.concatenate([shift(t[2], o) for t, o in zip(trees, roots)]),
        np.concatenate([shift(t[3], o) for t, o in zip(trees, roots)]),
        np.vstack([t[4] for t in trees]),
        np.concatenate([t[5] for t in trees]),
    )
