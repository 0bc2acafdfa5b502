"""Exact cosine top-K retrieval over corpus embeddings."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateInputError, DimensionError, ValidationError

KEY_MODES = ("text", "image")


@dataclass(frozen=True)
class Hit:
    entry_id: int
    score: float
    r_v: np.ndarray = field(repr=False)
    r_l: np.ndarray = field(repr=False)
    caption: str = ""


@dataclass
class RetrievalResult:
    hits: list

    def __len__(self):
        return len(self.hits)

    def __iter__(self):
        return iter(self.hits)

    @property
    def ids(self):
        return [h.entry_id for h in self.hits]

    @property
    def scores(self):
        return [h.score for h in self.hits]

    def visual(self):
        return np.stack([h.r_v for h in self.hits]) if self.hits else np.zeros((0, 0), np.float32)

    def text(self):
        return np.stack([h.r_l for h in self.hits]) if self.hits else np.zeros((0, 0), np.float32)

    def lines(self):
        return [f"{h.entry_id}\t{h.score:.6f}\t{h.caption}" for h in self.hits]


def _unit_rows(m):
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateInputError("zero-norm row in corpus")
    return (m / norms).astype(np.float32)


class VectorIndex:
    """Immutable, unit-normalised key matrix plus the payload needed to answer queries.

    ``key`` selects which corpus vector is searched: caption embeddings
    (``"text"``, default) or image embeddings (``"image"``).
    """

    def __init__(self, ids, r_v, r_l, captions, key="text", labels=None):
        if key not in KEY_MODES:
            raise ConfigError(f"key must be one of {KEY_MODES}, got {key!r}")
        self.ids = np.asarray(ids, dtype=np.int64)
        if len(np.unique(self.ids)) != len(self.ids):
            seen, dup = set(), None
            for i in self.ids.tolist():
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise ValidationError(f"duplicate entry id {dup} in index")
        n = len(self.ids)
        self.key = key
        self.r_v = _unit_rows(r_v) if n else np.zeros((0, np.shape(r_v)[-1] if np.ndim(r_v) == 2 else 0), np.float32)
        self.r_l = _unit_rows(r_l) if n else np.zeros_like(self.r_v)
        self.dim = self.r_l.shape[1]
        self.captions = list(captions)
        self.labels = list(labels) if labels is not None else None

    @property
    def rows(self):
        return self.r_l if self.key == "text" else self.r_v

    def __len__(self):
        return len(self.ids)

    def with_key(self, key):
        """Same corpus, searched on the other modality (shares the arrays)."""
        clone = object.__new__(VectorIndex)
        clone.__dict__.update(self.__dict__)
        if key not in KEY_MODES:
            raise ConfigError(f"key must be one of {KEY_MODES}, got {key!r}")
        clone.key = key
        return clone

    def memory_bytes(self):
        return self.r_v.nbytes + self.r_l.nbytes + self.ids.nbytes

    def _check_query(self, query):
        q = np.asarray(query, dtype=np.float64)
        if q.shape[-1] != self.dim and len(self):
            raise DimensionError(f"query dim {q.shape[-1]} != index dim {self.dim}")
        norms = np.linalg.norm(q, axis=-1, keepdims=True)
        if np.any(norms == 0):
            raise DegenerateInputError("zero query vector")
        return (q / norms).astype(np.float32)

    def scores(self, query):
        """True cosine between ``query`` (vector or batch of rows) and every key row."""
        q = self._check_query(query)
        return (q @ self.rows.T).astype(np.float64)

    def _hit(self, i, score):
        return Hit(int(self.ids[i]), float(score), self.r_v[i], self.r_l[i], self.captions[i])

    def _select(self, scores, k):
        n = len(scores)
        if k >= n:
            cand = np.arange(n)
        else:
            kth = np.partition(scores, n - k)[n - k]
            cand = np.flatnonzero(scores >= kth)
        ids = self.ids
        best = heapq.nsmallest(k, cand.tolist(), key=lambda i: (-scores[i], ids[i]))
        return RetrievalResult([self._hit(i, scores[i]) for i in best])

    def topk(self, query, k):
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        if not len(self):
            self._check_query(query)
            return RetrievalResult([])
        return self._select(self.scores(query), k)

    def topk_batch(self, queries, k):
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        queries = np.atleast_2d(queries)
        if not len(self):
            return [RetrievalResult([]) for _ in queries]
        all_scores = self.scores(queries)
        return [self._select(s, k) for s in all_scores]

    def oracle_topk(self, query, k):
        """Reference: score everything, stable sort by (-score, id), truncate."""
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        if not len(self):
            self._check_query(query)
            return RetrievalResult([])
        scores = self.scores(query)
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], int(self.ids[i])))
        return RetrievalResult([self._hit(i, scores[i]) for i in order[:k]])


def build_index(source, key="text", expected_dim=None):
    """Index a corpus given as entries, a corpus directory, or shard paths."""
    from .corpus.build import material_of_entry
    from .corpus.shards import load_corpus, read_shard

    if isinstance(source, (str, Path)):
        source = Path(source)
        entries = load_corpus(source, expected_dim) if source.is_dir() else read_shard(source, expected_dim)
    else:
        source = list(source)
        if source and isinstance(source[0], (str, Path)):
            entries = []
            dims = set()
            for p in source:
                part = read_shard(p, expected_dim)
                if part:
                    dims.add(len(part[0].r_l))
                entries.extend(part)
            if len(dims) > 1:
                raise DimensionError(f"shards disagree on feature dim: {sorted(dims)}")
        else:
            entries = source
    dims = {len(e.r_l) for e in entries}
    if len(dims) > 1:
        raise DimensionError(f"entries disagree on feature dim: {sorted(dims)}")
    dim = dims.pop() if dims else (expected_dim or 0)
    if not entries:
        return VectorIndex([], np.zeros((0, dim)), np.zeros((0, dim)), [], key=key)
    return VectorIndex(
        [e.id for e in entries],
        np.stack([e.r_v for e in entries]),
        np.stack([e.r_l for e in entries]),
        [e.caption for e in entries],
        key=key,
        labels=[material_of_entry(e) for e in entries],
    )


def topk(index, query, k):
    return index.topk(query, k)


def oracle_topk(index, query, k):
    return index.oracle_topk(query, k)


def estimate_memory(n, dim):
    """Bytes held by an index of ``n`` rows: two float32 matrices plus int64 ids."""
    return 2 * n * dim * 4 + 8 * n
