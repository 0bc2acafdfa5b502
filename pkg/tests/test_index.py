import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ratouch.corpus import StubCaptioner, build_corpus, build_shards, synth_manifest, write_shard
from ratouch.errors import ConfigError, DegenerateInputError, DimensionError, ValidationError
from ratouch.index import VectorIndex, build_index, estimate_memory


def _index(keys, key="text"):
    keys = np.asarray(keys, dtype=np.float64)
    return VectorIndex(np.arange(len(keys)), keys, keys, [f"c{i}" for i in range(len(keys))], key=key)


def test_nearest_key_is_returned_first():
    idx = _index([[1, 0], [0, 1], [-1, 0]])
    res = idx.topk([0.9, 0.1], 2)
    assert res.ids == [0, 1]
    assert res.scores[0] == pytest.approx(0.9 / np.hypot(0.9, 0.1), abs=1e-6)


def test_ties_broken_by_ascending_id():
    keys = np.array([[1.0, 0.0]] * 4)
    idx = VectorIndex([40, 10, 30, 20], keys, keys, ["a"] * 4)
    assert idx.topk([1.0, 0.0], 3).ids == [10, 20, 30]


def test_k_larger_than_corpus():
    assert len(_index(np.eye(3)).topk([1.0, 0.0, 0.0], 10)) == 3


def test_empty_index_returns_nothing():
    idx = VectorIndex([], np.zeros((0, 4)), np.zeros((0, 4)), [])
    assert len(idx.topk(np.ones(4), 5)) == 0


def test_query_validation():
    idx = _index(np.eye(3))
    with pytest.raises(DimensionError):
        idx.topk(np.ones(4), 1)
    with pytest.raises(DegenerateInputError):
        idx.topk(np.zeros(3), 1)
    with pytest.raises(ConfigError):
        idx.topk(np.ones(3), 0)


def test_duplicate_ids_rejected():
    with pytest.raises(ValidationError, match="duplicate entry id 5"):
        VectorIndex([5, 6, 5], np.eye(3), np.eye(3), ["a", "b", "c"])


def test_key_switch_searches_other_modality():
    r_v = np.array([[1.0, 0.0], [0.0, 1.0]])
    r_l = np.array([[0.0, 1.0], [1.0, 0.0]])
    idx = VectorIndex([0, 1], r_v, r_l, ["a", "b"])
    assert idx.topk([1.0, 0.0], 1).ids == [1]
    assert idx.with_key("image").topk([1.0, 0.0], 1).ids == [0]


def test_memory_estimate_matches_arrays():
    idx = _index(np.random.default_rng(0).normal(size=(50, 16)))
    assert idx.memory_bytes() == estimate_memory(50, 16)
    assert estimate_memory(150_000, 768) < 1e9


_unit_rows = arrays(np.float64, st.tuples(st.integers(1, 30), st.just(6)),
                    elements=st.floats(-1, 1, allow_nan=False)).filter(
    lambda m: np.all(np.linalg.norm(m, axis=1) > 1e-3))


@settings(max_examples=100, deadline=None)
@given(_unit_rows, arrays(np.float64, 6, elements=st.floats(-1, 1)).filter(lambda q: np.linalg.norm(q) > 1e-3),
       st.integers(1, 40))
def test_topk_matches_exhaustive_oracle(keys, query, k):
    idx = _index(keys)
    fast, slow = idx.topk(query, k), idx.oracle_topk(query, k)
    assert fast.ids == slow.ids
    assert fast.scores == slow.scores


@settings(max_examples=50, deadline=None)
@given(_unit_rows, st.floats(0.01, 100.0))
def test_topk_is_scale_invariant(keys, scale):
    idx = _index(keys)
    q = keys[0]
    assert idx.topk(q, 5).ids == idx.topk(q * scale, 5).ids


@settings(max_examples=50, deadline=None)
@given(_unit_rows)
def test_topk_prefix_is_monotone_in_k(keys):
    idx = _index(keys)
    q = keys[-1]
    prev = []
    for k in range(1, len(keys) + 1):
        ids = idx.topk(q, k).ids
        assert ids[:len(prev)] == prev
        prev = ids


def test_batch_matches_single():
    rng = np.random.default_rng(3)
    idx = _index(rng.normal(size=(200, 8)))
    queries = rng.normal(size=(10, 8))
    batch = idx.topk_batch(queries, 5)
    for q, r in zip(queries, batch):
        assert r.ids == idx.topk(q, 5).ids


def test_lines_format():
    idx = VectorIndex([3], [[1.0, 0.0]], [[1.0, 0.0]], ["soft, fuzzy, plush, pliable, woven"])
    assert idx.topk([2.0, 0.0], 1).lines() == ["3\t1.000000\tsoft, fuzzy, plush, pliable, woven"]


def test_build_index_from_all_sources(tmp_path):
    entries = build_corpus(synth_manifest(30, n_classes=5, seed=1), StubCaptioner(), dim=8, workers=1)
    paths, _ = build_shards(entries, 12, tmp_path / "c")
    from_entries = build_index(entries)
    from_dir = build_index(tmp_path / "c", expected_dim=8)
    from_paths = build_index(paths)
    q = entries[4].r_l
    for idx in (from_dir, from_paths):
        assert idx.topk(q, 5).ids == from_entries.topk(q, 5).ids
    assert from_entries.topk(q, 1).ids == [entries[4].id] or from_entries.topk(q, 1).scores[0] == pytest.approx(1.0)


def test_build_index_rejects_mixed_dims(tmp_path):
    a = build_corpus(synth_manifest(3, seed=0), StubCaptioner(), dim=8, workers=1)
    b = build_corpus(synth_manifest(3, seed=0), StubCaptioner(), dim=16, workers=1)
    pa = write_shard(tmp_path / "a.imnt", a)
    pb = write_shard(tmp_path / "b.imnt", b)
    with pytest.raises(DimensionError):
        build_index([pa, pb])
