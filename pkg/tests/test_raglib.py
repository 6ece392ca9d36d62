from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from restoresched.degrade import DegradationLabel
from restoresched.errors import ArgumentError, FormatError, StateError
from restoresched.harness import degraded_corpus, linear_scan_topk
from restoresched.operators import SubTask, Trajectory, builtin_pool
from restoresched.perception import EMBED_DIM, Embedding
from restoresched.raglib import (FeatureStats, RagEntry, RagLibrary, build_library, retrieve_topk,
                                 select_trajectory)
from restoresched.scheduler import canonical_subtasks, greedy_search
from restoresched.perception import detect_degradations


def _lib(emb, labels=None) -> RagLibrary:
    labels = labels or [DegradationLabel()] * len(emb)
    entries = tuple(RagEntry(f"e{i}", Embedding(tuple(map(float, e))), lab,
                             Trajectory(((SubTask.DERAIN, f"op{i}"),)))
                    for i, (e, lab) in enumerate(zip(emb, labels)))
    return RagLibrary(entries, FeatureStats.from_embeddings([e.embedding for e in entries]))


def test_self_similarity_and_truncation():
    rng = np.random.default_rng(0)
    lib = _lib(rng.normal(size=(12, EMBED_DIM)))
    top = retrieve_topk(lib, lib.entries[5].embedding, 3)
    assert top[0][0] == 5 and top[0][1] == pytest.approx(1.0, abs=1e-9)
    assert len(retrieve_topk(lib, lib.entries[0].embedding, 50)) == 12


def test_retrieve_errors():
    rng = np.random.default_rng(0)
    lib = _lib(rng.normal(size=(3, EMBED_DIM)))
    with pytest.raises(ArgumentError):
        retrieve_topk(lib, lib.entries[0].embedding, 0)
    empty = RagLibrary((), lib.feature_stats)
    with pytest.raises(StateError):
        retrieve_topk(empty, lib.entries[0].embedding, 3)


@given(st.integers(1, 30), st.integers(1, 10), st.integers(0, 2 ** 32))
def test_retrieve_matches_linear_scan(n, k, seed):
    rng = np.random.default_rng(seed)
    emb = rng.normal(size=(n, EMBED_DIM))
    lib = _lib(emb)
    q = rng.normal(size=EMBED_DIM)
    got = retrieve_topk(lib, Embedding(tuple(q)), k)
    want = linear_scan_topk([list(e) for e in emb], lib.feature_stats.mean, lib.feature_stats.std, list(q), k)
    assert [i for i, _ in got] == [i for i, _ in want]
    np.testing.assert_allclose([s for _, s in got], [s for _, s in want], atol=1e-9)


def _with_matches(query: DegradationLabel, matches):
    """Labels agreeing with ``query`` on exactly the given number of bits."""
    labels = []
    for m in matches:
        bits = list(query.bits())
        for j in range(7 - m):
            bits[j] = not bits[j]
        labels.append(DegradationLabel.from_bits(bits))
    return labels


def test_select_examples():
    q = DegradationLabel(dark=True, noise=True)
    rng = np.random.default_rng(1)
    lib = _lib(rng.normal(size=(3, EMBED_DIM)), _with_matches(q, (5, 7, 6)))
    assert select_trajectory([(0, 0.9), (1, 0.8), (2, 0.7)], lib, q) == lib.entries[1].trajectory
    lib = _lib(rng.normal(size=(3, EMBED_DIM)), _with_matches(q, (7, 3, 3)))
    assert select_trajectory([(0, 0.2)], lib, q) == lib.entries[0].trajectory
    lib = _lib(rng.normal(size=(3, EMBED_DIM)), _with_matches(q, (4, 4, 4)))
    assert select_trajectory([(2, 0.9), (0, 0.5), (1, 0.4)], lib, q) == lib.entries[2].trajectory
    with pytest.raises(ArgumentError):
        select_trajectory([], lib, q)


def test_build_library_contracts():
    pool = builtin_pool()
    corpus = degraded_corpus(3, seed=5, kinds_fn=lambda rng: ("rain", "low_resolution"))
    pairs = [(deg, rec) for _, rec, deg, _ in corpus]
    lib = build_library(pairs[:1], pool)
    assert len(lib) == 1
    deg = pairs[0][0]
    expect = greedy_search(deg, canonical_subtasks(detect_degradations(deg)), pool, mode="live").trajectory
    assert lib.entries[0].trajectory == expect

    full = build_library(pairs, pool)
    assert len(full) == 3
    assert build_library(pairs, pool).dumps() == full.dumps()
    with pytest.raises(ArgumentError):
        build_library([], pool)


def test_library_format_errors():
    rng = np.random.default_rng(2)
    text = _lib(rng.normal(size=(2, EMBED_DIM))).dumps()
    header, *rows = text.splitlines()
    doc = json.loads(header)
    with pytest.raises(FormatError):
        RagLibrary.loads(json.dumps(dict(doc, version="99")) + "\n")
    with pytest.raises(FormatError):
        RagLibrary.loads("")
    bad = json.loads(rows[0])
    bad["label"] = [1, 0]
    with pytest.raises(FormatError):
        RagLibrary.loads(header + "\n" + json.dumps(bad) + "\n")
    with pytest.raises(FormatError):
        RagLibrary.load("/nonexistent/lib.jsonl")


def test_feature_stats_constant_column():
    embs = [Embedding(tuple([1.0] + [float(i)] * (EMBED_DIM - 1))) for i in range(4)]
    stats = FeatureStats.from_embeddings(embs)
    assert stats.std[0] == 1.0
