"""Embedding, indexing, and exact top-k retrieval."""

from __future__ import annotations

import math
import random

import pytest

from conftest import make_library, make_spec
from sgcr.errors import (
    DimensionMismatch,
    EmptyText,
    IndexLibraryMismatch,
    QueryDimensionMismatch,
)
from sgcr.retrieval import (
    DEFAULT_MOCK_DIMENSION,
    EmbeddingVector,
    MockEmbeddingProvider,
    ScoredSpec,
    VectorIndex,
    build_index,
    cosine_similarity,
    embed_text,
    load_index,
    retrieve,
    save_index,
    trigram_bucket,
)


def test_trigram_bucket_is_deterministic_and_in_range():
    for gram in ("aaa", "abc", "zzz", "0x!"):
        bucket = trigram_bucket(gram, 64)
        assert bucket == trigram_bucket(gram, 64)
        assert 0 <= bucket < 64
    assert trigram_bucket("aaa", 1) == 0


def test_mock_embedding_repeated_trigram_counts():
    provider = MockEmbeddingProvider(dimension=64)
    raw = provider.embed("aaaa")
    bucket = trigram_bucket("aaa", 64)
    assert raw[bucket] == 2.0
    assert sum(raw) == 2.0
    unit = embed_text(provider, "aaaa")
    assert unit.values[bucket] == pytest.approx(1.0)


def test_mock_embedding_short_text_uses_a_single_gram():
    provider = MockEmbeddingProvider(dimension=16)
    raw = provider.embed("ab")
    assert raw[trigram_bucket("ab", 16)] == 1.0
    assert sum(raw) == 1.0


def test_mock_embedding_lowercases_and_logs():
    provider = MockEmbeddingProvider(dimension=32)
    assert provider.embed("ABCdef") == provider.embed("abcdef")
    assert provider.call_log == ["ABCdef", "abcdef"]


def test_mock_provider_rejects_bad_dimension():
    with pytest.raises(ValueError):
        MockEmbeddingProvider(dimension=0)


def test_embed_text_rejects_empty_and_normalizes():
    provider = MockEmbeddingProvider(dimension=8)
    with pytest.raises(EmptyText):
        embed_text(provider, "")
    vector = embed_text(provider, "select username from accounts")
    norm = math.sqrt(sum(value * value for value in vector.values))
    assert norm == pytest.approx(1.0)


def test_cosine_similarity_examples():
    half = 1.0 / math.sqrt(2.0)
    u = EmbeddingVector((1.0, 0.0, 0.0))
    v = EmbeddingVector((half, half, 0.0))
    assert cosine_similarity(u, v) == pytest.approx(0.7071, abs=1e-4)
    assert cosine_similarity(u, u) == 1.0
    assert cosine_similarity(u, EmbeddingVector((0.0, 1.0, 0.0))) == 0.0
    assert cosine_similarity(u, EmbeddingVector((-1.0, 0.0, 0.0))) == -1.0


def test_cosine_similarity_clamps_and_checks_dimension():
    # Not unit-norm on purpose: the raw dot product exceeds 1.
    assert cosine_similarity(EmbeddingVector((2.0,)), EmbeddingVector((1.0,))) == 1.0
    assert cosine_similarity(EmbeddingVector((-2.0,)), EmbeddingVector((1.0,))) == -1.0
    with pytest.raises(DimensionMismatch):
        cosine_similarity(EmbeddingVector((1.0,)), EmbeddingVector((1.0, 0.0)))


def _index_from_vectors(pairs):
    entries = tuple((spec_id, EmbeddingVector(tuple(values))) for spec_id, values in pairs)
    return VectorIndex(entries=entries, dimension=len(pairs[0][1]), provider_id="mock")


def test_retrieve_orders_by_score_then_id():
    index = _index_from_vectors(
        [
            ("r.low", (0.0, 1.0)),
            ("r.b", (1.0, 0.0)),
            ("r.a", (1.0, 0.0)),
        ]
    )
    query = EmbeddingVector((1.0, 0.0))
    result = retrieve(index, query, k=5, threshold=-1.0)
    assert result.spec_ids() == ("r.a", "r.b", "r.low")
    assert result.scored[0].score == result.scored[1].score == 1.0


def test_retrieve_threshold_is_inclusive_and_k_truncates():
    half = 1.0 / math.sqrt(2.0)
    index = _index_from_vectors(
        [
            ("r.exact", (half, half)),
            ("r.off", (0.0, 1.0)),
            ("r.on", (1.0, 0.0)),
        ]
    )
    query = EmbeddingVector((1.0, 0.0))
    kept = retrieve(index, query, k=5, threshold=cosine_similarity(query, index.entries[0][1]))
    assert kept.spec_ids() == ("r.on", "r.exact")
    top_one = retrieve(index, query, k=1, threshold=-1.0)
    assert top_one.spec_ids() == ("r.on",)
    assert retrieve(index, query, k=0, threshold=-1.0).spec_ids() == ()
    assert len(retrieve(index, query, k=-3, threshold=-1.0)) == 0


def test_retrieve_rejects_query_dimension_mismatch():
    index = _index_from_vectors([("r.one", (1.0, 0.0))])
    with pytest.raises(QueryDimensionMismatch):
        retrieve(index, EmbeddingVector((1.0, 0.0, 0.0)))


def test_build_index_preserves_library_order_and_embeds_title_plus_body():
    library = make_library(
        make_spec("sec.z-rule", body="validate every input"),
        make_spec("arch.a-rule", body="keep modules small"),
    )
    provider = MockEmbeddingProvider(dimension=32)
    index = build_index(library, provider)
    assert [spec_id for spec_id, _ in index.entries] == [spec.id for spec in library.specs]
    assert provider.call_log == [spec.title + spec.body for spec in library.specs]
    assert index.dimension == 32
    assert index.provider_id == "mock"


def test_build_index_rejects_empty_library():
    from sgcr.specs import SpecLibrary

    with pytest.raises(ValueError):
        build_index(SpecLibrary(specs=()), MockEmbeddingProvider())


def test_save_load_round_trip(tmp_path):
    library = make_library(
        make_spec("r.one", body="first body"),
        make_spec("r.two", body="second body"),
    )
    index = build_index(library, MockEmbeddingProvider(dimension=16))
    path = tmp_path / "index.json"
    save_index(index, path)
    loaded = load_index(path, library)
    assert loaded == index


def test_load_index_rejects_library_mismatch(tmp_path):
    library = make_library(make_spec("r.one"), make_spec("r.two"))
    index = build_index(library, MockEmbeddingProvider(dimension=16))
    path = tmp_path / "index.json"
    save_index(index, path)
    smaller = make_library(make_spec("r.one"))
    with pytest.raises(IndexLibraryMismatch) as excinfo:
        load_index(path, smaller)
    assert "extra: ['r.two']" in str(excinfo.value)


def test_retrieve_matches_brute_force_on_small_random_cases():
    rng = random.Random(7)
    words = ["query", "filter", "stream", "token", "buffer", "cache", "select", "index"]
    provider = MockEmbeddingProvider(dimension=24)
    for _ in range(50):
        size = rng.randint(1, 12)
        pairs = []
        for i in range(size):
            text = " ".join(rng.choices(words, k=rng.randint(1, 5)))
            pairs.append((f"r.{i:02d}", embed_text(provider, text).values))
        index = _index_from_vectors(pairs)
        query = embed_text(provider, " ".join(rng.choices(words, k=3)))
        k = rng.randint(0, size + 2)
        threshold = rng.uniform(-0.2, 0.9)

        oracle = sorted(
            (
                ScoredSpec(spec_id=spec_id, score=cosine_similarity(query, vector))
                for spec_id, vector in index.entries
            ),
            key=lambda item: (-item.score, item.spec_id),
        )
        oracle = [item for item in oracle if item.score >= threshold][: max(k, 0)]
        assert retrieve(index, query, k=k, threshold=threshold).scored == tuple(oracle)
