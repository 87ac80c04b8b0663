import math

import numpy as np
import pytest

from fedbroker.errors import AllFiltered, EmptyRegistry, ResourceWithoutSnippets, UnknownResource
from fedbroker.llm import LlmClient, MockBackend
from fedbroker.model import (
    Query,
    QueryLog,
    QueryOrigin,
    Resource,
    SelectionMethod,
    Snippet,
    validate_registry,
)
from fedbroker.prompting import TemplateId
from fedbroker.selector import (
    EmbeddingIndex,
    IndexEntry,
    SelectionRequest,
    build_embedding_index,
    embedding_score,
    hash_encoder,
    load_index,
    oracle_ranking,
    rank_resources,
    save_index,
    score_resource,
    top_similar_snippets,
)


def make_registry(n):
    return validate_registry(
        [Resource(id=f"e{i}", name=f"Engine {i}", url=f"https://e{i}") for i in range(n)]
    )


def client_with_scores(query_id, logit_map):
    """Mock client where each resource's yes-logit table is scripted."""
    backend = MockBackend()
    for resource_id, logits in logit_map.items():
        backend.script_logits(TemplateId.SELECTION, resource_id, query_id, logits)
    return LlmClient(backend=backend)


def exact_probability_logits(p_yes, p_no):
    """Logit table whose softmax reproduces the given probabilities."""
    p_rest = 1.0 - p_yes - p_no
    logits = {}
    if p_yes > 0:
        logits["yes"] = math.log(p_yes)
    if p_no > 0:
        logits["no"] = math.log(p_no)
    if p_rest > 0:
        logits["other"] = math.log(p_rest)
    return logits


class TestScoreResource:
    def test_hand_scripted_probabilities(self, query):
        resource = Resource(id="e0", name="N", url="https://u")
        backend = MockBackend()
        backend.script_logits(
            TemplateId.SELECTION, "e0", query.id, exact_probability_logits(0.8, 0.1)
        )
        value = score_resource(LlmClient(backend=backend), query, resource)
        assert value == pytest.approx(0.7, abs=1e-12)

    def test_symmetric_logits_give_zero(self, query):
        resource = Resource(id="e0", name="N", url="https://u")
        backend = MockBackend()
        backend.script_logits(TemplateId.SELECTION, "e0", query.id, {"yes": 1.3, "no": 1.3})
        value = score_resource(LlmClient(backend=backend), query, resource)
        assert value == 0.0

    def test_all_mass_on_no_gives_minus_one(self, query):
        resource = Resource(id="e0", name="N", url="https://u")
        backend = MockBackend()
        backend.script_logits(TemplateId.SELECTION, "e0", query.id, {"no": 0.0})
        value = score_resource(LlmClient(backend=backend), query, resource)
        assert value == -1.0

    def test_always_within_unit_interval(self, query):
        rng = np.random.default_rng(11)
        resource = Resource(id="e0", name="N", url="https://u")
        for _ in range(100):
            logits = {t: float(rng.uniform(-5, 5)) for t in ("yes", "no", "a", "b")}
            backend = MockBackend()
            backend.script_logits(TemplateId.SELECTION, "e0", query.id, logits)
            value = score_resource(LlmClient(backend=backend), query, resource)
            assert -1.0 <= value <= 1.0


class TestRankResources:
    def test_sorted_and_truncated(self, query):
        registry = make_registry(3)
        client = client_with_scores(query.id, {
            "e0": exact_probability_logits(0.7, 0.2),   # 0.5
            "e1": exact_probability_logits(0.9, 0.0),   # 0.9
            "e2": exact_probability_logits(0.1, 0.3),   # -0.2
        })
        ranking = rank_resources(
            SelectionRequest(query=query, k=2), registry, client=client
        )
        assert ranking.resource_ids() == ["e1", "e0"]
        assert ranking.entries[0][1] == pytest.approx(0.9, abs=1e-9)
        assert ranking.entries[1][1] == pytest.approx(0.5, abs=1e-9)

    def test_equal_scores_order_by_id(self, query):
        registry = make_registry(4)
        client = client_with_scores(
            query.id, {f"e{i}": {"yes": 1.0, "no": 1.0} for i in range(4)}
        )
        ranking = rank_resources(SelectionRequest(query=query), registry, client=client)
        assert ranking.resource_ids() == ["e0", "e1", "e2", "e3"]

    def test_filter_keeps_zero_drops_negative(self, query):
        registry = make_registry(3)
        client = client_with_scores(query.id, {
            "e0": {"yes": 1.0, "no": 1.0},              # exactly 0: kept
            "e1": exact_probability_logits(0.6, 0.1),   # 0.5: kept
            "e2": exact_probability_logits(0.1, 0.6),   # -0.5: dropped
        })
        ranking = rank_resources(
            SelectionRequest(query=query, filter_nonpositive=True), registry, client=client
        )
        assert ranking.resource_ids() == ["e1", "e0"]

    def test_all_filtered_is_distinct_signal(self, query):
        registry = make_registry(2)
        client = client_with_scores(query.id, {
            "e0": exact_probability_logits(0.2, 0.3),
            "e1": exact_probability_logits(0.1, 0.6),
        })
        with pytest.raises(AllFiltered):
            rank_resources(
                SelectionRequest(query=query, filter_nonpositive=True),
                registry, client=client,
            )

    def test_empty_registry_rejected(self, query):
        with pytest.raises(ValueError):
            validate_registry([])
        registry = make_registry(1)
        with pytest.raises(EmptyRegistry):
            rank_resources(
                SelectionRequest(query=query),
                type(registry)({}),  # bypass validate_registry for the empty case
                client=LlmClient(backend=MockBackend()),
            )

    def test_k_larger_than_registry_rejected(self, query):
        registry = make_registry(2)
        with pytest.raises(ValueError):
            rank_resources(
                SelectionRequest(query=query, k=3), registry,
                client=LlmClient(backend=MockBackend()),
            )

    def test_matches_score_then_sort_oracle_over_random_tables(self, query):
        rng = np.random.default_rng(2024)
        registry = make_registry(6)
        backend = MockBackend()
        client = LlmClient(backend=backend, concurrency=2)
        for _ in range(1000):
            for i in range(6):
                logits = {t: float(rng.uniform(-4, 4)) for t in ("yes", "no", "x")}
                backend.script_logits(TemplateId.SELECTION, f"e{i}", query.id, logits)
            ranking = rank_resources(SelectionRequest(query=query), registry, client=client)
            oracle = sorted(
                (
                    (rid, score_resource(client, query, registry[rid]))
                    for rid in registry.ids()
                ),
                key=lambda item: (-item[1], item[0]),
            )
            assert ranking.entries == tuple(oracle)

    def test_truncation_is_prefix_consistent(self, query):
        rng = np.random.default_rng(5)
        registry = make_registry(5)
        logit_map = {
            f"e{i}": {t: float(rng.uniform(-4, 4)) for t in ("yes", "no")} for i in range(5)
        }
        client = client_with_scores(query.id, logit_map)
        full = rank_resources(SelectionRequest(query=query), registry, client=client)
        for k in range(1, 6):
            truncated = rank_resources(
                SelectionRequest(query=query, k=k), registry, client=client
            )
            assert truncated.entries == full.entries[:k]


def small_log(n_resources=2, n_snippets=5):
    queries = [Query(id="lq0", text="logged topic", origin=QueryOrigin.LOGGED)]
    snippets = [
        Snippet(
            resource_id=f"e{i}", query_id="lq0", rank=r,
            title=f"title {i} {r}", body=f"body text {i} {r}",
        )
        for i in range(n_resources)
        for r in range(1, n_snippets + 1)
    ]
    return QueryLog.build(queries, snippets, max_per_group=n_snippets)


class TestEmbeddingIndex:
    def test_counts_and_unit_norms(self):
        log = small_log(n_resources=2, n_snippets=5)
        index = build_embedding_index(log, hash_encoder(dim=8, seed=1))
        total = sum(len(entries) for entries in index.entries.values())
        assert total == 10
        assert index.dim == 8
        for entries in index.entries.values():
            for entry in entries:
                assert np.linalg.norm(entry.vector) == pytest.approx(1.0, abs=1e-6)

    def test_resource_without_snippets(self):
        log = small_log(n_resources=1)
        registry = make_registry(2)  # e1 has no snippets in the log
        with pytest.raises(ResourceWithoutSnippets):
            build_embedding_index(log, hash_encoder(dim=8), registry)

    def test_duplicate_texts_encode_identically(self):
        queries = [Query(id="lq0", text="x", origin=QueryOrigin.LOGGED)]
        snippets = [
            Snippet(resource_id="e0", query_id="lq0", rank=r, title="same", body="text")
            for r in (1, 2)
        ]
        log = QueryLog.build(queries, snippets)
        index = build_embedding_index(log, hash_encoder(dim=8))
        vectors = [entry.vector for entry in index.entries["e0"]]
        np.testing.assert_array_equal(vectors[0], vectors[1])

    def test_save_load_roundtrip(self, tmp_path):
        log = small_log()
        index = build_embedding_index(log, hash_encoder(dim=8, seed=3))
        path = tmp_path / "index.npz"
        save_index(index, path)
        loaded = load_index(path, log.all_snippets())
        assert loaded.dim == index.dim
        assert set(loaded.entries) == set(index.entries)
        for rid in index.entries:
            np.testing.assert_allclose(
                np.stack([e.vector for e in loaded.entries[rid]]),
                np.stack([e.vector for e in index.entries[rid]]),
            )


def planted_index(similarities_by_resource):
    """2-d index where each snippet's cosine against query (1, 0) is planted."""
    entries = {}
    for resource_id, sims in similarities_by_resource.items():
        planted = []
        for rank, s in enumerate(sims, start=1):
            vector = np.array([s, math.sqrt(max(0.0, 1.0 - s * s))])
            snippet = Snippet(resource_id=resource_id, query_id="lq0", rank=rank,
                              title="t", body="b")
            planted.append(IndexEntry(snippet=snippet, vector=vector))
        entries[resource_id] = tuple(planted)
    return EmbeddingIndex(dim=2, entries=entries)


def unit_x_encoder(text):
    return np.array([1.0, 0.0])


class TestEmbeddingScore:
    def test_identical_vectors_score_one(self, query):
        index = planted_index({"e0": [1.0, 1.0, 1.0]})
        assert embedding_score(query, "e0", index, unit_x_encoder) == pytest.approx(1.0)

    def test_top_three_mean(self, query):
        index = planted_index({"e0": [0.9, 0.5, 0.1, -0.3]})
        value = embedding_score(query, "e0", index, unit_x_encoder, top_n=3)
        assert value == pytest.approx((0.9 + 0.5 + 0.1) / 3, abs=1e-12)

    def test_fewer_than_top_n_averages_available(self, query):
        index = planted_index({"e0": [0.4, 0.2]})
        value = embedding_score(query, "e0", index, unit_x_encoder, top_n=3)
        assert value == pytest.approx(0.3, abs=1e-12)

    def test_unknown_resource(self, query):
        index = planted_index({"e0": [0.5]})
        with pytest.raises(UnknownResource):
            embedding_score(query, "missing", index, unit_x_encoder)

    def test_matches_sort_slice_mean_oracle(self, query):
        rng = np.random.default_rng(99)
        for _ in range(300):
            count = int(rng.integers(1, 7))
            sims = [float(s) for s in rng.uniform(-1, 1, size=count)]
            index = planted_index({"e0": sims})
            value = embedding_score(query, "e0", index, unit_x_encoder, top_n=3)
            oracle = float(np.mean(sorted(sims, reverse=True)[: min(3, count)]))
            assert value == pytest.approx(oracle, abs=1e-9)

    def test_ordering_invariant_under_positive_query_scaling(self):
        rng = np.random.default_rng(17)
        log = small_log(n_resources=4, n_snippets=4)
        base = hash_encoder(dim=16, seed=2)
        index = build_embedding_index(log, base)
        query = Query(id="q9", text="body text 2 3")
        for _ in range(20):
            c = float(rng.uniform(0.01, 100.0))
            scaled = lambda text, c=c: c * base(text)
            original = [
                embedding_score(query, rid, index, base) for rid in sorted(index.entries)
            ]
            rescaled = [
                embedding_score(query, rid, index, scaled) for rid in sorted(index.entries)
            ]
            assert np.argsort(original).tolist() == np.argsort(rescaled).tolist()


class TestEmbeddingRanking:
    def test_rank_via_embedding_method(self, query):
        registry = make_registry(2)
        log = small_log(n_resources=2, n_snippets=3)
        encoder = hash_encoder(dim=16, seed=4)
        index = build_embedding_index(log, encoder, registry)
        ranking = rank_resources(
            SelectionRequest(query=query, method=SelectionMethod.EMBEDDING),
            registry, index=index, encoder=encoder,
        )
        assert ranking.method is SelectionMethod.EMBEDDING
        assert len(ranking.entries) == 2
        expected = {
            rid: embedding_score(query, rid, index, encoder) for rid in registry.ids()
        }
        for rid, score in ranking.entries:
            assert score == pytest.approx(expected[rid], abs=1e-12)

    def test_missing_index_rejected(self, query):
        registry = make_registry(2)
        with pytest.raises(ValueError):
            rank_resources(
                SelectionRequest(query=query, method=SelectionMethod.EMBEDDING), registry
            )


class TestSimilarSnippetSelection:
    def test_top_snippets_sorted_by_similarity(self, query):
        index = planted_index({"e0": [0.2, 0.9, 0.5, 0.7]})
        top = top_similar_snippets(query, "e0", index, unit_x_encoder, n=3)
        assert [s.rank for s in top] == [2, 4, 3]


class TestOracleRanking:
    def test_orders_by_gain(self):
        ranking = oracle_ranking("q1", {"a": 10, "b": 100, "c": 50})
        assert ranking.resource_ids() == ["b", "c", "a"]
        assert ranking.method is SelectionMethod.ORACLE
