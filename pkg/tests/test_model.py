import json
import string

import pytest
from hypothesis import given, strategies as st

from fedbroker.errors import DuplicateId, EmptyField, UnknownResource
from fedbroker.model import (
    Judgment,
    JudgmentSource,
    Query,
    QueryKind,
    QueryLog,
    QueryOrigin,
    Resource,
    ResourceRanking,
    SelectionMethod,
    Snippet,
    judgment_from_record,
    query_from_record,
    ranking_from_record,
    resource_from_record,
    snippet_from_record,
    validate_registry,
)

ids = st.text(alphabet=string.ascii_lowercase + string.digits, min_size=1, max_size=12)
texts = st.text(min_size=1, max_size=80).filter(lambda s: s.strip())


class TestRegistry:
    def test_single_valid_entry(self):
        registry = validate_registry(
            [Resource(id="e1", name="PubMed", url="https://pubmed.ncbi.nlm.nih.gov")]
        )
        assert len(registry) == 1
        assert registry["e1"].name == "PubMed"

    def test_duplicate_id(self):
        r = Resource(id="e1", name="A", url="https://a")
        with pytest.raises(DuplicateId) as excinfo:
            validate_registry([r, Resource(id="e1", name="B", url="https://b")])
        assert excinfo.value.resource_id == "e1"

    def test_full_production_scale(self):
        # A federation of 157 distinct engines loads without collisions.
        resources = [
            Resource(id=f"e{i}", name=f"Engine {i}", url=f"https://e{i}.example.com")
            for i in range(157)
        ]
        assert len(validate_registry(resources)) == 157

    def test_empty_name_rejected(self):
        with pytest.raises(EmptyField):
            validate_registry([Resource(id="e1", name="  ", url="https://a")])

    def test_empty_url_rejected(self):
        with pytest.raises(EmptyField):
            validate_registry([Resource(id="e1", name="A", url="")])

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            validate_registry([])

    def test_lookup_total_over_inserted_and_fails_for_absent(self):
        resources = [
            Resource(id=f"e{i}", name=f"N{i}", url=f"https://e{i}") for i in range(5)
        ]
        registry = validate_registry(resources)
        for resource in resources:
            assert registry[resource.id] is resource
        with pytest.raises(UnknownResource):
            registry["missing"]
        assert registry.get("missing") is None


class TestQueryInvariants:
    def test_blank_text_rejected(self):
        with pytest.raises(EmptyField):
            Query(id="q1", text="   ")

    def test_generated_requires_source(self):
        with pytest.raises(EmptyField):
            Query(id="g1", text="x", origin=QueryOrigin.GENERATED)
        q = Query(id="g1", text="x", origin=QueryOrigin.GENERATED, source_id="lq1")
        assert q.source_id == "lq1"


class TestSnippetInvariants:
    def test_rank_must_be_positive(self):
        with pytest.raises(ValueError):
            Snippet(resource_id="e1", query_id="q1", rank=0, title="t", body="b")


class TestJudgmentInvariants:
    def test_level_bounds(self):
        with pytest.raises(ValueError):
            Judgment(resource_id="e1", query_id="q1", snippet_rank=1, level=5)

    def test_level_must_match_clamped_o(self):
        with pytest.raises(ValueError):
            Judgment(
                resource_id="e1", query_id="q1", snippet_rank=1, level=2,
                raw_scores={"M": 4, "T": 4, "O": 7},
            )
        j = Judgment(
            resource_id="e1", query_id="q1", snippet_rank=1, level=4,
            raw_scores={"M": 4, "T": 4, "O": 7},
        )
        assert j.level == 4


class TestRanking:
    def test_from_scores_sorts_descending(self):
        ranking = ResourceRanking.from_scores(
            "q1", {"a": 0.5, "b": 0.9, "c": -0.2}, SelectionMethod.RESLLM
        )
        assert ranking.entries == (("b", 0.9), ("a", 0.5), ("c", -0.2))

    def test_ties_break_by_ascending_id(self):
        ranking = ResourceRanking.from_scores(
            "q1", {"c": 0.5, "a": 0.5, "b": 0.5}, SelectionMethod.RESLLM
        )
        assert ranking.resource_ids() == ["a", "b", "c"]

    def test_duplicate_resource_rejected(self):
        with pytest.raises(ValueError):
            ResourceRanking(
                query_id="q1",
                entries=(("a", 0.5), ("a", 0.4)),
                method=SelectionMethod.RESLLM,
            )

    def test_unsorted_entries_rejected(self):
        with pytest.raises(ValueError):
            ResourceRanking(
                query_id="q1",
                entries=(("a", 0.1), ("b", 0.9)),
                method=SelectionMethod.RESLLM,
            )


class TestQueryLog:
    def test_groups_sorted_and_truncated(self):
        queries = [Query(id="lq1", text="x", origin=QueryOrigin.LOGGED)]
        snippets = [
            Snippet(resource_id="e1", query_id="lq1", rank=r, title=f"t{r}", body="b")
            for r in (3, 1, 2)
        ]
        log = QueryLog.build(queries, snippets, max_per_group=2)
        group = log.snippets_for("lq1", "e1")
        assert [s.rank for s in group] == [1, 2]

    def test_snippet_for_unlogged_query_rejected(self):
        queries = [Query(id="lq1", text="x", origin=QueryOrigin.LOGGED)]
        stray = [Snippet(resource_id="e1", query_id="other", rank=1, title="t", body="b")]
        with pytest.raises(ValueError):
            QueryLog.build(queries, stray)

    def test_missing_group_is_empty(self):
        log = QueryLog.build([Query(id="lq1", text="x", origin=QueryOrigin.LOGGED)], [])
        assert log.snippets_for("lq1", "e1") == ()


# Round-trip: serialize then deserialize yields an equal value.

@given(
    id=ids, name=texts, url=texts,
    description=st.none() | texts,
    discontinued=st.booleans(),
)
def test_resource_roundtrip(id, name, url, description, discontinued):
    original = Resource(id=id, name=name, url=url, description=description,
                        discontinued=discontinued)
    assert resource_from_record(json.loads(json.dumps(original.to_record()))) == original


@given(
    id=ids, text=texts,
    kind=st.sampled_from(list(QueryKind)),
    origin=st.sampled_from([QueryOrigin.TEST, QueryOrigin.LOGGED]),
)
def test_query_roundtrip(id, text, kind, origin):
    original = Query(id=id, text=text, kind=kind, origin=origin)
    assert query_from_record(json.loads(json.dumps(original.to_record()))) == original


@given(resource_id=ids, query_id=ids, rank=st.integers(1, 100),
       title=st.text(max_size=40), body=st.text(max_size=200))
def test_snippet_roundtrip(resource_id, query_id, rank, title, body):
    original = Snippet(resource_id=resource_id, query_id=query_id, rank=rank,
                       title=title, body=body)
    assert snippet_from_record(json.loads(json.dumps(original.to_record()))) == original


@given(
    resource_id=ids, query_id=ids, rank=st.integers(1, 10),
    o=st.integers(-2, 9), m=st.integers(0, 4), t=st.integers(0, 4),
    source=st.sampled_from(list(JudgmentSource)),
    parse_failed=st.booleans(),
)
def test_judgment_roundtrip(resource_id, query_id, rank, o, m, t, source, parse_failed):
    original = Judgment(
        resource_id=resource_id, query_id=query_id, snippet_rank=rank,
        level=min(4, max(0, o)), source=source,
        raw_scores={"M": m, "T": t, "O": o},
        parse_failed=parse_failed,
    )
    assert judgment_from_record(json.loads(json.dumps(original.to_record()))) == original


@given(scores=st.dictionaries(ids, st.floats(-1, 1, allow_nan=False), min_size=1, max_size=8))
def test_ranking_roundtrip(scores):
    original = ResourceRanking.from_scores("q1", scores, SelectionMethod.EMBEDDING)
    assert ranking_from_record(json.loads(json.dumps(original.to_record()))) == original
