"""Core domain types: resources, queries, snippets, judgments, rankings.

All values are immutable after construction and safe to share across
threads. Registries and query logs are built once and then read-only.

Canonical on-disk form is JSONL, one record per line, UTF-8, with field
names matching the dataclass fields. ``to_record`` / ``*_from_record``
implement that mapping; ``None`` fields are omitted from records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping

from .errors import DuplicateId, EmptyField, UnknownResource


class QueryKind(str, Enum):
    AD_HOC = "adhoc"
    CONVERSATIONAL = "conversational"


class QueryOrigin(str, Enum):
    TEST = "test"
    LOGGED = "logged"
    GENERATED = "generated"


class JudgmentSource(str, Enum):
    SYNTHETIC = "synthetic"
    IMPORTED = "imported"


class SelectionMethod(str, Enum):
    RESLLM = "resllm"
    EMBEDDING = "embedding"
    ORACLE = "oracle"


@dataclass(frozen=True)
class Resource:
    """One federation member (a search engine behind an opaque API)."""

    id: str
    name: str
    url: str
    description: str | None = None
    discontinued: bool = False

    def to_record(self) -> dict:
        record = {"id": self.id, "name": self.name, "url": self.url}
        if self.description is not None:
            record["description"] = self.description
        record["discontinued"] = self.discontinued
        return record


def resource_from_record(record: Mapping) -> Resource:
    return Resource(
        id=str(record["id"]),
        name=str(record["name"]),
        url=str(record["url"]),
        description=record.get("description"),
        discontinued=bool(record.get("discontinued", False)),
    )


@dataclass(frozen=True)
class Query:
    """A user, logged, or generated query.

    Generated queries keep a pointer to the logged query they came from in
    ``source_id``.
    """

    id: str
    text: str
    kind: QueryKind = QueryKind.AD_HOC
    origin: QueryOrigin = QueryOrigin.TEST
    source_id: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise EmptyField("query", self.id, "text")
        if self.origin is QueryOrigin.GENERATED and not self.source_id:
            raise EmptyField("query", self.id, "source_id")

    def to_record(self) -> dict:
        record = {
            "id": self.id,
            "text": self.text,
            "kind": self.kind.value,
            "origin": self.origin.value,
        }
        if self.source_id is not None:
            record["source_id"] = self.source_id
        return record


def query_from_record(record: Mapping) -> Query:
    return Query(
        id=str(record["id"]),
        text=str(record["text"]),
        kind=QueryKind(record.get("kind", "adhoc")),
        origin=QueryOrigin(record.get("origin", "test")),
        source_id=record.get("source_id"),
    )


@dataclass(frozen=True)
class Snippet:
    """A (resource, query, rank) search-result snippet."""

    resource_id: str
    query_id: str
    rank: int
    title: str
    body: str

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"snippet rank must be >= 1, got {self.rank}")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.query_id, self.resource_id, self.rank)

    def to_record(self) -> dict:
        return {
            "resource_id": self.resource_id,
            "query_id": self.query_id,
            "rank": self.rank,
            "title": self.title,
            "body": self.body,
        }


def snippet_from_record(record: Mapping) -> Snippet:
    return Snippet(
        resource_id=str(record["resource_id"]),
        query_id=str(record["query_id"]),
        rank=int(record["rank"]),
        title=str(record.get("title", "")),
        body=str(record.get("body", "")),
    )


LEVEL_NAMES = {
    0: "non-relevant",
    1: "relevant",
    2: "highly relevant",
    3: "key",
    4: "navigational",
}


@dataclass(frozen=True)
class Judgment:
    """A 0-4 graded relevance assessment of a (query, snippet) pair.

    ``raw_scores`` keeps the judge's M/T/O components when the judgment was
    produced synthetically; ``parse_failed`` marks pairs where the judge's
    output could not be parsed and level 0 was recorded instead.
    """

    resource_id: str
    query_id: str
    snippet_rank: int
    level: int
    source: JudgmentSource = JudgmentSource.SYNTHETIC
    raw_scores: Mapping[str, int] | None = None
    parse_failed: bool = False

    def __post_init__(self):
        if not 0 <= self.level <= 4:
            raise ValueError(f"judgment level must be in [0, 4], got {self.level}")
        if self.raw_scores is not None:
            clamped = min(4, max(0, int(self.raw_scores["O"])))
            if self.level != clamped:
                raise ValueError(
                    f"level {self.level} inconsistent with raw O={self.raw_scores['O']}"
                )

    def to_record(self) -> dict:
        record = {
            "resource_id": self.resource_id,
            "query_id": self.query_id,
            "snippet_rank": self.snippet_rank,
            "level": self.level,
            "source": self.source.value,
        }
        if self.raw_scores is not None:
            record["raw_scores"] = dict(self.raw_scores)
        if self.parse_failed:
            record["parse_failed"] = True
        return record


def judgment_from_record(record: Mapping) -> Judgment:
    raw = record.get("raw_scores")
    return Judgment(
        resource_id=str(record["resource_id"]),
        query_id=str(record["query_id"]),
        snippet_rank=int(record["snippet_rank"]),
        level=int(record["level"]),
        source=JudgmentSource(record.get("source", "synthetic")),
        raw_scores={k: int(v) for k, v in raw.items()} if raw is not None else None,
        parse_failed=bool(record.get("parse_failed", False)),
    )


@dataclass(frozen=True)
class ResourceRanking:
    """Ordered (resource_id, score) list for one query.

    Entries are sorted by score descending with ties broken by ascending
    resource_id, so rankings are deterministic for equal score tables.
    """

    query_id: str
    entries: tuple[tuple[str, float], ...]
    method: SelectionMethod

    def __post_init__(self):
        seen: set[str] = set()
        for resource_id, _ in self.entries:
            if resource_id in seen:
                raise ValueError(f"duplicate resource in ranking: {resource_id!r}")
            seen.add(resource_id)
        keys = [(-score, resource_id) for resource_id, score in self.entries]
        if keys != sorted(keys):
            raise ValueError("ranking entries not sorted by (score desc, id asc)")

    @classmethod
    def from_scores(
        cls,
        query_id: str,
        scores: Mapping[str, float],
        method: SelectionMethod,
    ) -> "ResourceRanking":
        ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
        return cls(query_id=query_id, entries=tuple(ordered), method=method)

    def resource_ids(self) -> list[str]:
        return [resource_id for resource_id, _ in self.entries]

    def to_record(self) -> dict:
        return {
            "query_id": self.query_id,
            "method": self.method.value,
            "entries": [
                {"resource_id": resource_id, "score": score}
                for resource_id, score in self.entries
            ],
        }


def ranking_from_record(record: Mapping) -> ResourceRanking:
    return ResourceRanking(
        query_id=str(record["query_id"]),
        entries=tuple(
            (str(entry["resource_id"]), float(entry["score"]))
            for entry in record["entries"]
        ),
        method=SelectionMethod(record["method"]),
    )


class ResourceRegistry:
    """Validated, read-only id -> Resource map. Build with validate_registry."""

    def __init__(self, resources: Mapping[str, Resource]):
        self._resources = dict(sorted(resources.items()))

    def __len__(self) -> int:
        return len(self._resources)

    def __contains__(self, resource_id: str) -> bool:
        return resource_id in self._resources

    def __getitem__(self, resource_id: str) -> Resource:
        try:
            return self._resources[resource_id]
        except KeyError:
            raise UnknownResource(resource_id) from None

    def __iter__(self) -> Iterator[Resource]:
        return iter(self._resources.values())

    def get(self, resource_id: str) -> Resource | None:
        return self._resources.get(resource_id)

    def ids(self) -> list[str]:
        return list(self._resources)


def validate_registry(resources: Iterable[Resource]) -> ResourceRegistry:
    """Check Resource invariants and build a lookup registry.

    Raises DuplicateId / EmptyField naming the offending resource.
    """
    resources = list(resources)
    if not resources:
        raise ValueError("resource list must be non-empty")
    by_id: dict[str, Resource] = {}
    for resource in resources:
        if not resource.id:
            raise EmptyField("resource", resource.id, "id")
        if not resource.name.strip():
            raise EmptyField("resource", resource.id, "name")
        if not resource.url.strip():
            raise EmptyField("resource", resource.id, "url")
        if resource.id in by_id:
            raise DuplicateId(resource.id)
        by_id[resource.id] = resource
    return ResourceRegistry(by_id)


@dataclass(frozen=True)
class QueryLog:
    """Logged queries plus the top-m snippets each resource returned for them."""

    queries: tuple[Query, ...]
    groups: Mapping[tuple[str, str], tuple[Snippet, ...]] = field(default_factory=dict)
    max_per_group: int = 10

    @classmethod
    def build(
        cls,
        queries: Iterable[Query],
        snippets: Iterable[Snippet],
        max_per_group: int = 10,
    ) -> "QueryLog":
        logged = tuple(sorted(queries, key=lambda q: q.id))
        known = {q.id for q in logged}
        groups: dict[tuple[str, str], list[Snippet]] = {}
        for snippet in snippets:
            if snippet.query_id not in known:
                raise ValueError(
                    f"snippet refers to non-logged query {snippet.query_id!r}"
                )
            groups.setdefault((snippet.query_id, snippet.resource_id), []).append(snippet)
        frozen: dict[tuple[str, str], tuple[Snippet, ...]] = {}
        for key, group in groups.items():
            group.sort(key=lambda s: s.rank)
            frozen[key] = tuple(group[:max_per_group])
        return cls(queries=logged, groups=frozen, max_per_group=max_per_group)

    def snippets_for(self, query_id: str, resource_id: str) -> tuple[Snippet, ...]:
        return self.groups.get((query_id, resource_id), ())

    def resource_ids(self) -> list[str]:
        return sorted({resource_id for _, resource_id in self.groups})

    def all_snippets(self) -> list[Snippet]:
        out: list[Snippet] = []
        for key in sorted(self.groups):
            out.extend(self.groups[key])
        return out
