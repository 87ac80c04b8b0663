"""Resource ranking: LLM yes/no logit scoring and the embedding baseline.

The LLM route scores each resource as p_yes - p_no over the rendered
selection prompt; the embedding route scores it as the mean cosine
similarity of the query against the resource's top-3 most similar logged
snippets. Both produce a ResourceRanking sorted score-descending with
ties broken by ascending resource id.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    AllFiltered,
    EmptyRegistry,
    MissingSnippets,
    ResourceWithoutSnippets,
    UnknownResource,
)
from .llm import LlmClient
from .model import (
    Query,
    QueryLog,
    Resource,
    ResourceRanking,
    ResourceRegistry,
    SelectionMethod,
    Snippet,
)
from .prompting import RepresentationConfig, build_selection_prompt

Encoder = Callable[[str], np.ndarray]

DEFAULT_EMBEDDING_DIM = 1024


@dataclass(frozen=True)
class SelectionRequest:
    query: Query
    method: SelectionMethod = SelectionMethod.RESLLM
    k: int | None = None
    representation: RepresentationConfig = field(default_factory=RepresentationConfig)
    filter_nonpositive: bool = False

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True, eq=False)
class IndexEntry:
    snippet: Snippet
    vector: np.ndarray


@dataclass(frozen=True, eq=False)
class EmbeddingIndex:
    """Unit-normalized snippet vectors grouped by resource."""

    dim: int
    entries: Mapping[str, tuple[IndexEntry, ...]]

    def __contains__(self, resource_id: str) -> bool:
        return resource_id in self.entries

    def vectors_for(self, resource_id: str) -> np.ndarray:
        if resource_id not in self.entries:
            raise UnknownResource(resource_id)
        return np.stack([entry.vector for entry in self.entries[resource_id]])


def hash_encoder(dim: int = DEFAULT_EMBEDDING_DIM, seed: int = 0) -> Encoder:
    """Deterministic random-projection bag-of-tokens encoder.

    Each token hashes (via sha256, stable across processes and platforms)
    to a seed for a Gaussian direction; a text encodes as the sum of its
    token directions. Useful for tests and offline demos; production
    deployments inject an adapter that calls a real embedding service.
    """

    def encode(text: str) -> np.ndarray:
        tokens = text.lower().split() or [""]
        vector = np.zeros(dim, dtype=np.float64)
        for token in tokens:
            digest = hashlib.sha256(f"{seed}:{token}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vector += rng.standard_normal(dim)
        return vector

    return encode


def _unit(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        raise ValueError("encoder produced a zero vector")
    return vector / norm


def build_embedding_index(
    query_log: QueryLog,
    encoder: Encoder,
    registry: ResourceRegistry | None = None,
) -> EmbeddingIndex:
    """Encode every logged snippet (title + body) and group by resource.

    With a registry, every registry resource must have at least one logged
    snippet; otherwise the index covers whatever resources the log holds.
    """
    resource_ids = registry.ids() if registry is not None else query_log.resource_ids()
    grouped: dict[str, list[IndexEntry]] = {rid: [] for rid in resource_ids}
    dim: int | None = None
    for snippet in query_log.all_snippets():
        if snippet.resource_id not in grouped:
            continue
        text = f"{snippet.title} {snippet.body}".strip()
        vector = _unit(encoder(text))
        if dim is None:
            dim = vector.shape[0]
        elif vector.shape[0] != dim:
            raise ValueError(
                f"encoder dimension changed: {vector.shape[0]} != {dim}"
            )
        grouped[snippet.resource_id].append(IndexEntry(snippet=snippet, vector=vector))
    for resource_id, entries in grouped.items():
        if not entries:
            raise ResourceWithoutSnippets(resource_id)
    return EmbeddingIndex(
        dim=dim if dim is not None else 0,
        entries={rid: tuple(entries) for rid, entries in sorted(grouped.items())},
    )


def _query_similarities(
    query: Query, resource_id: str, index: EmbeddingIndex, encoder: Encoder
) -> np.ndarray:
    query_vector = _unit(encoder(query.text))
    return index.vectors_for(resource_id) @ query_vector


def embedding_score(
    query: Query,
    resource_id: str,
    index: EmbeddingIndex,
    encoder: Encoder,
    top_n: int = 3,
) -> float:
    """Mean cosine similarity of the query's top-n snippets for the resource.

    Fewer than ``top_n`` stored vectors average over what is available.
    """
    similarities = _query_similarities(query, resource_id, index, encoder)
    top = np.sort(similarities)[::-1][: min(top_n, similarities.shape[0])]
    return float(np.mean(top))


def top_similar_snippets(
    query: Query,
    resource_id: str,
    index: EmbeddingIndex,
    encoder: Encoder,
    n: int = 3,
) -> list[Snippet]:
    """The resource's logged snippets most similar to the query, best first."""
    similarities = _query_similarities(query, resource_id, index, encoder)
    order = np.argsort(-similarities, kind="stable")[:n]
    entries = index.entries[resource_id]
    return [entries[i].snippet for i in order]


def score_resource(
    client: LlmClient,
    query: Query,
    resource: Resource,
    config: RepresentationConfig = RepresentationConfig(),
    similar_snippets: Sequence[Snippet] = (),
) -> float:
    """p_yes - p_no over the rendered selection prompt; always in [-1, 1]."""
    prompt = build_selection_prompt(resource, query, similar_snippets, config)
    choice = client.score_yes_no(prompt)
    return choice.p_yes - choice.p_no


def rank_resources(
    request: SelectionRequest,
    registry: ResourceRegistry,
    client: LlmClient | None = None,
    index: EmbeddingIndex | None = None,
    encoder: Encoder | None = None,
) -> ResourceRanking:
    """Score every registry resource for the request's query and rank them.

    LLM scoring fans out concurrently up to the client's limit; ranking
    assembly waits for all scores (no partial rankings). With
    ``filter_nonpositive`` only scores >= 0 survive; if none do,
    AllFiltered is raised and the caller decides the fallback.
    """
    if len(registry) == 0:
        raise EmptyRegistry("cannot rank over an empty registry")
    if request.k is not None and request.k > len(registry):
        raise ValueError(f"k={request.k} exceeds registry size {len(registry)}")

    if request.method is SelectionMethod.RESLLM:
        if client is None:
            raise ValueError("resllm ranking requires an LLM client")
        scores = _resllm_scores(request, registry, client, index, encoder)
    elif request.method is SelectionMethod.EMBEDDING:
        if index is None or encoder is None:
            raise ValueError("embedding ranking requires an index and an encoder")
        for resource_id in registry.ids():
            if resource_id not in index or not index.entries[resource_id]:
                raise ResourceWithoutSnippets(resource_id)
        scores = {
            resource_id: embedding_score(request.query, resource_id, index, encoder)
            for resource_id in registry.ids()
        }
    else:
        raise ValueError(f"selector cannot produce {request.method.value} rankings")

    if request.filter_nonpositive:
        scores = {rid: s for rid, s in scores.items() if s >= 0.0}
        if not scores:
            raise AllFiltered("every resource scored below zero")
    ranking = ResourceRanking.from_scores(request.query.id, scores, request.method)
    if request.k is not None:
        ranking = ResourceRanking(
            query_id=ranking.query_id,
            entries=ranking.entries[: request.k],
            method=ranking.method,
        )
    return ranking


def _resllm_scores(
    request: SelectionRequest,
    registry: ResourceRegistry,
    client: LlmClient,
    index: EmbeddingIndex | None,
    encoder: Encoder | None,
) -> dict[str, float]:
    config = request.representation
    similar: dict[str, list[Snippet]] = {}
    if config.use_similar_snippets:
        if index is None or encoder is None:
            raise MissingSnippets(
                "similar-snippet representation requires an embedding index and encoder"
            )
        for resource_id in registry.ids():
            similar[resource_id] = top_similar_snippets(
                request.query, resource_id, index, encoder, n=config.snippet_count
            )

    def score_one(resource: Resource) -> tuple[str, float]:
        value = score_resource(
            client, request.query, resource, config, similar.get(resource.id, ())
        )
        return resource.id, value

    resources = list(registry)
    with ThreadPoolExecutor(max_workers=max(1, client.concurrency)) as pool:
        return dict(pool.map(score_one, resources))


def oracle_ranking(query_id: str, gains: Mapping[str, float | int]) -> ResourceRanking:
    """Ranking straight from known per-resource gains (planted ground truth)."""
    return ResourceRanking.from_scores(
        query_id, {rid: float(g) for rid, g in gains.items()}, SelectionMethod.ORACLE
    )


def save_index(index: EmbeddingIndex, path) -> None:
    """Persist an index as .npz: the vectors plus the snippet keys needed to
    rejoin them with a loaded dataset."""
    resource_ids, query_ids, ranks, vectors = [], [], [], []
    for resource_id in sorted(index.entries):
        for entry in index.entries[resource_id]:
            resource_ids.append(resource_id)
            query_ids.append(entry.snippet.query_id)
            ranks.append(entry.snippet.rank)
            vectors.append(entry.vector)
    np.savez_compressed(
        path,
        dim=np.int64(index.dim),
        vectors=np.stack(vectors),
        resource_ids=np.array(resource_ids),
        query_ids=np.array(query_ids),
        ranks=np.array(ranks, dtype=np.int64),
    )


def load_index(path, snippets: Sequence[Snippet]) -> EmbeddingIndex:
    """Rebuild a saved index, rejoining vectors with their snippets."""
    data = np.load(path, allow_pickle=False)
    lookup = {(s.query_id, s.resource_id, s.rank): s for s in snippets}
    grouped: dict[str, list[IndexEntry]] = {}
    for i in range(data["vectors"].shape[0]):
        resource_id = str(data["resource_ids"][i])
        key = (str(data["query_ids"][i]), resource_id, int(data["ranks"][i]))
        if key not in lookup:
            raise UnknownResource(f"indexed snippet {key} not present in dataset")
        grouped.setdefault(resource_id, []).append(
            IndexEntry(snippet=lookup[key], vector=data["vectors"][i])
        )
    return EmbeddingIndex(
        dim=int(data["dim"]),
        entries={rid: tuple(entries) for rid, entries in sorted(grouped.items())},
    )
