"""Ranking effectiveness measures over per-resource relevance gains.

Gains are the 0-100 resource relevance scores used linearly (no
exponential transform), which keeps nDCG and normalized precision on the
same scale. Ideal orderings are computed over every resource with a gain,
not just ranked ones; a zero ideal yields metric 0 so means stay total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import EmptyLabels, LengthMismatch, MissingQrels
from .model import Judgment, ResourceRanking

NDCG_CUTOFFS = (10, 20, 100)
NP_CUTOFFS = (1, 5)


@dataclass(frozen=True)
class ResourceQrels:
    """query_id -> resource_id -> gain in [0, 100]; absent resources gain 0."""

    gains: Mapping[str, Mapping[str, int]]

    def __post_init__(self):
        for query_id, table in self.gains.items():
            for resource_id, gain in table.items():
                if not 0 <= gain <= 100:
                    raise ValueError(
                        f"gain out of [0, 100] for ({query_id}, {resource_id}): {gain}"
                    )

    def __contains__(self, query_id: str) -> bool:
        return query_id in self.gains

    def gain(self, query_id: str, resource_id: str) -> int:
        return self.gains.get(query_id, {}).get(resource_id, 0)

    def query_gains(self, query_id: str) -> dict[str, int]:
        return dict(self.gains.get(query_id, {}))

    def to_records(self) -> list[dict]:
        records = []
        for query_id in sorted(self.gains):
            for resource_id in sorted(self.gains[query_id]):
                records.append(
                    {
                        "query_id": query_id,
                        "resource_id": resource_id,
                        "gain": self.gains[query_id][resource_id],
                    }
                )
        return records

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "ResourceQrels":
        gains: dict[str, dict[str, int]] = {}
        for record in records:
            gains.setdefault(str(record["query_id"]), {})[str(record["resource_id"])] = int(
                record["gain"]
            )
        return cls(gains=gains)


def _ranked_gains(ranking: ResourceRanking, qrels: ResourceQrels, k: int) -> list[int]:
    return [qrels.gain(ranking.query_id, rid) for rid in ranking.resource_ids()[:k]]


def _ideal_gains(qrels: ResourceQrels, query_id: str, k: int) -> list[int]:
    return sorted(qrels.query_gains(query_id).values(), reverse=True)[:k]


def _dcg(gains: Sequence[float]) -> float:
    return sum(gain / math.log2(i + 1) for i, gain in enumerate(gains, start=1))


def ndcg_at_k(ranking: ResourceRanking, qrels: ResourceQrels, k: int) -> float:
    """Discounted cumulative gain at k over the ideal ordering's value."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ideal = _dcg(_ideal_gains(qrels, ranking.query_id, k))
    if ideal == 0.0:
        return 0.0
    return _dcg(_ranked_gains(ranking, qrels, k)) / ideal


def np_at_k(ranking: ResourceRanking, qrels: ResourceQrels, k: int) -> float:
    """Sum of the top-k selected gains over the ideal top-k sum."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ideal = sum(_ideal_gains(qrels, ranking.query_id, k))
    if ideal == 0:
        return 0.0
    return sum(_ranked_gains(ranking, qrels, k)) / ideal


def binarize_judgments(judgments: Sequence[Judgment]) -> list[int]:
    """Navigational, key and highly-relevant collapse to 1; the rest to 0."""
    return [1 if judgment.level >= 2 else 0 for judgment in judgments]


def cohen_kappa(labels_a: Sequence[int], labels_b: Sequence[int]) -> float:
    """Chance-corrected agreement between two binary label sequences."""
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(
            f"label lists differ in length: {len(labels_a)} vs {len(labels_b)}"
        )
    if not labels_a:
        raise EmptyLabels("need at least one label pair")
    n = len(labels_a)
    observed = sum(1 for a, b in zip(labels_a, labels_b) if bool(a) == bool(b)) / n
    positive_a = sum(1 for a in labels_a if a) / n
    positive_b = sum(1 for b in labels_b if b) / n
    expected = positive_a * positive_b + (1 - positive_a) * (1 - positive_b)
    if expected == 1.0:
        # Both raters constant on the same class: agreement is total.
        return 1.0
    return (observed - expected) / (1.0 - expected)


@dataclass(frozen=True)
class MetricReport:
    """Per-query metric values plus their arithmetic means."""

    per_query: Mapping[str, Mapping[str, float]]
    means: Mapping[str, float]

    @property
    def metric_names(self) -> list[str]:
        return list(self.means)

    def to_json_dict(self) -> dict:
        return {
            "per_query": {
                query_id: dict(self.per_query[query_id]) for query_id in sorted(self.per_query)
            },
            "means": dict(self.means),
        }


def metric_names(
    ndcg_cutoffs: Sequence[int] = NDCG_CUTOFFS, np_cutoffs: Sequence[int] = NP_CUTOFFS
) -> list[str]:
    return [f"ndcg@{k}" for k in ndcg_cutoffs] + [f"np@{k}" for k in np_cutoffs]


def evaluate_run(
    rankings: Sequence[ResourceRanking],
    qrels: ResourceQrels,
    ndcg_cutoffs: Sequence[int] = NDCG_CUTOFFS,
    np_cutoffs: Sequence[int] = NP_CUTOFFS,
) -> MetricReport:
    """Compute every metric for every ranking and average across queries."""
    if not rankings:
        raise ValueError("no rankings to evaluate")
    per_query: dict[str, dict[str, float]] = {}
    for ranking in rankings:
        if ranking.query_id not in qrels:
            raise MissingQrels(ranking.query_id)
        row: dict[str, float] = {}
        for k in ndcg_cutoffs:
            row[f"ndcg@{k}"] = ndcg_at_k(ranking, qrels, k)
        for k in np_cutoffs:
            row[f"np@{k}"] = np_at_k(ranking, qrels, k)
        per_query[ranking.query_id] = row
    names = metric_names(ndcg_cutoffs, np_cutoffs)
    means = {
        name: sum(row[name] for row in per_query.values()) / len(per_query)
        for name in names
    }
    return MetricReport(per_query=per_query, means=means)
