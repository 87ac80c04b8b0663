"""Synthetic-label pipeline: judge logged snippets with an LLM, aggregate
to 0-100 resource scores, bucket into pseudo-labels, and emit yes/no
instruction pairs for fine-tuning.

The pipeline is total: judging outputs that cannot be parsed get one
regeneration retry, then level 0 with a parse-failure flag, so label
pollution stays auditable instead of aborting long runs.
"""

from __future__ import annotations

import json
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InsufficientNavigationalSnippets, OutOfRange, Unparseable
from .llm import LlmClient
from .model import (
    Judgment,
    JudgmentSource,
    Query,
    QueryKind,
    QueryLog,
    QueryOrigin,
    Resource,
    ResourceRegistry,
    Snippet,
)
from .prompting import (
    RepresentationConfig,
    build_judging_prompt,
    build_querygen_prompt,
    build_selection_prompt,
)

JUDGING_CUTOFF = 10

LABEL_HIGH_THRESHOLD = 50
LABEL_MARGINAL_THRESHOLD = 25


@dataclass(frozen=True)
class GradedWeights:
    """Per-level gain weights for graded precision.

    Zero for non-relevant, 1 for key and navigational, monotone in the
    relevance level.
    """

    non_relevant: float = 0.0
    relevant: float = 0.25
    highly_relevant: float = 0.5
    key: float = 1.0
    navigational: float = 1.0

    def __post_init__(self):
        ordered = (
            self.non_relevant,
            self.relevant,
            self.highly_relevant,
            self.key,
            self.navigational,
        )
        if self.non_relevant != 0.0 or self.key != 1.0 or self.navigational != 1.0:
            raise ValueError("weights must satisfy non=0 and key=nav=1")
        if any(a > b for a, b in zip(ordered, ordered[1:])):
            raise ValueError(f"weights must be monotone in level: {ordered}")

    def for_level(self, level: int) -> float:
        return (
            self.non_relevant,
            self.relevant,
            self.highly_relevant,
            self.key,
            self.navigational,
        )[level]


class PseudoLabel(str, Enum):
    HIGHLY_RELEVANT = "highly_relevant"
    MARGINALLY_RELEVANT = "marginally_relevant"
    NOT_RELEVANT = "not_relevant"


class Target(str, Enum):
    YES = "yes"
    NO = "no"


# Pseudo-label -> the pair of instruction targets emitted per resource.
EMISSION_TABLE: dict[PseudoLabel, tuple[Target, Target]] = {
    PseudoLabel.HIGHLY_RELEVANT: (Target.YES, Target.YES),
    PseudoLabel.MARGINALLY_RELEVANT: (Target.YES, Target.NO),
    PseudoLabel.NOT_RELEVANT: (Target.NO, Target.NO),
}


@dataclass(frozen=True)
class ResourceRelevanceScore:
    resource_id: str
    query_id: str
    score: int

    def to_record(self) -> dict:
        return {
            "resource_id": self.resource_id,
            "query_id": self.query_id,
            "score": self.score,
        }


@dataclass(frozen=True)
class TrainingExample:
    group_id: str
    prompt_text: str
    target: Target

    def to_record(self) -> dict:
        return {
            "group_id": self.group_id,
            "prompt_text": self.prompt_text,
            "target": self.target.value,
        }


def parse_judgment(raw: str) -> tuple[int, dict[str, int]]:
    """Extract the first JSON object with integer M/T/O keys from a judging
    completion. Returns (level, raw_scores) with level = O clamped to [0, 4].
    """
    decoder = json.JSONDecoder()
    position = raw.find("{")
    while position != -1:
        try:
            candidate, _ = decoder.raw_decode(raw, position)
        except ValueError:
            position = raw.find("{", position + 1)
            continue
        if (
            isinstance(candidate, dict)
            and all(
                key in candidate
                and isinstance(candidate[key], int)
                and not isinstance(candidate[key], bool)
                for key in ("M", "T", "O")
            )
        ):
            raw_scores = {key: int(candidate[key]) for key in ("M", "T", "O")}
            level = min(4, max(0, raw_scores["O"]))
            return level, raw_scores
        position = raw.find("{", position + 1)
    raise Unparseable(f"no M/T/O score object in: {raw[:120]!r}")


def graded_precision(
    judgments: Sequence[Judgment],
    cutoff: int = JUDGING_CUTOFF,
    weights: GradedWeights = GradedWeights(),
) -> float:
    """Sum of level weights over the top-``cutoff`` ranks, divided by
    ``cutoff``. Missing ranks contribute zero; the denominator never
    shrinks, so sparse result lists score low rather than being excused.
    """
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    ranks = [j.snippet_rank for j in judgments]
    if ranks != sorted(ranks):
        raise ValueError("judgments must be sorted by snippet rank")
    considered = judgments[: min(cutoff, len(judgments))]
    return sum(weights.for_level(j.level) for j in considered) / cutoff


def aggregate_resource_score(gp: float) -> int:
    """Map graded precision in [0, 1] to an integer 0-100, rounding .5 up."""
    if not -1e-9 <= gp <= 1.0 + 1e-9:
        raise OutOfRange(f"graded precision out of [0, 1]: {gp}")
    gp = min(1.0, max(0.0, gp))
    return int(math.floor(100.0 * gp + 0.5))


def pseudo_label(
    score: int,
    high_threshold: int = LABEL_HIGH_THRESHOLD,
    marginal_threshold: int = LABEL_MARGINAL_THRESHOLD,
) -> PseudoLabel:
    """Bucket a 0-100 resource score: >=50 highly, [25, 50) marginally,
    <25 not relevant. The three intervals partition [0, 100]."""
    if not 0 <= score <= 100:
        raise OutOfRange(f"resource score out of [0, 100]: {score}")
    if score >= high_threshold:
        return PseudoLabel.HIGHLY_RELEVANT
    if score >= marginal_threshold:
        return PseudoLabel.MARGINALLY_RELEVANT
    return PseudoLabel.NOT_RELEVANT


def emit_training_examples(
    label: PseudoLabel,
    resource: Resource,
    query: Query,
    config: RepresentationConfig = RepresentationConfig(),
    similar_snippets: Sequence[Snippet] = (),
) -> list[TrainingExample]:
    """Two instruction examples for one (resource, query): the selection
    prompt with the label's yes/no target pair."""
    prompt = build_selection_prompt(resource, query, similar_snippets, config)
    group_id = f"{query.id}::{resource.id}"
    return [
        TrainingExample(group_id=group_id, prompt_text=prompt.text, target=target)
        for target in EMISSION_TABLE[label]
    ]


@dataclass(frozen=True)
class SlatConfig:
    representation: RepresentationConfig = field(default_factory=RepresentationConfig)
    weights: GradedWeights = field(default_factory=GradedWeights)
    cutoff: int = JUDGING_CUTOFF
    high_threshold: int = LABEL_HIGH_THRESHOLD
    marginal_threshold: int = LABEL_MARGINAL_THRESHOLD
    output_dir: Path | None = None


@dataclass
class SlatResult:
    training_examples: list[TrainingExample]
    resource_scores: list[ResourceRelevanceScore]
    judgments: list[Judgment]
    skipped_pairs: list[tuple[str, str]]
    parse_failures: int

    @property
    def labels(self) -> dict[tuple[str, str], PseudoLabel]:
        out = {}
        for score in self.resource_scores:
            out[(score.query_id, score.resource_id)] = pseudo_label(score.score)
        return out


def _judge_snippet(client: LlmClient, query: Query, snippet: Snippet) -> Judgment:
    prompt = build_judging_prompt(query, snippet)
    text = client.generate(prompt).text
    try:
        level, raw_scores = parse_judgment(text)
    except Unparseable:
        text = client.generate(prompt).text  # one retry, then record the failure
        try:
            level, raw_scores = parse_judgment(text)
        except Unparseable:
            return Judgment(
                resource_id=snippet.resource_id,
                query_id=query.id,
                snippet_rank=snippet.rank,
                level=0,
                source=JudgmentSource.SYNTHETIC,
                parse_failed=True,
            )
    return Judgment(
        resource_id=snippet.resource_id,
        query_id=query.id,
        snippet_rank=snippet.rank,
        level=level,
        source=JudgmentSource.SYNTHETIC,
        raw_scores=raw_scores,
    )


def judge_query_log(
    query_log: QueryLog,
    registry: ResourceRegistry,
    client: LlmClient,
) -> list[Judgment]:
    """Judge every logged (query, resource, snippet) triple.

    Calls fan out concurrently; the returned list is sorted by
    (query_id, resource_id, rank) so downstream aggregation is independent
    of completion order.
    """
    tasks: list[tuple[Query, Snippet]] = []
    for query in query_log.queries:
        for resource_id in registry.ids():
            for snippet in query_log.snippets_for(query.id, resource_id):
                tasks.append((query, snippet))
    with ThreadPoolExecutor(max_workers=max(1, client.concurrency)) as pool:
        judged = list(pool.map(lambda qs: _judge_snippet(client, *qs), tasks))
    judged.sort(key=lambda j: (j.query_id, j.resource_id, j.snippet_rank))
    return judged


def aggregate_judgments(
    judgments: Iterable[Judgment],
    cutoff: int = JUDGING_CUTOFF,
    weights: GradedWeights = GradedWeights(),
) -> list[ResourceRelevanceScore]:
    """Graded precision per (query, resource), scaled to an integer 0-100."""
    groups: dict[tuple[str, str], list[Judgment]] = {}
    for judgment in judgments:
        groups.setdefault((judgment.query_id, judgment.resource_id), []).append(judgment)
    scores = []
    for (query_id, resource_id), group in sorted(groups.items()):
        group.sort(key=lambda j: j.snippet_rank)
        gp = graded_precision(group, cutoff=cutoff, weights=weights)
        scores.append(
            ResourceRelevanceScore(
                resource_id=resource_id,
                query_id=query_id,
                score=aggregate_resource_score(gp),
            )
        )
    return scores


def run_slat_pipeline(
    query_log: QueryLog,
    registry: ResourceRegistry,
    client: LlmClient,
    config: SlatConfig = SlatConfig(),
) -> SlatResult:
    """Full pipeline: judge, aggregate, pseudo-label, emit example pairs.

    Pairs with no logged snippets are skipped (not judged non-relevant)
    and reported in the result. With ``output_dir`` set, judgments,
    resource scores, and the training dataset are persisted as JSONL;
    reruns with the same scripted backend are byte-identical.
    """
    judgments = judge_query_log(query_log, registry, client)
    by_pair: dict[tuple[str, str], list[Judgment]] = {}
    for judgment in judgments:
        by_pair.setdefault((judgment.query_id, judgment.resource_id), []).append(judgment)

    examples: list[TrainingExample] = []
    scores: list[ResourceRelevanceScore] = []
    skipped: list[tuple[str, str]] = []
    for query in query_log.queries:
        for resource_id in registry.ids():
            pair = (query.id, resource_id)
            group = by_pair.get(pair)
            if not group:
                skipped.append(pair)
                continue
            gp = graded_precision(group, cutoff=config.cutoff, weights=config.weights)
            score = aggregate_resource_score(gp)
            label = pseudo_label(score, config.high_threshold, config.marginal_threshold)
            scores.append(
                ResourceRelevanceScore(resource_id=resource_id, query_id=query.id, score=score)
            )
            examples.extend(
                emit_training_examples(label, registry[resource_id], query, config.representation)
            )

    result = SlatResult(
        training_examples=examples,
        resource_scores=scores,
        judgments=judgments,
        skipped_pairs=skipped,
        parse_failures=sum(1 for j in judgments if j.parse_failed),
    )
    if config.output_dir is not None:
        persist_slat_result(result, config.output_dir)
    return result


def persist_slat_result(result: SlatResult, output_dir: Path) -> dict[str, object]:
    from . import ingest  # local import: ingest depends on model only

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    entries = {
        "judgments": ingest.persist_jsonl(
            (j.to_record() for j in result.judgments), output_dir / "judgments.jsonl"
        ),
        "resource_scores": ingest.persist_jsonl(
            (s.to_record() for s in result.resource_scores),
            output_dir / "resource_scores.jsonl",
        ),
        "slat_dataset": ingest.persist_jsonl(
            (e.to_record() for e in result.training_examples),
            output_dir / "slat_dataset.jsonl",
        ),
    }
    return entries


def generate_conversational_query(
    adhoc: Query,
    judged_snippets: Sequence[tuple[Snippet, Judgment]],
    client: LlmClient,
    rng: random.Random | None = None,
) -> Query:
    """Turn an ad-hoc query into a conversational one.

    Samples 3 of the query's navigational (level-4) snippets with the
    caller's RNG, prompts for a description of the information need, and
    wraps the generation as a new query pointing back at its source.
    """
    rng = rng or random.Random(0)
    navigational = sorted(
        (snippet for snippet, judgment in judged_snippets if judgment.level == 4),
        key=lambda s: (s.resource_id, s.rank),
    )
    if len(navigational) < 3:
        raise InsufficientNavigationalSnippets(
            f"query {adhoc.id!r} has {len(navigational)} navigational snippets, need 3"
        )
    chosen = rng.sample(navigational, 3)
    prompt = build_querygen_prompt(adhoc, chosen)
    generated = client.generate(prompt)
    return Query(
        id=f"{adhoc.id}-conv",
        text=generated.text.strip(),
        kind=QueryKind.CONVERSATIONAL,
        origin=QueryOrigin.GENERATED,
        source_id=adhoc.id,
    )
