"""Reader for the selection-tuning dataset format.

One JSONL record per training example: ``{"group_id", "prompt_text",
"target"}`` with target ``"yes"`` or ``"no"``. Examples sharing a
group_id were emitted together for one (query, resource) pair and are
trained as one contrastive group.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class DatasetError(ValueError):
    """The dataset file is missing, empty, or malformed."""


@dataclass(frozen=True)
class Example:
    group_id: str
    prompt_text: str
    target: str  # "yes" | "no"


@dataclass(frozen=True)
class Group:
    group_id: str
    prompt_text: str
    targets: tuple[str, ...]


def read_examples(path: str | Path) -> list[Example]:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset not found: {path}")
    examples: list[Example] = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as error:
                raise DatasetError(f"line {line_number}: invalid JSON: {error}") from None
            try:
                example = Example(
                    group_id=str(record["group_id"]),
                    prompt_text=str(record["prompt_text"]),
                    target=str(record["target"]),
                )
            except KeyError as error:
                raise DatasetError(f"line {line_number}: missing field {error}") from None
            if example.target not in ("yes", "no"):
                raise DatasetError(
                    f"line {line_number}: target must be 'yes' or 'no', got {example.target!r}"
                )
            examples.append(example)
    if not examples:
        raise DatasetError(f"dataset is empty: {path}")
    return examples


def group_examples(examples: list[Example]) -> list[Group]:
    """Group by group_id, preserving first-seen order.

    Emitted datasets carry exactly two examples per group; the grouping
    itself does not depend on that.
    """
    order: list[str] = []
    prompts: dict[str, str] = {}
    targets: dict[str, list[str]] = {}
    for example in examples:
        if example.group_id not in prompts:
            order.append(example.group_id)
            prompts[example.group_id] = example.prompt_text
            targets[example.group_id] = []
        elif prompts[example.group_id] != example.prompt_text:
            raise DatasetError(
                f"group {example.group_id!r} has inconsistent prompt texts"
            )
        targets[example.group_id].append(example.target)
    return [
        Group(group_id=gid, prompt_text=prompts[gid], targets=tuple(targets[gid]))
        for gid in order
    ]


def load_groups(path: str | Path) -> list[Group]:
    return group_examples(read_examples(path))
