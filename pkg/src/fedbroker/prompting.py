"""Deterministic rendering of the three inference prompts.

Templates live as text assets under ``fedbroker/templates`` so prompt
experiments do not require code changes. Placeholder syntax is ``{name}``;
optional whole segments are wrapped in ``{{if flag}}...{{endif}}`` and are
included or dropped as a unit, never interleaved, so a leaner
representation's prompt is always a segment-deletion of a richer one.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources

from .errors import EmptySnippet, MissingDescription, MissingSnippets, WrongSnippetCount
from .model import Query, Resource, Snippet

SNIPPET_BODY_LIMIT = 512

_SEGMENT_RE = re.compile(r"\{\{if (\w+)\}\}(.*?)\{\{endif\}\}", re.DOTALL)

# Placeholders a template may use; anything else in braces is literal text
# (the judging template contains a JSON example with braces).
_PLACEHOLDERS = (
    "name",
    "url",
    "description",
    "query",
    "similar_sampled_snippets",
    "snippet",
    "snippets",
)


class TemplateId(str, Enum):
    SELECTION = "selection"
    JUDGING = "judging"
    QUERYGEN = "querygen"


@dataclass(frozen=True)
class RepresentationConfig:
    """Which resource representation parts go into the selection prompt.

    Name+URL is the base representation and always present; description and
    similar snippets are optional additions. ``snippet_count`` bounds how
    many similar snippets are rendered.
    """

    use_name_url: bool = True
    use_description: bool = False
    use_similar_snippets: bool = False
    snippet_count: int = 3

    def __post_init__(self):
        if not self.use_name_url:
            raise ValueError("name+url is the base representation and cannot be disabled")
        if self.use_similar_snippets and self.snippet_count < 1:
            raise ValueError("snippet_count must be >= 1 when similar snippets are used")


@dataclass(frozen=True)
class RenderedPrompt:
    """A fully substituted prompt plus the bindings that produced it.

    ``resource_id`` / ``query_id`` / ``snippet_rank`` identify the subject of
    the prompt where applicable; the mock backend keys its script on them.
    """

    text: str
    template_id: TemplateId
    variable_bindings: dict[str, str] = field(default_factory=dict)
    resource_id: str | None = None
    query_id: str | None = None
    snippet_rank: int | None = None


@lru_cache(maxsize=None)
def _load_template(template_id: TemplateId) -> str:
    path = resources.files("fedbroker").joinpath(f"templates/{template_id.value}.tmpl")
    return path.read_text(encoding="utf-8")


def _render(template: str, flags: dict[str, bool], bindings: dict[str, str]) -> str:
    def keep(match: re.Match) -> str:
        return match.group(2) if flags.get(match.group(1), False) else ""

    text = _SEGMENT_RE.sub(keep, template)
    for key, value in bindings.items():
        text = text.replace("{" + key + "}", value)
    for name in _PLACEHOLDERS:
        if "{" + name + "}" in text:
            raise RuntimeError(f"unsubstituted placeholder {{{name}}} in rendered prompt")
    return text


def truncate_at_whitespace(text: str, limit: int = SNIPPET_BODY_LIMIT) -> str:
    """Cut text to at most ``limit`` chars, backing up to a whitespace boundary."""
    if len(text) <= limit:
        return text
    cut = text[:limit]
    head, sep, _ = cut.rpartition(" ")
    if sep:
        return head.rstrip()
    return cut


def _selection_snippet_lines(snippets: list[Snippet]) -> str:
    lines = []
    for i, snippet in enumerate(snippets, start=1):
        body = truncate_at_whitespace(snippet.body)
        lines.append(f"Snippet {i}: {snippet.title} — {body}")
    return "\n".join(lines)


def _querygen_snippet_blocks(snippets: list[Snippet]) -> str:
    blocks = []
    for i, snippet in enumerate(snippets, start=1):
        body = truncate_at_whitespace(snippet.body)
        blocks.append(f"Snippet {i}:\nSnippet Title: {snippet.title}\nSnippet Info:\n{body}")
    return "\n\n".join(blocks)


def build_selection_prompt(
    resource: Resource,
    query: Query,
    similar_snippets: list[Snippet] | tuple[Snippet, ...] = (),
    config: RepresentationConfig = RepresentationConfig(),
) -> RenderedPrompt:
    """Render the resource-selection prompt for one (resource, query) pair."""
    if config.use_description and not (resource.description or "").strip():
        raise MissingDescription(
            f"resource {resource.id!r} has no description but the representation needs one"
        )
    if config.use_similar_snippets and not similar_snippets:
        raise MissingSnippets(
            f"representation needs similar snippets for resource {resource.id!r}"
        )

    bindings = {"name": resource.name, "url": resource.url, "query": query.text}
    if config.use_description:
        bindings["description"] = resource.description or ""
    if config.use_similar_snippets:
        chosen = list(similar_snippets)[: config.snippet_count]
        bindings["similar_sampled_snippets"] = _selection_snippet_lines(chosen)

    flags = {
        "description": config.use_description,
        "snippets": config.use_similar_snippets,
    }
    text = _render(_load_template(TemplateId.SELECTION), flags, bindings)
    return RenderedPrompt(
        text=text,
        template_id=TemplateId.SELECTION,
        variable_bindings=bindings,
        resource_id=resource.id,
        query_id=query.id,
    )


def build_judging_prompt(query: Query, snippet: Snippet) -> RenderedPrompt:
    """Render the 0-4 relevance judging prompt for one (query, snippet) pair."""
    if not snippet.body.strip():
        raise EmptySnippet(
            f"snippet {snippet.key} has an empty body and cannot be judged"
        )
    content = snippet.body if not snippet.title.strip() else f"{snippet.title}\n{snippet.body}"
    bindings = {"query": query.text, "snippet": content}
    text = _render(_load_template(TemplateId.JUDGING), {}, bindings)
    return RenderedPrompt(
        text=text,
        template_id=TemplateId.JUDGING,
        variable_bindings=bindings,
        resource_id=snippet.resource_id,
        query_id=query.id,
        snippet_rank=snippet.rank,
    )


def build_querygen_prompt(
    adhoc: Query,
    nav_snippets: list[Snippet] | tuple[Snippet, ...],
) -> RenderedPrompt:
    """Render the conversational-query generation prompt (3 snippets exactly)."""
    if len(nav_snippets) != 3:
        raise WrongSnippetCount(
            f"query generation needs exactly 3 snippets, got {len(nav_snippets)}"
        )
    bindings = {
        "query": adhoc.text,
        "snippets": _querygen_snippet_blocks(list(nav_snippets)),
    }
    text = _render(_load_template(TemplateId.QUERYGEN), {}, bindings)
    return RenderedPrompt(
        text=text,
        template_id=TemplateId.QUERYGEN,
        variable_bindings=bindings,
        query_id=adhoc.id,
    )
