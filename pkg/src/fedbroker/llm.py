"""Backend-agnostic language-model inference.

Two primitives cover everything the broker needs:

* first-token probabilities for a candidate token list, under the
  backend's full-vocabulary softmax (selection scoring), and
* greedy temperature-0 completion (judging, query generation).

``MockBackend`` scripts both primitives from a deterministic table keyed
on (template, resource_id, query_id[, snippet_rank]) so end-to-end runs
are reproducible byte for byte. ``HttpBackend`` speaks a small JSON
protocol to any inference server; one retry on transport failure, then
``BackendUnavailable``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import httpx

from .errors import BackendUnavailable, ContextOverflow
from .prompting import RenderedPrompt, TemplateId

ENDPOINT_ENV_VAR = "FEDBROKER_LLM_ENDPOINT"

# Tokenizers split case and leading-space variants into distinct tokens;
# the aggregate probability of the answer word must sum over them.
DEFAULT_YES_VARIANTS = ("yes", "Yes", " yes", " Yes")
DEFAULT_NO_VARIANTS = ("no", "No", " no", " No")

_PROB_EPS = 1e-9


@dataclass(frozen=True)
class TokenChoiceScore:
    """First-token probability mass on the yes set and the no set.

    The two masses need not sum to 1: probabilities come from a softmax
    over the whole vocabulary, so mass may sit on other tokens.
    """

    p_yes: float
    p_no: float

    def __post_init__(self):
        if not (0.0 - _PROB_EPS <= self.p_yes <= 1.0 + _PROB_EPS):
            raise ValueError(f"p_yes out of [0, 1]: {self.p_yes}")
        if not (0.0 - _PROB_EPS <= self.p_no <= 1.0 + _PROB_EPS):
            raise ValueError(f"p_no out of [0, 1]: {self.p_no}")
        if self.p_yes + self.p_no > 1.0 + _PROB_EPS:
            raise ValueError(f"p_yes + p_no exceeds 1: {self.p_yes + self.p_no}")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    finished: bool

    def __post_init__(self):
        if not self.text and self.finished:
            raise ValueError("empty text is only valid for truncated generations")


class Backend(Protocol):
    """Minimal inference surface the client builds on."""

    max_context: int

    def score(self, prompt: RenderedPrompt, candidates: Sequence[str]) -> dict[str, float]:
        ...

    def complete(self, prompt: RenderedPrompt, max_tokens: int) -> GenerationResult:
        ...


def softmax_probabilities(logits: Mapping[str, float]) -> dict[str, float]:
    """Softmax over a full token vocabulary given as token -> logit."""
    if not logits:
        raise ValueError("empty logit table")
    peak = max(logits.values())
    weights = {token: math.exp(value - peak) for token, value in logits.items()}
    total = sum(weights.values())
    return {token: weight / total for token, weight in weights.items()}


def _script_key(
    template: TemplateId | str,
    resource_id: str | None,
    query_id: str | None,
    snippet_rank: int | None = None,
) -> tuple:
    template_value = template.value if isinstance(template, TemplateId) else template
    return (template_value, resource_id, query_id, snippet_rank)


class MockBackend:
    """Deterministic scripted backend for tests and offline runs.

    ``logits`` maps script keys to a full-vocabulary logit table used for
    scoring; ``completions`` maps script keys to the text a greedy decode
    would produce. Lookup tries the snippet-specific key first, then the
    (template, resource, query) key. ``hash_fallback`` synthesizes stable
    pseudo-random logits for unscripted keys, handy for demos.
    """

    def __init__(
        self,
        logits: Mapping[tuple, Mapping[str, float]] | None = None,
        completions: Mapping[tuple, str] | None = None,
        max_context: int = 32768,
        fallback_logits: Mapping[str, float] | None = None,
        hash_fallback: bool = False,
        seed: int = 0,
    ):
        self.max_context = max_context
        self._logits = dict(logits or {})
        self._completions = dict(completions or {})
        self._fallback_logits = dict(fallback_logits) if fallback_logits else None
        self._hash_fallback = hash_fallback
        self._seed = seed
        self._lock = threading.Lock()

    def script_logits(
        self,
        template: TemplateId | str,
        resource_id: str | None,
        query_id: str | None,
        logits: Mapping[str, float],
        snippet_rank: int | None = None,
    ) -> None:
        with self._lock:
            self._logits[_script_key(template, resource_id, query_id, snippet_rank)] = dict(logits)

    def script_completion(
        self,
        template: TemplateId | str,
        resource_id: str | None,
        query_id: str | None,
        text: str,
        snippet_rank: int | None = None,
    ) -> None:
        with self._lock:
            self._completions[_script_key(template, resource_id, query_id, snippet_rank)] = text

    def _check_window(self, prompt_text: str) -> None:
        if len(prompt_text) > self.max_context:
            raise ContextOverflow(
                f"prompt of {len(prompt_text)} chars exceeds mock window {self.max_context}"
            )

    def _lookup(self, table: dict, prompt: RenderedPrompt):
        specific = _script_key(
            prompt.template_id, prompt.resource_id, prompt.query_id, prompt.snippet_rank
        )
        if specific in table:
            return table[specific]
        general = _script_key(prompt.template_id, prompt.resource_id, prompt.query_id)
        return table.get(general)

    def _hashed_logits(self, prompt: RenderedPrompt) -> dict[str, float]:
        key = f"{self._seed}|{prompt.template_id.value}|{prompt.resource_id}|{prompt.query_id}"
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        yes = int.from_bytes(digest[:4], "little") / 0xFFFFFFFF
        no = int.from_bytes(digest[4:8], "little") / 0xFFFFFFFF
        return {"yes": 4.0 * yes - 2.0, "no": 4.0 * no - 2.0, "the": 0.0, "a": 0.0}

    def probabilities_for_prompt(self, prompt: RenderedPrompt) -> dict[str, float]:
        """Full-vocabulary softmax for the prompt's scripted logit table."""
        self._check_window(prompt.text)
        with self._lock:
            logits = self._lookup(self._logits, prompt)
        if logits is None and self._fallback_logits is not None:
            logits = self._fallback_logits
        if logits is None and self._hash_fallback:
            logits = self._hashed_logits(prompt)
        if logits is None:
            raise LookupError(
                f"no scripted logits for {prompt.template_id.value} "
                f"resource={prompt.resource_id!r} query={prompt.query_id!r}"
            )
        return softmax_probabilities(logits)

    def score(self, prompt: RenderedPrompt, candidates: Sequence[str]) -> dict[str, float]:
        probabilities = self.probabilities_for_prompt(prompt)
        return {token: probabilities.get(token, 0.0) for token in candidates}

    def complete(self, prompt: RenderedPrompt, max_tokens: int) -> GenerationResult:
        self._check_window(prompt.text)
        with self._lock:
            scripted = self._lookup(self._completions, prompt)
        if scripted is None:
            raise LookupError(
                f"no scripted completion for {prompt.template_id.value} "
                f"resource={prompt.resource_id!r} query={prompt.query_id!r} "
                f"rank={prompt.snippet_rank!r}"
            )
        tokens = scripted.split(" ")
        if len(tokens) <= max_tokens:
            return GenerationResult(text=scripted, finished=True)
        return GenerationResult(text=" ".join(tokens[:max_tokens]), finished=False)

    @classmethod
    def from_script_file(cls, path: str | os.PathLike, **kwargs) -> "MockBackend":
        """Load a script: a JSON list of entries with template/resource_id/
        query_id and either a ``logits`` table or a ``completion`` string."""
        with open(path, encoding="utf-8") as handle:
            entries = json.load(handle)
        backend = cls(**kwargs)
        for entry in entries:
            key_args = (
                entry["template"],
                entry.get("resource_id"),
                entry.get("query_id"),
            )
            rank = entry.get("snippet_rank")
            if "logits" in entry:
                backend.script_logits(*key_args, entry["logits"], snippet_rank=rank)
            if "completion" in entry:
                backend.script_completion(*key_args, entry["completion"], snippet_rank=rank)
        return backend


class HttpBackend:
    """Adapter for an HTTP inference server.

    Protocol: ``POST {endpoint}/score`` with ``{"prompt", "candidates"}``
    returns ``{"logprobs": {token: logprob}}`` over the full-vocabulary
    softmax; ``POST {endpoint}/generate`` with ``{"prompt", "max_tokens"}``
    returns ``{"text", "finished"}``. Other server dialects get their own
    adapter class; the client never sees dialect details.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        model: str | None = None,
        max_context: int = 8192,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV_VAR, "")
        if not endpoint:
            raise ValueError(f"no endpoint configured (set {ENDPOINT_ENV_VAR})")
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.max_context = max_context
        self._http = httpx.Client(timeout=timeout, transport=transport)

    def _post(self, path: str, payload: dict) -> dict:
        if self.model is not None:
            payload = {"model": self.model, **payload}
        last_error: Exception | None = None
        for _ in range(2):  # one retry, then fail loudly
            try:
                response = self._http.post(self.endpoint + path, json=payload)
            except httpx.HTTPError as error:
                last_error = error
                continue
            if response.status_code == 413:
                raise ContextOverflow(f"backend rejected prompt: {response.text[:200]}")
            if response.status_code >= 400:
                last_error = RuntimeError(f"HTTP {response.status_code}: {response.text[:200]}")
                continue
            return response.json()
        raise BackendUnavailable(f"backend at {self.endpoint} unreachable: {last_error}")

    def _check_window(self, prompt_text: str) -> None:
        if len(prompt_text) > self.max_context:
            raise ContextOverflow(
                f"prompt of {len(prompt_text)} chars exceeds context window {self.max_context}"
            )

    def score(self, prompt: RenderedPrompt, candidates: Sequence[str]) -> dict[str, float]:
        self._check_window(prompt.text)
        data = self._post("/score", {"prompt": prompt.text, "candidates": list(candidates)})
        logprobs = data.get("logprobs", {})
        return {
            token: math.exp(logprobs[token]) if token in logprobs else 0.0
            for token in candidates
        }

    def complete(self, prompt: RenderedPrompt, max_tokens: int) -> GenerationResult:
        self._check_window(prompt.text)
        data = self._post("/generate", {"prompt": prompt.text, "max_tokens": max_tokens})
        return GenerationResult(text=data["text"], finished=bool(data.get("finished", True)))


@dataclass
class LlmClient:
    """Shareable handle bundling a backend with the yes/no variant sets.

    ``concurrency`` bounds the in-flight fan-out the selector and the
    judging pipeline are allowed to use against this backend.
    """

    backend: Backend
    yes_variants: tuple[str, ...] = DEFAULT_YES_VARIANTS
    no_variants: tuple[str, ...] = DEFAULT_NO_VARIANTS
    concurrency: int = 4
    max_generation_tokens: int = 64

    def score_yes_no(self, prompt: RenderedPrompt) -> TokenChoiceScore:
        """First-generated-token probability mass for yes vs no."""
        if prompt.template_id is not TemplateId.SELECTION:
            raise ValueError(
                f"score_yes_no expects a selection prompt, got {prompt.template_id.value}"
            )
        candidates = list(self.yes_variants) + list(self.no_variants)
        probabilities = self.backend.score(prompt, candidates)
        p_yes = sum(probabilities.get(token, 0.0) for token in self.yes_variants)
        p_no = sum(probabilities.get(token, 0.0) for token in self.no_variants)
        return TokenChoiceScore(p_yes=p_yes, p_no=p_no)

    def generate(self, prompt: RenderedPrompt, max_tokens: int | None = None) -> GenerationResult:
        """Greedy continuation of the prompt, at most ``max_tokens`` tokens."""
        if max_tokens is None:
            max_tokens = self.max_generation_tokens
        if max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
        return self.backend.complete(prompt, max_tokens)
