"""Application configuration: ``fedbroker.toml`` plus environment overrides.

Environment variables ``FEDBROKER_DATA_DIR`` and ``FEDBROKER_LLM_ENDPOINT``
take precedence over file values so deployments can rewire without edits.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .llm import (
    DEFAULT_NO_VARIANTS,
    DEFAULT_YES_VARIANTS,
    ENDPOINT_ENV_VAR,
    HttpBackend,
    LlmClient,
    MockBackend,
)
from .prompting import RepresentationConfig
from .selector import DEFAULT_EMBEDDING_DIM, Encoder, hash_encoder
from .slat import (
    LABEL_HIGH_THRESHOLD,
    LABEL_MARGINAL_THRESHOLD,
    GradedWeights,
    SlatConfig,
)

DATA_DIR_ENV_VAR = "FEDBROKER_DATA_DIR"
DEFAULT_CONFIG_NAME = "fedbroker.toml"


@dataclass(frozen=True)
class LlmSettings:
    kind: str = "mock"
    model: str | None = None
    endpoint: str | None = None
    max_context: int = 32768
    concurrency: int = 4
    yes_variants: tuple[str, ...] = DEFAULT_YES_VARIANTS
    no_variants: tuple[str, ...] = DEFAULT_NO_VARIANTS
    script: str | None = None  # mock backend script file
    seed: int = 0


@dataclass(frozen=True)
class ServiceSettings:
    timeout_seconds: float = 120.0
    max_in_flight: int = 8


@dataclass(frozen=True)
class EmbeddingSettings:
    dim: int = DEFAULT_EMBEDDING_DIM
    seed: int = 0
    top_n: int = 3


@dataclass(frozen=True)
class AppConfig:
    data_dir: Path = Path("data")
    llm: LlmSettings = field(default_factory=LlmSettings)
    service: ServiceSettings = field(default_factory=ServiceSettings)
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    representation: RepresentationConfig = field(default_factory=RepresentationConfig)
    weights: GradedWeights = field(default_factory=GradedWeights)
    high_threshold: int = LABEL_HIGH_THRESHOLD
    marginal_threshold: int = LABEL_MARGINAL_THRESHOLD

    def build_client(self) -> LlmClient:
        if self.llm.kind == "mock":
            if self.llm.script:
                backend = MockBackend.from_script_file(
                    self.llm.script,
                    max_context=self.llm.max_context,
                    hash_fallback=True,
                    seed=self.llm.seed,
                )
            else:
                backend = MockBackend(
                    max_context=self.llm.max_context,
                    hash_fallback=True,
                    seed=self.llm.seed,
                )
        elif self.llm.kind == "http":
            backend = HttpBackend(
                endpoint=self.llm.endpoint,
                model=self.llm.model,
                max_context=self.llm.max_context,
            )
        else:
            raise ValueError(f"unknown llm backend kind: {self.llm.kind!r}")
        return LlmClient(
            backend=backend,
            yes_variants=self.llm.yes_variants,
            no_variants=self.llm.no_variants,
            concurrency=self.llm.concurrency,
        )

    def build_encoder(self) -> Encoder:
        return hash_encoder(dim=self.embedding.dim, seed=self.embedding.seed)

    def slat_config(self, output_dir: Path | None = None) -> SlatConfig:
        return SlatConfig(
            representation=self.representation,
            weights=self.weights,
            high_threshold=self.high_threshold,
            marginal_threshold=self.marginal_threshold,
            output_dir=output_dir,
        )


def load_config(path: Path | str | None = None) -> AppConfig:
    """Read ``fedbroker.toml`` if present, then apply env overrides."""
    data: dict = {}
    if path is not None:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    elif Path(DEFAULT_CONFIG_NAME).exists():
        with open(DEFAULT_CONFIG_NAME, "rb") as handle:
            data = tomllib.load(handle)

    llm_data = data.get("llm", {})
    llm = LlmSettings(
        kind=llm_data.get("kind", "mock"),
        model=llm_data.get("model"),
        endpoint=os.environ.get(ENDPOINT_ENV_VAR) or llm_data.get("endpoint"),
        max_context=int(llm_data.get("max_context", 32768)),
        concurrency=int(llm_data.get("concurrency", 4)),
        yes_variants=tuple(llm_data.get("yes_variants", DEFAULT_YES_VARIANTS)),
        no_variants=tuple(llm_data.get("no_variants", DEFAULT_NO_VARIANTS)),
        script=llm_data.get("script"),
        seed=int(llm_data.get("seed", 0)),
    )

    service_data = data.get("service", {})
    service = ServiceSettings(
        timeout_seconds=float(service_data.get("timeout_seconds", 120.0)),
        max_in_flight=int(service_data.get("max_in_flight", 8)),
    )

    embedding_data = data.get("embedding", {})
    embedding = EmbeddingSettings(
        dim=int(embedding_data.get("dim", DEFAULT_EMBEDDING_DIM)),
        seed=int(embedding_data.get("seed", 0)),
        top_n=int(embedding_data.get("top_n", 3)),
    )

    representation_data = data.get("representation", {})
    representation = RepresentationConfig(
        use_description=bool(representation_data.get("description", False)),
        use_similar_snippets=bool(representation_data.get("snippets", False)),
        snippet_count=int(representation_data.get("snippet_count", 3)),
    )

    weights_data = data.get("weights", {})
    weights = GradedWeights(
        non_relevant=float(weights_data.get("non_relevant", 0.0)),
        relevant=float(weights_data.get("relevant", 0.25)),
        highly_relevant=float(weights_data.get("highly_relevant", 0.5)),
        key=float(weights_data.get("key", 1.0)),
        navigational=float(weights_data.get("navigational", 1.0)),
    )

    thresholds_data = data.get("thresholds", {})
    data_dir = os.environ.get(DATA_DIR_ENV_VAR) or data.get("data", {}).get("dir", "data")

    return AppConfig(
        data_dir=Path(data_dir),
        llm=llm,
        service=service,
        embedding=embedding,
        representation=representation,
        weights=weights,
        high_threshold=int(thresholds_data.get("highly_relevant", LABEL_HIGH_THRESHOLD)),
        marginal_threshold=int(
            thresholds_data.get("marginally_relevant", LABEL_MARGINAL_THRESHOLD)
        ),
    )
