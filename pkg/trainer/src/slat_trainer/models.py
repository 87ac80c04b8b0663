"""Tiny desk-scale backbones scoring a prompt as yes/no logits.

Both models map prompt text to two logits (yes, no). They stand in for
the large instruction-tuned backbones the protocol targets in
production; the training loop and loss are the same either way.
"""

from __future__ import annotations

import zlib

import torch
from torch import nn


class ModelError(ValueError):
    """Unknown model identifier or unloadable artifact."""


def _trigram_ids(text: str, vocab_size: int) -> list[int]:
    data = text.encode("utf-8", errors="replace")
    if len(data) < 3:
        data = data + b"\x00" * (3 - len(data))
    # crc32 is stable across processes and platforms, unlike hash().
    return [zlib.crc32(data[i:i + 3]) % vocab_size for i in range(len(data) - 2)]


class BagOfTrigramsScorer(nn.Module):
    """Hashed byte-trigram embedding bag + MLP head."""

    name = "bow-mlp"

    def __init__(self, vocab_size: int = 16384, embedding_dim: int = 64,
                 hidden_dim: int = 64, max_chars: int = 2048):
        super().__init__()
        self.vocab_size = vocab_size
        self.max_chars = max_chars
        self.embedding = nn.EmbeddingBag(vocab_size, embedding_dim, mode="mean")
        self.head = nn.Sequential(
            nn.Linear(embedding_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, 2),
        )

    def featurize(self, prompts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        flat: list[int] = []
        offsets: list[int] = []
        for prompt in prompts:
            offsets.append(len(flat))
            flat.extend(_trigram_ids(prompt[-self.max_chars:], self.vocab_size))
        return torch.tensor(flat, dtype=torch.long), torch.tensor(offsets, dtype=torch.long)

    def forward(self, prompts: list[str]) -> torch.Tensor:
        ids, offsets = self.featurize(prompts)
        pooled = self.embedding(ids, offsets)
        return self.head(pooled)


class ByteGruScorer(nn.Module):
    """Byte-level GRU over the trailing window of the prompt."""

    name = "byte-gru"

    def __init__(self, embedding_dim: int = 32, hidden_dim: int = 64, max_bytes: int = 256):
        super().__init__()
        self.max_bytes = max_bytes
        self.embedding = nn.Embedding(257, embedding_dim, padding_idx=256)
        self.gru = nn.GRU(embedding_dim, hidden_dim, batch_first=True)
        self.head = nn.Linear(hidden_dim, 2)

    def forward(self, prompts: list[str]) -> torch.Tensor:
        sequences = [
            list(prompt.encode("utf-8", errors="replace")[-self.max_bytes:]) or [0]
            for prompt in prompts
        ]
        width = max(len(s) for s in sequences)
        batch = torch.full((len(sequences), width), 256, dtype=torch.long)
        for row, sequence in enumerate(sequences):
            batch[row, : len(sequence)] = torch.tensor(sequence, dtype=torch.long)
        hidden = self.gru(self.embedding(batch))[1][-1]
        return self.head(hidden)


MODEL_REGISTRY = {
    BagOfTrigramsScorer.name: BagOfTrigramsScorer,
    ByteGruScorer.name: ByteGruScorer,
}


def build_model(identifier: str) -> nn.Module:
    if identifier not in MODEL_REGISTRY:
        known = ", ".join(sorted(MODEL_REGISTRY))
        raise ModelError(f"unknown model {identifier!r} (known: {known})")
    return MODEL_REGISTRY[identifier]()
