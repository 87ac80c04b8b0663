"""Contrastive fine-tuning over yes/no instruction groups.

Each group holds one prompt and the pair of targets emitted for it. The
loss contrasts the likelihood of generating "yes" against "no" for every
target in the group: cross-entropy over the two candidate continuations
at a configurable temperature, averaged within the group, plus an
optional hinge margin on the yes-no logit gap (disabled at margin 0).
Batching is by group so the per-group loss is well defined.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .data import DatasetError, Group, load_groups
from .models import ModelError, build_model

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class TrainerError(RuntimeError):
    """Training failed in a way the operator must act on."""


@dataclass(frozen=True)
class TrainConfig:
    dataset: Path
    model: str = "bow-mlp"
    epochs: int = 2
    batch_size: int = 20  # groups per step
    learning_rate: float = 1e-3
    temperature: float = 1.0
    margin: float = 0.0
    output_dir: Path = Path("train_out")
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")

    @classmethod
    def from_toml(cls, path: str | Path) -> "TrainConfig":
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
        train = data.get("train", {})
        loss = data.get("loss", {})
        if "dataset" not in train:
            raise ValueError(f"{path}: [train] must set 'dataset'")
        base = Path(path).parent
        return cls(
            dataset=base / train["dataset"],
            model=train.get("model", "bow-mlp"),
            epochs=int(train.get("epochs", 2)),
            batch_size=int(train.get("batch_size", 20)),
            learning_rate=float(train.get("learning_rate", 1e-3)),
            temperature=float(loss.get("temperature", 1.0)),
            margin=float(loss.get("margin", 0.0)),
            output_dir=base / train.get("output_dir", "train_out"),
            seed=int(train.get("seed", 0)),
        )


@dataclass
class TrainResult:
    step_losses: list[float]
    epoch_means: list[float]
    artifact_path: Path
    curve_path: Path
    groups: int


def group_contrastive_loss(
    logits: torch.Tensor,
    groups: list[Group],
    temperature: float = 1.0,
    margin: float = 0.0,
) -> torch.Tensor:
    """Mean over groups of the within-group yes/no contrast.

    ``logits`` has one row per group (yes, no). For each target in a
    group the loss is -log softmax(logits / temperature)[target]; the
    group's value is the mean over its targets.
    """
    log_probabilities = torch.log_softmax(logits / temperature, dim=-1)
    per_group = []
    for row, group in enumerate(groups):
        indices = torch.tensor(
            [0 if target == "yes" else 1 for target in group.targets], dtype=torch.long
        )
        value = -log_probabilities[row, indices].mean()
        if margin > 0.0:
            gap = (logits[row, 0] - logits[row, 1]) / temperature
            signs = torch.tensor(
                [1.0 if target == "yes" else -1.0 for target in group.targets]
            )
            value = value + torch.clamp(margin - signs * gap, min=0.0).mean()
        per_group.append(value)
    return torch.stack(per_group).mean()


def _batches(count: int, batch_size: int, generator: torch.Generator) -> list[list[int]]:
    order = torch.randperm(count, generator=generator).tolist()
    return [order[i:i + batch_size] for i in range(0, count, batch_size)]


def train(config: TrainConfig) -> TrainResult:
    """Run the fine-tune and write the artifact plus the loss curve.

    Reproducible under a fixed seed: same machine, same config, same
    curve. A CUDA out-of-memory failure is reported with the batch size
    that caused it.
    """
    groups = load_groups(config.dataset)
    torch.manual_seed(config.seed)
    model = build_model(config.model)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    step_losses: list[float] = []
    epoch_means: list[float] = []
    rows: list[tuple[int, int, float]] = []
    step = 0
    try:
        for epoch in range(config.epochs):
            generator = torch.Generator().manual_seed(config.seed * 100003 + epoch)
            epoch_losses: list[float] = []
            for batch_indices in _batches(len(groups), config.batch_size, generator):
                batch = [groups[i] for i in batch_indices]
                logits = model([group.prompt_text for group in batch])
                loss = group_contrastive_loss(
                    logits, batch, temperature=config.temperature, margin=config.margin
                )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                step += 1
                value = float(loss.detach())
                step_losses.append(value)
                epoch_losses.append(value)
                rows.append((step, epoch + 1, value))
            epoch_means.append(sum(epoch_losses) / len(epoch_losses))
    except torch.cuda.OutOfMemoryError as error:  # pragma: no cover - GPU only
        raise TrainerError(
            f"out of memory at batch_size={config.batch_size}; lower it and retry"
        ) from error

    config.output_dir.mkdir(parents=True, exist_ok=True)
    artifact_path = config.output_dir / "adapter.pt"
    torch.save(
        {
            "model": config.model,
            "state_dict": model.state_dict(),
            "temperature": config.temperature,
            "margin": config.margin,
            "seed": config.seed,
            "epochs": config.epochs,
        },
        artifact_path,
    )
    curve_path = config.output_dir / "loss_curve.csv"
    with open(curve_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "epoch", "loss"])
        for row in rows:
            writer.writerow([row[0], row[1], f"{row[2]:.10f}"])
    return TrainResult(
        step_losses=step_losses,
        epoch_means=epoch_means,
        artifact_path=artifact_path,
        curve_path=curve_path,
        groups=len(groups),
    )


def load_adapter(path: str | Path) -> nn.Module:
    """Restore a trained scorer from an adapter artifact."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as error:
        raise ModelError(f"cannot load adapter {path}: {error}") from None
    model = build_model(payload["model"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


__all__ = [
    "DatasetError",
    "ModelError",
    "TrainConfig",
    "TrainResult",
    "TrainerError",
    "group_contrastive_loss",
    "load_adapter",
    "train",
]
