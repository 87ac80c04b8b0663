"""slat-trainer: desk-scale fine-tuning on yes/no instruction pairs.

Consumes the selection pipeline's ``slat_dataset.jsonl`` and trains a
tiny scorer with a within-group yes/no contrastive loss, writing adapter
weights and a per-step loss curve.
"""

from .data import DatasetError, Example, Group, load_groups, read_examples
from .models import MODEL_REGISTRY, ModelError, build_model
from .train import (
    TrainConfig,
    TrainResult,
    TrainerError,
    group_contrastive_loss,
    load_adapter,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "DatasetError",
    "Example",
    "Group",
    "load_groups",
    "read_examples",
    "MODEL_REGISTRY",
    "ModelError",
    "build_model",
    "TrainConfig",
    "TrainResult",
    "TrainerError",
    "group_contrastive_loss",
    "load_adapter",
    "train",
]
