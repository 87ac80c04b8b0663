"""``slat-train``: fine-tune a tiny scorer from a train.toml config."""

from __future__ import annotations

import argparse
import sys

from .data import DatasetError
from .models import ModelError
from .train import TrainConfig, TrainerError, train


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="slat-train",
        description="Fine-tune a backbone scorer on yes/no instruction pairs.",
    )
    parser.add_argument("--config", required=True, help="Path to train.toml")
    args = parser.parse_args(argv)

    try:
        config = TrainConfig.from_toml(args.config)
        result = train(config)
    except (DatasetError, ModelError, TrainerError, ValueError, OSError) as error:
        print(f"error: {error}", file=sys.stderr)
        return 1

    for epoch, mean in enumerate(result.epoch_means, start=1):
        print(f"epoch {epoch}: mean loss {mean:.6f}")
    print(f"trained on {result.groups} groups; adapter at {result.artifact_path}, "
          f"curve at {result.curve_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
