"""Evaluation report rendering: aligned table, CSV, and figure files."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import MetricReport


def format_table(report: MetricReport) -> str:
    """Aligned plain-text table: one row per query plus a mean row."""
    names = report.metric_names
    query_ids = sorted(report.per_query)
    id_width = max([len("query_id"), len("mean")] + [len(q) for q in query_ids])
    header = "query_id".ljust(id_width) + "".join(f"  {name:>10}" for name in names)
    lines = [header, "-" * len(header)]
    for query_id in query_ids:
        row = report.per_query[query_id]
        lines.append(
            query_id.ljust(id_width) + "".join(f"  {row[name]:>10.4f}" for name in names)
        )
    lines.append("-" * len(header))
    lines.append("mean".ljust(id_width) + "".join(f"  {report.means[name]:>10.4f}" for name in names))
    return "\n".join(lines)


def write_csv(report: MetricReport, path: Path | str) -> Path:
    """Per-query metric values plus a final mean row, for plot scripts."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = report.metric_names
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["query_id"] + names)
        for query_id in sorted(report.per_query):
            row = report.per_query[query_id]
            writer.writerow([query_id] + [f"{row[name]:.6f}" for name in names])
        writer.writerow(["mean"] + [f"{report.means[name]:.6f}" for name in names])
    return path


def render_figures(report: MetricReport, out_dir: Path | str, dpi: int = 150) -> list[Path]:
    """Render the report as PNG files: mean bars and per-query bars."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = report.metric_names
    written: list[Path] = []

    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(names)), 3.2))
    values = [report.means[name] for name in names]
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("mean value")
    ax.set_title("Mean effectiveness across queries")
    for i, value in enumerate(values):
        ax.text(i, value + 0.02, f"{value:.3f}", ha="center", fontsize=8)
    fig.tight_layout()
    means_path = out_dir / "mean_metrics.png"
    fig.savefig(means_path, dpi=dpi)
    plt.close(fig)
    written.append(means_path)

    query_ids = sorted(report.per_query)
    fig, axes = plt.subplots(
        len(names), 1, figsize=(max(5.0, 0.35 * len(query_ids) + 2), 2.2 * len(names)),
        sharex=True,
    )
    if len(names) == 1:
        axes = [axes]
    for ax, name in zip(axes, names):
        ax.bar(range(len(query_ids)), [report.per_query[q][name] for q in query_ids],
               color="#6aa868")
        ax.axhline(report.means[name], color="#a84848", linewidth=1.0, linestyle="--")
        ax.set_ylim(0.0, 1.05)
        ax.set_ylabel(name, fontsize=8)
    axes[-1].set_xticks(range(len(query_ids)))
    axes[-1].set_xticklabels(query_ids, rotation=90, fontsize=7)
    axes[0].set_title("Per-query effectiveness (dashed line: mean)")
    fig.tight_layout()
    per_query_path = out_dir / "per_query_metrics.png"
    fig.savefig(per_query_path, dpi=dpi)
    plt.close(fig)
    written.append(per_query_path)

    return written


def write_report_bundle(report: MetricReport, out_dir: Path | str) -> dict[str, Path]:
    """JSON + text table + CSV + figures in one directory."""
    import json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    json_path.write_text(json.dumps(report.to_json_dict(), indent=2) + "\n", encoding="utf-8")
    text_path = out_dir / "report.txt"
    text_path.write_text(format_table(report) + "\n", encoding="utf-8")
    csv_path = write_csv(report, out_dir / "per_query.csv")
    figures = render_figures(report, out_dir)
    bundle = {"json": json_path, "table": text_path, "csv": csv_path}
    for figure_path in figures:
        bundle[figure_path.stem] = figure_path
    return bundle
