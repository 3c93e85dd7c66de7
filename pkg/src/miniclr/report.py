"""Stats reports over results CSVs, with figures rendered alongside.

The stats table groups accuracies per dataset by normalization flag and
projector kind (normalized rows first) and applies the same six-number
summary the evaluation module exposes, so the report is self-consistent
with the raw CSV by construction. Figures stay simple: the accuracy
distribution per group and the per-cell training-loss curves.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluate import summarize

STATS_HEADER = [
    "dataset",
    "normalized",
    "projector",
    "count",
    "minimum",
    "maximum",
    "average",
    "range",
    "midspread",
    "std_dev",
]


def read_results_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, "r", newline="") as fh:
        return list(csv.DictReader(fh))


def _grouped_accuracies(rows: list[dict[str, str]]) -> dict[tuple[str, str, str], list[float]]:
    groups: dict[tuple[str, str, str], list[float]] = {}
    for row in rows:
        if row["status"] != "ok" or not row["acc1"]:
            continue
        key = (row["dataset"], row["normalized"], row["projector"])
        groups.setdefault(key, []).append(float(row["acc1"]))
    return groups


def write_stats_csv(results_csv: str | Path, out_path: str | Path) -> list[list[str]]:
    """Summarize acc1 per (dataset, normalized, projector) group.

    Groups are ordered normalized-first within each dataset, mirroring the
    top/bottom split of the published summary tables.
    """
    rows = read_results_csv(results_csv)
    groups = _grouped_accuracies(rows)
    ordered = sorted(groups, key=lambda k: (k[0], k[1] != "true", k[2]))
    table = []
    for key in ordered:
        stats = summarize(groups[key])
        table.append(
            [
                key[0],
                key[1],
                key[2],
                str(len(groups[key])),
                repr(stats.minimum),
                repr(stats.maximum),
                repr(stats.average),
                repr(stats.range),
                repr(stats.midspread),
                repr(stats.std_dev),
            ]
        )
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STATS_HEADER)
        writer.writerows(table)
    return table


def write_figures(results_csv: str | Path, out_dir: str | Path) -> list[Path]:
    """Render the accuracy-distribution and loss-curve figures as PNGs."""
    out_dir = Path(out_dir)
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    rows = read_results_csv(results_csv)
    written: list[Path] = []

    groups = _grouped_accuracies(rows)
    if groups:
        ordered = sorted(groups)
        fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(ordered)), 4.0))
        ax.boxplot([groups[k] for k in ordered], tick_labels=["\n".join(k) for k in ordered])
        ax.set_ylabel("Acc@1")
        ax.set_title("Linear-probe accuracy by group")
        fig.tight_layout()
        path = fig_dir / "accuracy_distribution.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    curves = []
    for row in rows:
        if row["status"] != "ok":
            continue
        history = out_dir / "cells" / _history_dir(row) / "loss_history.csv"
        if history.exists():
            with open(history, "r", newline="") as fh:
                losses = [float(r["train_loss"]) for r in csv.DictReader(fh)]
            curves.append((row["projector"], losses))
    if curves:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        colors = {"ae": "tab:red", "mlp": "tab:blue"}
        seen = set()
        for projector, losses in curves:
            label = projector if projector not in seen else None
            seen.add(projector)
            ax.plot(range(1, len(losses) + 1), losses, color=colors.get(projector, "gray"),
                    alpha=0.6, label=label)
        ax.set_xlabel("epoch")
        ax.set_ylabel("contrastive train loss")
        ax.set_title("Training loss per cell")
        ax.legend()
        fig.tight_layout()
        path = fig_dir / "loss_curves.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def _history_dir(row: dict[str, str]) -> str:
    from .config import parse_cell
    from .runner import cell_hash

    return cell_hash(parse_cell(row))


def write_report(results_csv: str | Path, out_dir: str | Path) -> Path:
    """Stats CSV plus figures next to it; returns the stats path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats_path = out_dir / "stats.csv"
    write_stats_csv(results_csv, stats_path)
    write_figures(results_csv, out_dir)
    return stats_path
