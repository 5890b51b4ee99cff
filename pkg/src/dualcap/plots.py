"""Figure rendering for training logs and evaluation reports.

Uses the Agg backend so figures render to files on headless machines.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import ValidationError


def read_loss_log(log_path: str | Path) -> tuple[list[int], list[float]]:
    """Parse a JSONL training log into (epochs, losses)."""
    log_path = Path(log_path)
    epochs: list[int] = []
    losses: list[float] = []
    for lineno, line in enumerate(log_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            epochs.append(int(entry["epoch"]))
            losses.append(float(entry["mean_loss"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{log_path.name}:{lineno}: bad log line ({exc})") from exc
    if not epochs:
        raise ValidationError(f"{log_path.name}: no log entries to plot")
    return epochs, losses


def render_loss_curve(log_path: str | Path, out_path: str | Path) -> Path:
    """Render the per-epoch training loss to a PNG; returns the figure path."""
    epochs, losses = read_loss_log(log_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(epochs, losses, color="tab:blue", linewidth=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean token cross-entropy")
    ax.set_title("training loss")
    ax.grid(True, alpha=0.3)
    if losses and min(losses) > 0:
        ax.set_yscale("log")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_metrics_chart(report: dict, out_path: str | Path) -> Path:
    """Render headline evaluation scores as a bar chart; CIDEr is shown on
    its native ten-point scale divided by ten so all bars share one axis."""
    labels = ["BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-L", "METEOR", "CIDEr/10"]
    keys = ["bleu_1", "bleu_2", "bleu_3", "bleu_4", "rouge_l", "meteor", "cider"]
    values = []
    for key in keys:
        if key not in report:
            raise ValidationError(f"report is missing {key!r}")
        value = float(report[key])
        values.append(value / 10.0 if key == "cider" else value)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(labels, values, color="tab:blue")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("caption metrics")
    for i, v in enumerate(values):
        ax.text(i, v + 0.01, f"{v:.3f}", ha="center", fontsize=8)
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
