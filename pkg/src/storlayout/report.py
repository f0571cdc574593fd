"""Batch report: a TSV table plus summary figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLUMNS = ("id", "status", "seconds", "entries", "guards", "precision", "recall", "message")
OUTCOMES = ("terminated", "timeouts", "errors", "nocode", "duplicates")


def write_table(batch, path: Path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(COLUMNS)
        for r in batch.results:
            m = r.metrics
            w.writerow(
                [
                    r.id,
                    r.status,
                    f"{r.seconds:.4f}",
                    m.get("entries", ""),
                    m.get("guards", ""),
                    _fmt(m.get("precision")),
                    _fmt(m.get("recall")),
                    r.message.replace("\t", " ").replace("\n", " "),
                ]
            )
    return path


def _fmt(x) -> str:
    return "" if x is None else f"{x:.4f}"


def plot_outcomes(summary: dict, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    counts = [summary.get(k, 0) for k in OUTCOMES]
    ax.bar(OUTCOMES, counts, color=["#4c72b0", "#dd8452", "#c44e52", "#8172b3", "#937860"])
    ax.set_ylabel("contracts")
    ax.set_title(f"{summary.get('total', sum(counts))} contracts")
    for i, c in enumerate(counts):
        ax.annotate(str(c), (i, c), ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_scores(batch, path: Path) -> Path | None:
    rows = [(r.id, r.metrics["precision"], r.metrics["recall"]) for r in batch.results if "precision" in r.metrics]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(max(4, 0.35 * len(rows) + 2), 3.2))
    xs = range(len(rows))
    ax.bar([x - 0.2 for x in xs], [p for _, p, _ in rows], width=0.4, label="precision")
    ax.bar([x + 0.2 for x in xs], [r for _, _, r in rows], width=0.4, label="recall")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([i for i, _, _ in rows], rotation=60, ha="right", fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_report(batch, out_dir, figures: bool = True) -> list[Path]:
    out_dir = Path(out_dir)
    written = [write_table(batch, out_dir / "results.tsv")]
    if figures:
        written.append(plot_outcomes(batch.summary(), out_dir / "outcomes.png"))
        scores = plot_scores(batch, out_dir / "scores.png")
        if scores is not None:
            written.append(scores)
    return written
