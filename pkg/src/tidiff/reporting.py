"""Figure and table emission for run directories.

Every report artifact is deterministic: CSV tables carry no timestamps and
figures are rendered with the Agg backend so re-running on the same inputs
reproduces identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .utils import file_sha256


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def save_image_grid(
    images: Sequence[np.ndarray],
    path: str | Path,
    ncols: int,
    row_labels: Sequence[str] | None = None,
    col_labels: Sequence[str] | None = None,
    title: str | None = None,
) -> Path:
    """Tile (C, H, W) images into a labeled grid figure."""
    n = len(images)
    ncols = max(1, ncols)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(1.6 * ncols, 1.7 * nrows), squeeze=False)
    for k in range(nrows * ncols):
        ax = axes[k // ncols][k % ncols]
        ax.set_xticks([])
        ax.set_yticks([])
        if k >= n:
            ax.axis("off")
            continue
        img = np.asarray(images[k])
        if img.ndim == 3:
            img = img[0] if img.shape[0] == 1 else img.transpose(1, 2, 0)
        ax.imshow(img, cmap="gray", vmin=0.0, vmax=1.0)
        if col_labels and k < ncols:
            ax.set_title(col_labels[k], fontsize=8)
        if row_labels and k % ncols == 0:
            ax.set_ylabel(row_labels[k // ncols], fontsize=8)
    if title:
        fig.suptitle(title, fontsize=10)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_metric_curve(
    path: str | Path,
    x: Sequence[float],
    series: dict[str, Sequence[float]],
    xlabel: str,
    ylabel: str,
    title: str | None = None,
) -> Path:
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    for label, ys in series.items():
        ax.plot(x, ys, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=10)
    if len(series) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def auc_summary_rows(results: dict[str, list[float]]) -> list[list]:
    """Mix-name -> per-repeat AUCs into mean +/- std table rows."""
    rows = []
    for name, values in results.items():
        arr = np.asarray(values, dtype=np.float64)
        real, synth = name.split("+") if "+" in name else (name, "0")
        rows.append(
            [real, synth, f"{arr.mean():.3f}", f"{arr.std(ddof=1) if len(arr) > 1 else 0.0:.3f}", len(arr)]
        )
    return rows


def build_report(run_dirs: Sequence[str | Path], out_dir: str | Path) -> str:
    """Aggregate completed runs into one markdown report with provenance.

    Every referenced run must contain ``config.json`` and ``config.hash``;
    CSV tables and PNG figures found in the runs are inlined/linked.
    Returns the sha256 of the report body, also written to ``report.hash``.
    """
    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ValueError("no run directories given")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = ["# Run report", ""]
    for run in sorted(run_dirs):
        config_path = run / "config.json"
        hash_path = run / "config.hash"
        if not config_path.exists() or not hash_path.exists():
            raise ValueError(f"run {run} is missing config.json/config.hash (incomplete run)")
        digest = hash_path.read_text().strip()
        lines.append(f"## {run.name}")
        lines.append("")
        lines.append(f"- config hash: `{digest}`")
        for extra in ("summary.json", "report.json"):
            p = run / extra
            if p.exists():
                lines.append(f"- {extra}: `{file_sha256(p)}`")
                payload = json.loads(p.read_text())
                for key in sorted(payload) if isinstance(payload, dict) else []:
                    value = payload[key]
                    if isinstance(value, (int, float, str)):
                        lines.append(f"  - {key}: {value}")
        for table in sorted(run.glob("*.csv")):
            lines.append("")
            lines.append(f"### {table.name}")
            lines.append("")
            lines.extend(_csv_to_markdown(table))
        figures = sorted(run.glob("*.png"))
        if figures:
            lines.append("")
            for fig in figures:
                lines.append(f"- figure: {fig.name} (`{file_sha256(fig)}`)")
        lines.append("")

    body = "\n".join(lines)
    (out_dir / "report.md").write_text(body)
    digest = file_sha256(out_dir / "report.md")
    (out_dir / "report.hash").write_text(digest + "\n")
    return digest


def _csv_to_markdown(path: Path) -> list[str]:
    with open(path) as f:
        rows = list(csv.reader(f))
    if not rows:
        return ["(empty table)"]
    out = ["| " + " | ".join(rows[0]) + " |", "|" + "---|" * len(rows[0])]
    out.extend("| " + " | ".join(r) + " |" for r in rows[1:])
    return out
