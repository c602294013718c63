"""Render the three chart families from sweep CSV files.

Input schemas are fixed (one per chart kind) and validated against the CSV
header before anything is drawn. Rendering is deterministic: colors are
assigned by sorted activation name, and input files are never modified.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

SCHEMAS = {
    "performance": ("activation", "sparsity", "epoch", "val_acc"),
    "sparsity_sweep": ("activation", "sparsity", "val_acc"),
    "overfitting": ("activation", "sparsity", "epoch", "overfit"),
}

_Y_LABEL = {
    "performance": "validation accuracy",
    "sparsity_sweep": "final validation accuracy",
    "overfitting": "overfit (train acc - val acc)",
}


class SchemaError(ValueError):
    """CSV header does not match the chart kind's schema."""


@dataclass
class ChartSpec:
    kind: str
    csv_path: str | Path
    out_path: str | Path
    activations: tuple[str, ...] | None = None  # optional filters
    sparsities: tuple[float, ...] | None = None
    title: str | None = None

    def __post_init__(self):
        if self.kind not in SCHEMAS:
            raise ValueError(f"unknown chart kind {self.kind!r} (valid: {tuple(SCHEMAS)})")


def sparsity_name(value: float) -> str:
    return "dense" if value == 0.0 else f"{value * 100:g}%"


def read_rows(csv_path, kind: str) -> list[dict]:
    """Read and type one chart CSV, enforcing its exact header."""
    expected = SCHEMAS[kind]
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{csv_path}: empty file, expected header {','.join(expected)}")
        for name in expected:
            if name not in header:
                raise SchemaError(f"{csv_path}: missing column: {name}")
        for name in header:
            if name not in expected:
                raise SchemaError(f"{csv_path}: unexpected column: {name}")
        idx = {name: header.index(name) for name in expected}

        rows = []
        for line in reader:
            row = {name: line[idx[name]] for name in expected}
            row["sparsity"] = float(row["sparsity"])
            if "epoch" in row:
                row["epoch"] = int(row["epoch"])
            for key in ("val_acc", "overfit"):
                if key in row:
                    row[key] = float(row[key])
            rows.append(row)
    return rows


def _apply_filters(rows, spec: ChartSpec):
    if spec.activations is not None:
        rows = [r for r in rows if r["activation"] in spec.activations]
    if spec.sparsities is not None:
        rows = [r for r in rows if r["sparsity"] in spec.sparsities]
    return rows


def _color_map(rows):
    acts = sorted({r["activation"] for r in rows})
    cmap = plt.get_cmap("tab10")
    return {a: cmap(i % 10) for i, a in enumerate(acts)}


def _series_label(activation, sparsity, multi_sparsity):
    if multi_sparsity:
        return f"{activation} @ {sparsity_name(sparsity)}"
    return activation


def _plot_epoch_series(ax, rows, value_key, colors):
    sparsities = {r["sparsity"] for r in rows}
    multi = len(sparsities) > 1
    keys = sorted({(r["activation"], r["sparsity"]) for r in rows},
                  key=lambda k: (k[0], -k[1]))
    for act, s in keys:
        pts = sorted(
            ((r["epoch"], r[value_key]) for r in rows
             if r["activation"] == act and r["sparsity"] == s)
        )
        style = "-" if not multi else None
        ax.plot([p[0] for p in pts], [p[1] for p in pts], style or "-",
                color=colors[act], alpha=1.0 if not multi else 0.85,
                label=_series_label(act, s, multi))
    ax.set_xlabel("epoch")


def build_figure(spec: ChartSpec):
    """Build the matplotlib figure for a chart spec (no file output)."""
    rows = _apply_filters(read_rows(spec.csv_path, spec.kind), spec)
    colors = _color_map(rows)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    if spec.kind == "performance":
        _plot_epoch_series(ax, rows, "val_acc", colors)
    elif spec.kind == "overfitting":
        _plot_epoch_series(ax, rows, "overfit", colors)
        ax.axhline(0.0, color="black", linewidth=0.8)
    else:
        _plot_sparsity_sweep(ax, rows, colors)

    ax.set_ylabel(_Y_LABEL[spec.kind])
    if spec.title:
        ax.set_title(spec.title)
    if rows:
        ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def render(spec: ChartSpec) -> Path:
    """Draw one chart and write the image file. An empty (but schema-valid)
    CSV produces an empty chart, not an error."""
    fig = build_figure(spec)
    try:
        out = Path(spec.out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out)
    finally:
        plt.close(fig)
    return Path(spec.out_path)


def _plot_sparsity_sweep(ax, rows, colors):
    # categorical x axis in descending sparsity order, dense as the last level
    levels = sorted({r["sparsity"] for r in rows}, reverse=True)
    pos = {s: i for i, s in enumerate(levels)}
    for act in sorted({r["activation"] for r in rows}):
        pts = sorted(
            ((pos[r["sparsity"]], r["val_acc"]) for r in rows if r["activation"] == act)
        )
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                color=colors[act], label=act)
    ax.set_xticks(range(len(levels)))
    ax.set_xticklabels([sparsity_name(s) for s in levels])
    ax.set_xlabel("sparsity level")
