"""Render study CSV outputs as static figures and tables.

Every renderer is a pure function of the CSV bytes and the job config: the
CSVs are the single source of numerical truth and nothing is recomputed
here beyond presentation (histogram binning, kernel density overlays).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("hist_density", "selection_curves", "summary_table")

SCHEMAS = {
    "hist_density": ["rep", "component", "estimate", "truth"],
    "selection_curves": ["n", "penalty", "avg_order", "freq"],
    "summary_table": ["scenario", "n", "reps", "n_fail", "rejection_rate"],
}


class SchemaError(Exception):
    """Input CSV does not match the expected schema."""


@dataclass(frozen=True)
class FigureJob:
    """One rendering task: input CSV, figure kind, output file."""

    kind: str
    inputs: tuple[str, ...]
    output: str
    dpi: int = 150
    fmt: str = "png"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")


def read_rows(path: str, kind: str) -> list[dict]:
    """Read a CSV and validate its header against the kind's schema.

    The summary table requires its fixed columns as a prefix (the component
    columns vary with the model); the other kinds match exactly.
    """
    expected = SCHEMAS[kind]
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise SchemaError(f"{path}: empty file, expected columns {expected}")
            if kind == "summary_table":
                ok = header[: len(expected)] == expected
            else:
                ok = header == expected
            if not ok:
                missing = [c for c in expected if c not in header]
                extra = [c for c in header if c not in expected] if kind != "summary_table" else []
                raise SchemaError(
                    f"{path}: bad header; missing columns {missing}, "
                    f"unexpected columns {extra}"
                )
            rows = [dict(zip(header, row)) for row in reader]
    except OSError as err:
        raise SchemaError(f"{path}: {err}") from err
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def gaussian_kde(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Silverman-bandwidth Gaussian kernel density estimate."""
    values = np.asarray(values, dtype=float)
    n = values.size
    sd = float(np.std(values))
    if sd == 0.0 or n < 2:
        return np.zeros_like(grid)
    bw = 1.06 * sd * n ** (-1 / 5)
    z = (grid[:, None] - values[None, :]) / bw
    return np.exp(-0.5 * z**2).sum(axis=1) / (n * bw * math.sqrt(2 * math.pi))


def build_hist_density(rows: list[dict]):
    """Histogram and density panels per component, truth as a dotted line."""
    components: dict[str, dict] = {}
    for row in rows:
        comp = row["component"]
        entry = components.setdefault(comp, {"estimates": [], "truth": float(row["truth"])})
        entry["estimates"].append(float(row["estimate"]))
    names = list(components)
    ncols = min(3, len(names))
    nrows = math.ceil(len(names) / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4 * ncols, 3 * nrows), squeeze=False)
    for ax in axes.ravel()[len(names):]:
        ax.set_visible(False)
    for ax, name in zip(axes.ravel(), names):
        vals = np.array(components[name]["estimates"])
        truth = components[name]["truth"]
        ax.hist(vals, bins="auto", density=True, color="#9ecae1", edgecolor="white")
        lo, hi = vals.min(), vals.max()
        pad = 0.2 * max(hi - lo, 1e-6)
        grid = np.linspace(lo - pad, hi + pad, 256)
        ax.plot(grid, gaussian_kde(vals, grid), color="#08519c", lw=1.5)
        ax.axvline(truth, color="black", ls=":", lw=1.5)
        ax.set_title(name)
    fig.tight_layout()
    return fig


def build_selection_curves(rows: list[dict]):
    """Average selected order and true-order frequency against n, per penalty."""
    penalties: dict[str, dict] = {}
    for row in rows:
        entry = penalties.setdefault(row["penalty"], {"n": [], "avg": [], "freq": []})
        entry["n"].append(int(row["n"]))
        entry["avg"].append(float(row["avg_order"]) if row["avg_order"] else np.nan)
        entry["freq"].append(float(row["freq"]) if row["freq"] else np.nan)
    fig, (ax_avg, ax_freq) = plt.subplots(1, 2, figsize=(10, 4))
    all_n = sorted({n for e in penalties.values() for n in e["n"]})
    for label in sorted(penalties):
        entry = penalties[label]
        order = np.argsort(entry["n"])
        ns = np.array(entry["n"])[order]
        ax_avg.plot(ns, np.array(entry["avg"])[order], marker="o", label=label)
        ax_freq.plot(ns, np.array(entry["freq"])[order], marker="o", label=label)
    ax_avg.set_xlabel("n")
    ax_avg.set_ylabel("average selected order")
    ax_freq.set_xlabel("n")
    ax_freq.set_ylabel("true-order frequency")
    ax_freq.set_ylim(-0.02, 1.05)
    for ax in (ax_avg, ax_freq):
        ax.set_xticks(all_n)
        ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def build_summary_table(rows: list[dict]):
    """The study summary as a rendered table, one row per (scenario, n)."""
    header = list(rows[0])
    cells = [[row[c] for c in header] for row in rows]
    display = [[_fmt(v) for v in line] for line in cells]
    fig, ax = plt.subplots(figsize=(max(8, 1.1 * len(header)), 0.5 + 0.35 * len(rows)))
    ax.axis("off")
    table = ax.table(cellText=display, colLabels=header, loc="center")
    table.auto_set_font_size(False)
    table.set_fontsize(7)
    table.scale(1.0, 1.3)
    fig.tight_layout()
    return fig


def _fmt(value: str) -> str:
    try:
        return f"{float(value):.4f}"
    except ValueError:
        return value


BUILDERS = {
    "hist_density": build_hist_density,
    "selection_curves": build_selection_curves,
    "summary_table": build_summary_table,
}


def render(job: FigureJob) -> str:
    """Render the job to its output file and return the path."""
    rows: list[dict] = []
    for path in job.inputs:
        rows.extend(read_rows(path, job.kind))
    fig = BUILDERS[job.kind](rows)
    try:
        fig.savefig(job.output, dpi=job.dpi, format=job.fmt,
                    metadata=_fixed_metadata(job.fmt))
    finally:
        plt.close(fig)
    return job.output


def _fixed_metadata(fmt: str):
    # strip creator/date stamps so output bytes depend on the inputs only
    if fmt == "png":
        return {"Software": "acx-figures"}
    if fmt == "svg":
        return {"Date": None, "Creator": "acx-figures"}
    return None
