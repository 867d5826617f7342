"""Render training and bound-check CSVs into static figures.

Four figure kinds, one per published CSV schema:

- ``trace``  — per-epoch risk curves from a training trace, with an
  optional horizontal reference line at a target risk value;
- ``sweep``  — smallest sufficient width against the separation margin,
  one series per label kind, width on a log scale;
- ``bounds`` — histogram of per-trial slack from a bound-check report;
- ``table1`` — mean accuracy against student width, one series per
  (dataset configuration, label kind) pair.

Strict consumer contract: the input CSV must carry every column the kind
declares (a mismatch raises SchemaError naming the missing columns, an
empty file is an error, never an empty figure) and is opened read-only.
Rendering is deterministic: fixed style, fixed id salt, no timestamps in
the output bytes, so re-rendering the same CSV reproduces the file
byte-for-byte.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

SCHEMAS = {
    "trace": ("t", "r_kl", "r_hard", "r_class", "r_kl_ref", "frob_dev",
              "max_flip", "clipped_rows"),
    "sweep": ("gamma", "loss_kind", "epsilon", "m_star", "seeds",
              "mean_error", "searched_max"),
    "bounds": ("trial", "observed", "bound", "slack", "violated"),
    "table1": ("config", "loss_kind", "m", "seeds", "teacher_acc",
               "acc_mean", "acc_min", "acc_max"),
}

_DEFAULT_LABELS = {
    "trace": ("iteration", "risk"),
    "sweep": ("separation margin", "smallest sufficient width"),
    "bounds": ("slack (bound - observed)", "trials"),
    "table1": ("student width", "accuracy"),
}

# text stays text in SVG output (searchable, font-independent bytes) and a
# fixed hash salt keeps element ids stable across processes
_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 160,
    "savefig.dpi": 160,
    "svg.fonttype": "none",
    "svg.hashsalt": "plotkit",
    "axes.grid": True,
    "grid.alpha": 0.3,
}


class SchemaError(ValueError):
    """Input CSV does not match the declared schema for the figure kind."""


@dataclass
class FigureSpec:
    """One figure: input CSV, kind, output path, optional text overrides."""

    csv_path: str
    kind: str
    out_path: str
    title: str | None = None
    xlabel: str | None = None
    ylabel: str | None = None
    target: float | None = None      # trace: horizontal reference line


def read_rows(path, kind) -> list[dict]:
    """Parse the CSV against the kind's schema; rows as string dicts."""
    if kind not in SCHEMAS:
        raise SchemaError(f"unknown figure kind {kind!r}; "
                          f"expected one of {sorted(SCHEMAS)}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, no header row")
        missing = [c for c in SCHEMAS[kind] if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: {kind} CSV missing column(s) "
                              + ", ".join(missing))
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _floats(rows, col):
    return [float(r[col]) for r in rows]


def _series_order(kinds):
    # soft/hard first in fixed order, anything else alphabetically after
    known = [k for k in ("soft", "hard") if k in kinds]
    return known + sorted(set(kinds) - {"soft", "hard"})


def _plot_trace(ax, rows, target):
    ts = _floats(rows, "t")
    ax.plot(ts, _floats(rows, "r_kl"), label="divergence risk")
    ref = _floats(rows, "r_kl_ref")
    if any(math.isfinite(v) for v in ref):
        ax.plot(ts, ref, linestyle="--", label="reference divergence risk")
    ax.plot(ts, _floats(rows, "r_class"), linestyle=":",
            label="classification error")
    if target is not None:
        ax.axhline(target, color="0.3", linestyle="-.", linewidth=1,
                   label=f"target {target:g}")
    ax.legend()


def _plot_sweep(ax, rows):
    kinds = _series_order([r["loss_kind"] for r in rows])
    for kind in kinds:
        pts = [(float(r["gamma"]), int(r["m_star"]))
               for r in rows if r["loss_kind"] == kind and r["m_star"] != ""]
        pts.sort()
        if pts:
            ax.plot([g for g, _ in pts], [m for _, m in pts], marker="o",
                    label=kind)
    ax.set_yscale("log", base=2)
    ax.legend()


def _plot_bounds(ax, rows):
    slacks = _floats(rows, "slack")
    ax.hist(slacks, bins=min(30, max(10, len(slacks) // 10)),
            edgecolor="black", linewidth=0.5)
    ax.axvline(0.0, color="0.3", linestyle="--", linewidth=1,
               label="bound boundary")
    ax.legend()


def _plot_table1(ax, rows):
    configs = sorted({r["config"] for r in rows})
    kinds = _series_order([r["loss_kind"] for r in rows])
    styles = dict(zip(configs, ("-", "--", ":", "-.")))
    markers = dict(zip(kinds, ("o", "s", "^", "v")))
    for config in configs:
        for kind in kinds:
            pts = [(int(r["m"]), float(r["acc_mean"])) for r in rows
                   if r["config"] == config and r["loss_kind"] == kind]
            pts.sort()
            if pts:
                ax.plot([m for m, _ in pts], [a for _, a in pts],
                        linestyle=styles.get(config, "-"),
                        marker=markers.get(kind, "o"),
                        label=f"{config}/{kind}")
    ax.set_xscale("log", base=2)
    ax.legend()


def render(spec: FigureSpec) -> str:
    """Draw the figure for `spec` and write it to spec.out_path."""
    rows = read_rows(spec.csv_path, spec.kind)
    if spec.target is not None and spec.kind != "trace":
        raise SchemaError("a target reference line only applies to trace "
                          "figures")
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        try:
            if spec.kind == "trace":
                _plot_trace(ax, rows, spec.target)
            elif spec.kind == "sweep":
                _plot_sweep(ax, rows)
            elif spec.kind == "bounds":
                _plot_bounds(ax, rows)
            else:
                _plot_table1(ax, rows)
            xlabel, ylabel = _DEFAULT_LABELS[spec.kind]
            ax.set_xlabel(spec.xlabel or xlabel)
            ax.set_ylabel(spec.ylabel or ylabel)
            if spec.title:
                ax.set_title(spec.title)
            fig.tight_layout()
            if spec.out_path.endswith(".svg"):
                fig.savefig(spec.out_path, metadata={"Date": None})
            else:
                fig.savefig(spec.out_path)
        finally:
            plt.close(fig)
    return spec.out_path
