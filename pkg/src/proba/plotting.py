"""Figure rendering for traces and sweeps (SVG, reproducible output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
# stable glyph ids + no timestamp so re-rendering is byte-identical
matplotlib.rcParams["svg.hashsalt"] = "proba"

import matplotlib.pyplot as plt  # noqa: E402

_SAVE_KW = {"metadata": {"Date": None}, "bbox_inches": "tight"}


def line_chart(x, series: dict, out_path: str, xlabel: str = "",
               ylabel: str = "", title: str = "", logx: bool = False):
    """Simple multi-series line chart written to ``out_path``."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name, values in series.items():
        ax.plot(x, values, marker="." if len(x) <= 24 else None, label=name)
    if logx:
        ax.set_xscale("symlog", linthresh=1e-2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)


def trace_chart(rows: dict, columns, out_path: str):
    """Convergence chart of selected trace columns over iterations."""
    series = {c: rows[c] for c in columns if c in rows}
    line_chart(rows["iteration"], series, out_path,
               xlabel="iteration", ylabel="value", title="convergence")


def sweep_chart(x, series: dict, out_path: str, xlabel: str,
                title: str = "", logx: bool = False):
    line_chart(x, series, out_path, xlabel=xlabel, ylabel="value",
               title=title, logx=logx)
