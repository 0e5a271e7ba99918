"""Figure rendering for benchmark reports.

The statistics layer stays plot-free; this module turns finished report
documents into PNG files next to the JSON/TSV output when the CLI is asked
for a report directory.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import GevParams, gev_pdf


def render_response_figures(report_obj: dict, out_dir: Path, stem: str) -> list[Path]:
    """Histogram of round-trip times with the fitted GEV density overlaid."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    edges = report_obj.get("histogram", {}).get("edges") or []
    counts = report_obj.get("histogram", {}).get("counts") or []
    if len(edges) < 2:
        return written
    edges_arr = np.asarray(edges, dtype=float)
    counts_arr = np.asarray(counts, dtype=float)
    widths = np.diff(edges_arr)
    total = counts_arr.sum()

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    density = counts_arr / (total * widths) if total > 0 else counts_arr
    ax.bar(
        edges_arr[:-1],
        density,
        width=widths,
        align="edge",
        color="#4878a8",
        edgecolor="white",
        linewidth=0.5,
        label="observed",
    )
    gev_obj = report_obj.get("gev")
    if gev_obj:
        params = GevParams.from_obj(gev_obj)
        grid = np.linspace(edges_arr[0], edges_arr[-1], 400)
        ax.plot(grid, [gev_pdf(float(x), params) for x in grid],
                color="#b04848", linewidth=1.8, label="fitted GEV")
    ax.set_xlabel("round-trip time (ms)")
    ax.set_ylabel("density")
    ax.set_title(
        f"Response times — scenario {report_obj.get('scenario', '?')} "
        f"({report_obj.get('success_count', 0)} ok / {report_obj.get('failure_count', 0)} failed)"
    )
    ax.legend()
    fig.tight_layout()
    path = out_dir / f"{stem}_histogram.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def render_pnp_figures(report_obj: dict, out_dir: Path, stem: str) -> list[Path]:
    """Per-state mean durations with 95% confidence-interval error bars."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    per_state = report_obj.get("per_state") or {}
    if not per_state:
        return written
    states = list(per_state.keys())
    means = np.array([per_state[s]["mean_ms"] for s in states], dtype=float)
    half_widths = []
    for s in states:
        lo, hi = per_state[s].get("ci_low_ms"), per_state[s].get("ci_high_ms")
        half_widths.append(0.0 if lo is None or hi is None else (hi - lo) / 2.0)

    fig, ax = plt.subplots(figsize=(8.0, 4.4))
    positions = np.arange(len(states))
    ax.bar(positions, means, yerr=half_widths, capsize=3,
           color="#6a9a58", edgecolor="white", linewidth=0.5)
    ax.set_xticks(positions)
    ax.set_xticklabels(states, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("mean duration (ms)")
    total = report_obj.get("total", {})
    ax.set_title(
        f"Onboarding per-state timing — scenario {report_obj.get('scenario', '?')} "
        f"(total mean {total.get('mean_ms', 0.0):.0f} ms over {report_obj.get('runs', 0)} runs)"
    )
    fig.tight_layout()
    path = out_dir / f"{stem}_states.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    totals = report_obj.get("totals_ms") or []
    if totals:
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        ax.plot(range(len(totals)), totals, marker="o", linestyle="-",
                markersize=3.5, color="#4878a8")
        ax.set_xlabel("run")
        ax.set_ylabel("total onboarding time (ms)")
        ax.set_title(f"Onboarding totals — scenario {report_obj.get('scenario', '?')}")
        fig.tight_layout()
        path = out_dir / f"{stem}_totals.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
