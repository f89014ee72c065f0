"""Matplotlib rendering of pipeline reports to image files.

Works from the exported JSON report payloads (not live objects) so
figures can be regenerated from results on disk.  Only summary-level
statistical plots are produced here; per-region values are exported as
tables for dedicated brain-surface tooling.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_OPTS = {"dpi": 150, "metadata": {"Software": "vnnage"}}


def plot_delta_age(delta_report: dict, path) -> None:
    """Histogram of delta-age per role with group means in the legend."""
    subjects = delta_report["subjects"]
    hc = [s["delta_age"] for s in subjects if s["role"] == "hc"]
    disease = [s["delta_age"] for s in subjects if s["role"] == "disease"]
    hc_stats = delta_report["hc_delta_age"]
    dis_stats = delta_report["disease_delta_age"]

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    lo = min(hc + disease)
    hi = max(hc + disease)
    bins = np.linspace(lo, hi, 30)
    ax.hist(
        hc,
        bins=bins,
        alpha=0.6,
        label=f"healthy ({hc_stats['mean']:.2f} $\\pm$ {hc_stats['std']:.2f} y)",
    )
    ax.hist(
        disease,
        bins=bins,
        alpha=0.6,
        label=f"disease ({dis_stats['mean']:.2f} $\\pm$ {dis_stats['std']:.2f} y)",
    )
    ax.axvline(0.0, color="k", linewidth=0.8)
    ax.set_xlabel("delta-age (years)")
    ax.set_ylabel("subjects")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVE_OPTS)
    plt.close(fig)


def plot_region_f_values(region_table: dict, path, top_n: int = 20) -> None:
    """Horizontal bars of the top regions by F-value; flagged regions
    (disease > healthy surviving correction) are drawn darker."""
    rows = sorted(region_table["rows"], key=lambda r: -r["f_value"])[:top_n]
    labels = [r["region_label"] for r in rows][::-1]
    values = [r["f_value"] for r in rows][::-1]
    colors = ["#b2182b" if r["significant"] else "#cccccc" for r in rows][::-1]

    fig, ax = plt.subplots(figsize=(6.4, 0.28 * len(rows) + 1.2))
    ax.barh(range(len(rows)), values, color=colors)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(labels, fontsize=7)
    ax.set_xlabel("ANOVA F (disease vs healthy, regional outputs)")
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVE_OPTS)
    plt.close(fig)


def plot_eigen_f_values(explain_report: dict, path) -> None:
    """F-value per eigenvector index (0 = largest eigenvalue), with the
    raw-p threshold flags marked."""
    rows = explain_report["eigenvectors"]
    indices = [r["index"] for r in rows]
    values = [r["f_value"] for r in rows]
    flagged = [r["index"] for r in rows if r["significant"]]

    fig, ax = plt.subplots(figsize=(7.2, 3.6))
    ax.bar(indices, values, color="#888888", width=0.8)
    for idx in flagged:
        ax.bar([idx], [values[idx]], color="#b2182b", width=0.8)
    if flagged:
        ax.set_title(
            "flagged eigenvectors (raw p <= "
            f"{explain_report['alpha']:g}): {flagged}",
            fontsize=9,
        )
    ax.set_xlabel("eigenvector index (descending eigenvalue)")
    ax.set_ylabel("ANOVA F of residual projections")
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVE_OPTS)
    plt.close(fig)


def write_group_summary_csv(delta_report: dict, path) -> None:
    """Delimited per-group delta-age summary to sit beside the figures."""
    lines = ["group,n,delta_age_mean,delta_age_std"]
    for name, stats in (
        ("hc", delta_report["hc_delta_age"]),
        ("disease", delta_report["disease_delta_age"]),
    ):
        lines.append(f"{name},{stats['n']},{stats['mean']:.6f},{stats['std']:.6f}")
    for label, stats in delta_report["group_delta_age"].items():
        lines.append(f"{label},{stats['n']},{stats['mean']:.6f},{stats['std']:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")
