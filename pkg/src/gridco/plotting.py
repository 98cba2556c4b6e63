"""Matplotlib figures for the report command; files only, no display."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_breakdown(rows, path):
    runs = [r["run"] for r in rows]
    op = [r["operational_cost"] / 1e6 for r in rows]
    ex = [r["expansion_cost"] / 1e6 for r in rows]
    fig, ax = plt.subplots(figsize=(max(4, 1.5 * len(rows) + 2), 4))
    ax.bar(runs, op, label="operational")
    ax.bar(runs, ex, bottom=op, label="expansion")
    ax.set_ylabel("annual cost (M$)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_bids(run, rows, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ep = [r["episode"] for r in rows]
    for name in run.agent_names:
        ax.plot(ep, [r[f"mean_bid_{name}"] for r in rows], label=name, lw=0.8)
    ax.set_xlabel("episode")
    ax.set_ylabel("mean bid ($/MWh)")
    if run.agent_names:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_mu(run, rows, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ep = [r["episode"] for r in rows]
    for name in run.line_names:
        ax.plot(ep, [r[f"mu_{name}"] for r in rows], label=name, lw=0.8)
    ax.set_xlabel("episode")
    ax.set_ylabel("design mean")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
