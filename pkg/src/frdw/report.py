"""Figure rendering for the CLI report paths (saved next to the CSV output)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import SweepResult, itr


def save_sweep_figure(result: SweepResult, path) -> Path:
    """ITR against minimum length and against threshold, one panel pair per scheme."""
    schemes = sorted({c.scheme for c in result.cells})
    fig, axes = plt.subplots(len(schemes), 2, figsize=(9, 3 * len(schemes)),
                             squeeze=False)
    for row, scheme in enumerate(schemes):
        cells = [c for c in result.cells if c.scheme == scheme and c.metrics]
        ax_l, ax_t = axes[row]
        for tau in sorted({c.tau for c in cells}):
            pts = sorted((c.l_min, c.metrics.itr) for c in cells if c.tau == tau)
            if pts:
                ax_l.plot(*zip(*pts), marker="o", label=f"tau={tau:g}")
        for l_min in sorted({c.l_min for c in cells}):
            pts = sorted((c.tau, c.metrics.itr) for c in cells if c.l_min == l_min)
            if pts:
                ax_t.plot(*zip(*pts), marker="s", label=f"l_min={l_min}")
        ax_l.set_xlabel("minimum length (samples)")
        ax_t.set_xlabel("confidence threshold")
        for ax in (ax_l, ax_t):
            ax.set_ylabel("ITR (bits/min)")
            ax.set_title(f"scheme: {scheme}")
            ax.grid(True, alpha=0.3)
            ax.legend(fontsize=8)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def save_replay_figure(per_subject: dict[str, dict], path) -> Path:
    """Per-subject ITR/accuracy bars plus a pooled decision-time histogram."""
    subjects = list(per_subject)
    itrs = [per_subject[s]["itr"] for s in subjects]
    accs = [per_subject[s]["acc"] for s in subjects]
    times = [t for s in subjects for t in per_subject[s]["decision_times_s"]]

    fig, (ax1, ax2, ax3) = plt.subplots(1, 3, figsize=(12, 3.5))
    x = np.arange(len(subjects))
    ax1.bar(x, itrs, color="tab:blue")
    ax1.set_xticks(x, subjects, rotation=45, fontsize=7)
    ax1.set_ylabel("ITR (bits/min)")
    ax2.bar(x, accs, color="tab:green")
    ax2.set_xticks(x, subjects, rotation=45, fontsize=7)
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0, 1.05)
    ax3.hist(times, bins=20, color="tab:orange")
    ax3.set_xlabel("decision time (s)")
    ax3.set_ylabel("trials")
    for ax in (ax1, ax2, ax3):
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def save_latency_figure(update_ms: list[float], tick_ms: float, path) -> Path:
    """Histogram of per-update compute times with the tick budget marked."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.hist(update_ms, bins=40, color="tab:purple")
    ax.axvline(tick_ms, color="red", linestyle="--", label=f"budget {tick_ms:g} ms")
    ax.set_xlabel("per-update compute (ms)")
    ax.set_ylabel("updates")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def save_itr_curve_figure(n_classes: int, times_s: tuple[float, ...], path) -> Path:
    """Reference curves: ITR as a function of accuracy for several trial lengths."""
    accs = np.linspace(1.0 / n_classes, 1.0, 200)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for t in times_s:
        ax.plot(accs, [itr(a, n_classes, t) for a in accs], label=f"T={t:g}s")
    ax.set_xlabel("accuracy")
    ax.set_ylabel("ITR (bits/min)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
