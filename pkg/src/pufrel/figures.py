"""Figure rendering for CLI reports.

Every report command writes CSV first; these helpers render a PNG next
to it when figures are enabled. The Agg backend is forced so rendering
works on headless machines.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

SUCCESS_THRESHOLD = 0.85


def render_attack_accuracies(accuracies, path, title=""):
    """Bar chart of per-instance test accuracies with the success line."""
    fig, ax = plt.subplots(figsize=(7, 4))
    indices = range(len(accuracies))
    ax.bar(indices, accuracies, color="#4878a8")
    ax.axhline(SUCCESS_THRESHOLD, color="#a84848", linestyle="--",
               label=f"success threshold {SUCCESS_THRESHOLD}")
    ax.set_xlabel("instance")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.set_xticks(list(indices))
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_reliability_curve(m_values, r_values, path, title=""):
    """Mean PUF reliability against the repeat count, log-scaled x."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(m_values, r_values, marker="o", color="#4878a8")
    ax.set_xscale("log")
    ax.set_xlabel("repeats m")
    ax.set_ylabel("mean reliability R_m")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_ber_curve(num_mv_values, ber_values, path, title=""):
    """Bit error rate against the majority-vote count."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(num_mv_values, ber_values, marker="s", color="#48785a")
    ax.set_xlabel("majority votes")
    ax.set_ylabel("bit error rate")
    ax.set_ylim(bottom=0.0)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_sweep(axis_name, axis_values, mean_accuracies, success_rates, path,
                 title=""):
    """Mean accuracy and success rate across one sweep axis."""
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.plot(axis_values, mean_accuracies, marker="o", color="#4878a8",
            label="mean accuracy")
    ax.plot(axis_values, success_rates, marker="s", color="#a87848",
            label="success rate")
    ax.axhline(SUCCESS_THRESHOLD, color="#a84848", linestyle="--", alpha=0.6)
    ax.set_xlabel(axis_name)
    ax.set_ylabel("fraction")
    ax.set_ylim(0.0, 1.0)
    if title:
        ax.set_title(title)
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
