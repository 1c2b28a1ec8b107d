"""Figure rendering: duality-gap curves and 1D density evolution panels."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .artifacts import PlotError, find_snapshots, load_records  # noqa: E402

PRIMAL_COLOR = "tab:blue"
DUAL_COLOR = "tab:orange"
GAP_COLOR = "tab:red"
Q_COLOR = "0.6"
PQ_COLOR = "tab:blue"
QSTAR_COLOR = "tab:green"


def _check_out(out_path, force: bool) -> Path:
    out = Path(out_path)
    if out.exists() and not force:
        raise PlotError(f"{out} already exists, pass --force to overwrite")
    return out


def _log_or_linear(ax, values: np.ndarray, log_scale: bool) -> None:
    # a log axis with no positive data draws nothing useful and warns;
    # fall back to linear for such degenerate inputs instead
    if log_scale and np.any(values > 0):
        ax.set_yscale("log")


def plot_gap(records_path, out_path, log_scale: bool = False, force: bool = False) -> Path:
    """Primal, dual, and gap curves against iteration from a records.csv."""
    out = _check_out(out_path, force)
    cols = load_records(records_path)
    it = cols["iter"]

    fig, (ax_obj, ax_gap) = plt.subplots(2, 1, sharex=True, figsize=(7.0, 5.6))
    ax_obj.plot(it, cols["primal_L"], color=PRIMAL_COLOR, label="primal L(q)")
    ax_obj.plot(it, cols["dual_D"], color=DUAL_COLOR, linestyle="--", label="dual D(g)")
    ax_obj.set_ylabel("objective")
    ax_obj.legend(loc="best", fontsize=9)
    ax_obj.grid(True, alpha=0.3)

    ax_gap.plot(it, cols["gap"], color=GAP_COLOR, label="duality gap")
    _log_or_linear(ax_gap, cols["gap"], log_scale)
    ax_gap.set_xlabel("iteration")
    ax_gap.set_ylabel("gap")
    ax_gap.legend(loc="best", fontsize=9)
    ax_gap.grid(True, alpha=0.3)

    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_density_1d(snapshots_dir, out_path, log_scale: bool = False,
                    force: bool = False) -> Path:
    """One panel per density snapshot, overlaying q, p_q, and the q_* proxy."""
    out = _check_out(out_path, force)
    snaps = find_snapshots(snapshots_dir)

    fig, axes = plt.subplots(1, len(snaps), figsize=(3.6 * len(snaps), 3.2),
                             sharey=True, squeeze=False)
    for ax, snap in zip(axes[0], snaps):
        ax.fill_between(snap.theta, snap.q_density, step="mid",
                        color=Q_COLOR, alpha=0.6, label="q (particles)")
        ax.plot(snap.theta, snap.pq_density, color=PQ_COLOR, label="p_q")
        if snap.qstar_density is not None:
            ax.plot(snap.theta, snap.qstar_density, color=QSTAR_COLOR,
                    linestyle="--", label="q* proxy")
        _log_or_linear(ax, snap.pq_density, log_scale)
        ax.set_title(f"iteration {snap.iteration}", fontsize=10)
        ax.set_xlabel("theta")
        ax.grid(True, alpha=0.3)
    axes[0][0].set_ylabel("density")
    axes[0][0].legend(loc="best", fontsize=8)

    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
