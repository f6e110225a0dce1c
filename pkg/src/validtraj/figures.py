"""Report figures rendered to PNG files next to the CSV output.

All rendering uses the Agg backend so the harness works headless; nothing in
here touches an interactive display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import Scenario, Trajectory

_BAR_COLOR = "#4878a8"
_ACCENT_COLOR = "#c44e52"
_DPI = 130


def _new_axes(width: float = 6.4, height: float = 4.2):
    fig, ax = plt.subplots(figsize=(width, height), dpi=_DPI)
    ax.grid(True, alpha=0.3, linewidth=0.6)
    return fig, ax


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_trajectory(
    traj: Trajectory, scenario: Scenario, path: str | Path, title: str = ""
) -> Path:
    """Agent paths in the arena; start markers filled, safety radii dashed."""
    fig, ax = _new_axes(6.0, 6.0)
    cmap = plt.get_cmap("tab10")
    for i in range(traj.n_agents):
        xy = traj.positions[i]
        color = cmap(i % 10)
        ax.plot(xy[:, 0], xy[:, 1], "-", color=color, linewidth=1.4)
        ax.plot(xy[0, 0], xy[0, 1], "o", color=color, markersize=6)
        circle = plt.Circle(
            (xy[-1, 0], xy[-1, 1]),
            scenario.limits.d_safe / 2.0,
            fill=False,
            linestyle="--",
            color=color,
            linewidth=0.8,
        )
        ax.add_patch(circle)
    arena = scenario.arena
    ax.set_xlim(arena.min_x, arena.max_x)
    ax.set_ylim(arena.min_y, arena.max_y)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title or f"{scenario.kind}, {traj.n_agents} agents")
    return _save(fig, path)


def plot_method_comparison(summary: dict, path: str | Path) -> Path:
    """Grouped bars of validity and collision rate per method."""
    methods = list(summary["methods"].keys())
    validity = [summary["methods"][m]["validity"] for m in methods]
    collision = [summary["methods"][m]["collision"] for m in methods]
    x = np.arange(len(methods))
    fig, ax = _new_axes()
    ax.bar(x - 0.2, validity, width=0.4, label="validity", color=_BAR_COLOR)
    ax.bar(x + 0.2, collision, width=0.4, label="collision", color=_ACCENT_COLOR)
    ax.set_xticks(x, methods)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("rate")
    ax.set_title(f"{summary.get('scenario', '')}: validity vs collision")
    ax.legend()
    return _save(fig, path)


def plot_temporal_validity(temporal_rows: list[dict], path: str | Path) -> Path:
    """Per-timestep valid fraction, one line per method."""
    fig, ax = _new_axes()
    methods = sorted({r["method"] for r in temporal_rows})
    for method in methods:
        pts = [(r["t"], r["valid_fraction"]) for r in temporal_rows if r["method"] == method]
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "-o", markersize=3, label=method)
    ax.set_xlabel("timestep")
    ax.set_ylabel("valid fraction")
    ax.set_ylim(-0.02, 1.05)
    ax.set_title("validity over the horizon")
    ax.legend()
    return _save(fig, path)


def plot_schedule_ablation(summary: dict, path: str | Path) -> Path:
    """Validity and mean jerk per guidance schedule family."""
    families = list(summary["families"].keys())
    validity = [summary["families"][f]["validity"] for f in families]
    jerk = [summary["families"][f]["jerk"] for f in families]
    x = np.arange(len(families))
    fig, ax = _new_axes()
    ax.bar(x, validity, width=0.5, color=_BAR_COLOR, label="validity")
    ax.set_xticks(x, families)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("validity", color=_BAR_COLOR)
    twin = ax.twinx()
    twin.plot(x, jerk, "o-", color=_ACCENT_COLOR, label="mean jerk")
    twin.set_ylabel("mean jerk [m/s^3]", color=_ACCENT_COLOR)
    ax.set_title(f"schedule ablation, lambda0={summary.get('lambda0')}")
    return _save(fig, path)


def plot_scaling(summary: dict, path: str | Path) -> Path:
    """Log-log runtime of brute-force vs pruned energy evaluation."""
    ns = np.asarray(summary["agent_counts"], dtype=np.float64)
    brute = np.asarray(summary["median_brute_seconds"])
    pruned = np.asarray(summary["median_pruned_seconds"])
    fig, ax = _new_axes()
    ax.loglog(ns, brute, "o-", color=_ACCENT_COLOR, label="all pairs")
    ax.loglog(ns, pruned, "s-", color=_BAR_COLOR, label="grid pruned")
    anchor = brute[0] / ns[0] ** 2
    ax.loglog(ns, anchor * ns**2, "--", color="gray", linewidth=0.9, label="N^2 reference")
    ax.set_xlabel("agents")
    ax.set_ylabel("median seconds per evaluation")
    ax.set_title(f"energy evaluation scaling (slope {summary['loglog_slope_brute']:.2f})")
    ax.legend()
    return _save(fig, path)


def plot_gradcheck(rows: list[dict], tolerance: float, path: str | Path) -> Path:
    """Histogram of per-instance relative gradient errors on a log axis."""
    errors = np.maximum([r["rel_error"] for r in rows], 1e-16)
    bins = np.logspace(np.log10(errors.min()), np.log10(max(errors.max(), tolerance)), 40)
    fig, ax = _new_axes()
    ax.hist(errors, bins=bins, color=_BAR_COLOR)
    ax.axvline(tolerance, color=_ACCENT_COLOR, linestyle="--", label=f"tolerance {tolerance:g}")
    ax.set_xscale("log")
    ax.set_xlabel("relative gradient error")
    ax.set_ylabel("instances")
    ax.set_title("analytic vs finite-difference gradients")
    ax.legend()
    return _save(fig, path)


def plot_failure_sweep(summary: dict, path: str | Path) -> Path:
    """Validity and explosion rate against agent density."""
    densities = [float(d) for d in summary["densities"]]
    per = summary["per_density"]
    validity = [per[repr(float(d))]["validity"] for d in densities]
    explosion = [per[repr(float(d))]["explosion_rate"] for d in densities]
    fig, ax = _new_axes()
    ax.plot(densities, validity, "o-", color=_BAR_COLOR, label="validity")
    ax.plot(densities, explosion, "s--", color=_ACCENT_COLOR, label="explosion rate")
    ax.set_xlabel("density [agents/m^2]")
    ax.set_ylabel("rate")
    ax.set_ylim(-0.02, 1.05)
    ax.set_title("failure modes vs density")
    ax.legend()
    return _save(fig, path)
