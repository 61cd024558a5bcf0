"""Figures written next to the CSV outputs (Agg backend, PNG files)."""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "svg.hashsalt": "pipenav",
}

PHASE_COLORS = {"cruise": "#56b4e9", "hold": "#e69f00", "steer": "#009e73", "stabilize": "#cc79a7"}


def _save(fig, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _shade_phases(ax, t, phases):
    start = 0
    for k in range(1, len(phases) + 1):
        if k == len(phases) or phases[k] != phases[start]:
            color = PHASE_COLORS.get(phases[start])
            if color:
                ax.axvspan(t[start], t[min(k, len(t) - 1)], color=color, alpha=0.12, lw=0)
            start = k


def mission_figures(trace, columns, pipe_map, out_dir):
    """Position/belief and attitude panels for a mission trace."""
    if not trace:
        return []
    col = {c: i for i, c in enumerate(columns)}
    t = np.array([r[col["t_s"]] for r in trace])
    phases = [r[col["phase"]] for r in trace]
    s = np.array([r[col["s_m"]] for r in trace])
    mean = np.array([r[col["pf_mean_m"]] for r in trace])
    std = np.array([r[col["pf_std_m"]] for r in trace])
    paths = []
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7.0, 5.5))
        _shade_phases(ax1, t, phases)
        ax1.plot(t, s, "k", lw=1.2, label="true arclength")
        ax1.plot(t, mean, color="#0072b2", lw=1.0, label="particle mean")
        ax1.fill_between(t, mean - 2 * std, mean + 2 * std, color="#0072b2", alpha=0.2, lw=0)
        for x in pipe_map.feature_starts:
            ax1.axhline(x, color="0.4", lw=0.6, ls="--")
        ax1.set_ylim(-0.2, pipe_map.total_length + 0.2)
        ax1.set_ylabel("arclength [m]")
        ax1.legend(loc="upper left")
        _shade_phases(ax2, t, phases)
        for name, style in (("phi", "-"), ("psi", "--")):
            ax2.plot(t, np.degrees([r[col[f"{name}_rad"]] for r in trace]), "k", ls=style, lw=1.0, label=name)
            ax2.plot(t, np.degrees([r[col[f"{name}_hat_rad"]] for r in trace]), color="#d55e00", ls=style, lw=0.8,
                     label=f"{name} estimate")
        ax2.set_ylabel("angle from route frame [deg]")
        ax2.set_xlabel("time [s]")
        ax2.legend(loc="upper left", ncol=2)
        fig.tight_layout()
        paths.append(_save(fig, os.path.join(out_dir, "mission.png")))

        fig, ax = plt.subplots()
        _shade_phases(ax, t, phases)
        for i in (1, 2, 3):
            ax.plot(t, np.array([r[col[f"w{i}_radps"]] for r in trace]) * 60 / (2 * math.pi), lw=0.9, label=f"wheel {i}")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("wheel speed [rpm]")
        ax.legend(loc="upper left")
        fig.tight_layout()
        paths.append(_save(fig, os.path.join(out_dir, "wheels.png")))
    return paths


def drag_figure(velocities, pressures, table, out_dir):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for j, p in enumerate(pressures):
            ax.plot(velocities, table[:, j], lw=1.0, label=f"{p:g} kPa")
        ax.set_xlabel("relative velocity [m/s]")
        ax.set_ylabel("drag force [N]")
        ax.legend(loc="lower left")
        fig.tight_layout()
        return [_save(fig, os.path.join(out_dir, "drag.png"))]


def energy_figure(rel_velocities, ranges_km, op_rel, op_range_km, out_dir):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(rel_velocities, ranges_km, "k", lw=1.2)
        ax.plot([op_rel], [op_range_km], "o", color="#d55e00")
        ax.set_xlabel("relative velocity [m/s]")
        ax.set_ylabel("inspection range [km]")
        ax.set_yscale("log")
        fig.tight_layout()
        return [_save(fig, os.path.join(out_dir, "energy.png"))]


def bench_figure(errors_over_std, out_dir):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(errors_over_std, bins=30, color="#56b4e9", edgecolor="k", lw=0.5)
        ax.axvline(3.0, color="#d55e00", ls="--", lw=1.0)
        ax.set_xlabel("|particle mean - grid mean| / grid std")
        ax.set_ylabel("trials")
        fig.tight_layout()
        return [_save(fig, os.path.join(out_dir, "pf_bench.png"))]


def lqr_figure(t, x, out_dir):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, name in ((0, "phi"), (2, "psi")):
            ax.plot(t, np.degrees(x[:, k]), lw=1.0, label=name)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("angle [deg]")
        ax.legend()
        fig.tight_layout()
        return [_save(fig, os.path.join(out_dir, "lqr_response.png"))]
