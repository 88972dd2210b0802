"""Figure rendering for traces and chart comparisons (file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scenarios import LawComparison
from .sim_engine import Trace


def save_trace_figure(trace: Trace, path) -> str:
    """Four-panel overview of one run: energies, valve, port powers, tank state."""
    fig, axes = plt.subplots(2, 2, figsize=(10, 6.5), sharex=True)
    t = trace.t

    ax = axes[0, 0]
    ax.plot(t, trace.plant_energy, label="H (plant)")
    ax.plot(t, trace.tank_energy, label="T (tank)")
    ax.plot(t, trace.total_energy, label="H + T", ls="--")
    ax.set_ylabel("energy [J]")
    ax.legend(loc="best", fontsize=8)

    ax = axes[0, 1]
    ax.step(t, trace.alpha, where="post", color="C3")
    ax.set_ylabel("valve alpha")
    ax.set_ylim(-0.05, 1.05)

    ax = axes[1, 0]
    for series, label in ((trace.p_c, "P_c"), (trace.p_t, "P_t"),
                          (trace.p_e, "P_e"), (trace.p_d, "P_d")):
        ax.plot(t, series, label=label, alpha=0.8)
    ax.set_ylabel("power [W]")
    ax.set_xlabel("t [s]")
    ax.legend(loc="best", fontsize=8)

    ax = axes[1, 1]
    finite = np.isfinite(trace.x_t)
    ax.plot(t[finite], trace.x_t[finite], color="C4")
    ax.set_ylabel("tank state x_t")
    ax.set_xlabel("t [s]")

    scenario = trace.meta.get("scenario", "")
    law = trace.meta.get("law", "")
    fig.suptitle(f"{scenario} ({law} tank)".strip())
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_comparison_figure(result: LawComparison, path) -> str:
    """Tank energy and chart state under both energy laws, stacked panels."""
    fig, (ax_e, ax_s) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)

    ax_e.plot(result.t, result.energy_quadratic, label="quadratic chart")
    ax_e.plot(result.t, result.energy_exponential, label="exponential chart", ls="--")
    ax_e.set_ylabel("tank energy T [J]")
    ax_e.legend(loc="best", fontsize=8)

    fin_q = np.isfinite(result.state_quadratic)
    fin_e = np.isfinite(result.state_exponential)
    ax_s.plot(result.t[fin_q], result.state_quadratic[fin_q], label="quadratic x_t")
    ax_s.plot(result.t[fin_e], result.state_exponential[fin_e],
              label="exponential x_t", ls="--")
    ax_s.set_ylabel("tank state x_t")
    ax_s.set_xlabel("t [s]")
    ax_s.legend(loc="best", fontsize=8)

    fig.suptitle("tank energy is chart-independent; the chart state is not")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
