"""Waveform and comparison figures rendered to SVG files.

All figures are static artifacts written next to the delimited reports;
axis and legend labels use the circuit symbols (v_gs,S1, i_RS1, ...).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

PHASE_COLORS = {
    "CC": "#f8d66d",
    "VF": "#9ecae1",
    "Miller": "#c7e9c0",
}


def _shade_phases(ax, timeline, t_scale):
    cc = timeline.first("CCComplete")
    if cc is not None:
        ax.axvspan(timeline.onset * t_scale, cc * t_scale,
                   color=PHASE_COLORS["CC"], alpha=0.35, lw=0)
    vf0, vf1 = timeline.first("VFStart"), timeline.first("VFEnd")
    if vf0 is not None and vf1 is not None:
        ax.axvspan(vf0 * t_scale, vf1 * t_scale,
                   color=PHASE_COLORS["VF"], alpha=0.25, lw=0)
    mi = timeline.miller_interval()
    if mi is not None:
        bounds = [mi[0]] + sorted(
            timeline.times_of("MillerSub2") + timeline.times_of("MillerSub3")
            + timeline.times_of("MillerSub4")) + [mi[1]]
        for j, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
            ax.axvspan(a * t_scale, b * t_scale, color=PHASE_COLORS["Miller"],
                       alpha=0.25 + 0.12 * (j % 2), lw=0)


def plot_waveforms(trace, timeline=None, path=None, title=None, metadata=None):
    """Three-panel turn-on waveform figure with optional phase shading."""
    t_scale = 1e9
    t = trace.t * t_scale
    fig, axes = plt.subplots(3, 1, figsize=(9, 9), sharex=True)

    ax = axes[0]
    ax.plot(t, trace.column("v_gs_s1"), label="$v_{gs,S1}$", color="C0")
    ax.plot(t, trace.column("v_gs_s2"), label="$v_{gs,S2}$", color="C1")
    ax.set_ylabel("gate voltage (V)")
    ax.legend(loc="lower right", fontsize=8)

    ax = axes[1]
    ax.plot(t, trace.column("v_ds_s1"), label="$v_{ds,S1}$", color="C0")
    ax.plot(t, trace.column("v_ds_s2"), label="$v_{ds,S2}$", color="C1")
    ax.set_ylabel("drain-source voltage (V)")
    ax.legend(loc="center right", fontsize=8)

    ax = axes[2]
    ax.plot(t, trace.column("i_rs1"), label="$i_{RS1}$", color="C0")
    ax.plot(t, trace.column("i_rs2"), label="$i_{RS2}$", color="C1")
    ax.plot(t, trace.column("i_dc"), label="$i_{DC}$", color="C2")
    if "i_crr_s2" in trace.data and np.any(trace.column("i_crr_s2")):
        ax.plot(t, trace.column("i_crr_s2"), label="$i_{Crr,S2}$",
                color="C3", ls="--")
    ax.set_ylabel("current (A)")
    ax.set_xlabel("time (ns)")
    ax.legend(loc="upper right", fontsize=8)

    if timeline is not None:
        for ax in axes:
            _shade_phases(ax, timeline, t_scale)
        for ev in timeline.sorted_events():
            if ev.kind in ("Onset", "CCComplete", "VFEnd", "IDCReversal", "RRPeak"):
                axes[1].axvline(ev.t * t_scale, color="0.4", lw=0.6, ls=":")
        kinds = ", ".join(dict.fromkeys(e.kind for e in timeline.sorted_events()))
        axes[0].set_title(title or f"{timeline.scenario}: {kinds}", fontsize=9)
    elif title:
        axes[0].set_title(title, fontsize=9)

    fig.tight_layout()
    if path is not None:
        fig.savefig(path, format="svg", metadata=metadata or {})
        plt.close(fig)
        return path
    return fig


def plot_prediction_comparison(rows, path=None, metadata=None):
    """Measured vs predicted turn-on energies, grouped by device class and DC link."""
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5), sharey=False)
    classes = sorted({r["r_ds_class"] for r in rows})
    for ax, cls in zip(axes, classes):
        sub = [r for r in rows if r["r_ds_class"] == cls]
        for v_dc, mark in ((200.0, "o"), (400.0, "s")):
            pts = [r for r in sub if r["v_dc"] == v_dc]
            if not pts:
                continue
            dv = [r["delta_v"] for r in pts]
            ax.plot(dv, [r["measured_uj"] for r in pts], mark + "-",
                    label=f"measured, {v_dc:.0f} V", color="k", mfc="none")
            ax.plot(dv, [r["conv_recomputed_uj"] for r in pts], mark + "--",
                    label=f"conventional, {v_dc:.0f} V", color="C1", mfc="none")
            ax.plot(dv, [r["prop_recomputed_uj"] for r in pts], mark + "-.",
                    label=f"proposed, {v_dc:.0f} V", color="C0", mfc="none")
        ax.set_title(f"{cls} mΩ class")
        ax.set_xlabel("ΔV (V)")
        ax.set_ylabel("$E_{on}$ (µJ)")
        ax.legend(fontsize=7)
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, format="svg", metadata=metadata or {})
        plt.close(fig)
        return path
    return fig


def plot_sweep(values, series, path=None, xlabel="parameter", metadata=None):
    """Line plot of one or more energy series against a swept parameter."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, ys in series.items():
        ax.plot(values, np.asarray(ys, dtype=float) * 1e6, "o-", label=name, mfc="none")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("$E_{on}$ (µJ)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, format="svg", metadata=metadata or {})
        plt.close(fig)
        return path
    return fig
