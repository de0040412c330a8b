"""End-to-end simulation runs: assemble, integrate, attach named waveform columns."""

from __future__ import annotations

import numpy as np

from .circuit import (CircuitSystem, HalfBridgeConfig, assemble,
                      IDX_VGS1, IDX_IL, IDX_QRR, IDX_VM)
from .solver import Event, SolverSettings, WaveformTrace, integrate

BRANCH_FIELDS = ("i_rs1", "i_rs2", "i_cgs_s1", "i_cgd_s1", "i_cds_s1", "i_cpar_s1",
                 "i_cgs_s2", "i_cgd_s2", "i_cds_s2", "i_cpar_s2", "i_crr_s2",
                 "i_g_s1", "i_g_s2", "i_c_s1", "i_c_s2", "i_d_s1", "i_d_s2", "i_dc")


def default_t_end(config: HalfBridgeConfig):
    """Long enough for the gate to settle: 15 input time constants."""
    c_iss = config.dev_s1.c_gs + config.dev_s1.c_gd.c(config.v_dc)
    return 15.0 * config.r_g_s1 * c_iss


def standard_events(system: CircuitSystem):
    """Marker events for onset, commutation completion, i_DC zeros and RR exhaustion."""
    cfg = system.config
    events = [Event("onset_vth",
                    lambda t, x, dx: x[IDX_VGS1] - cfg.dev_s1.v_th, direction=+1)]

    scenario = cfg.scenario
    if scenario in ("HS", "iZVS_case2"):
        events.append(Event(
            "cc_complete",
            lambda t, x, dx: system.channel_s1(x) + x[IDX_IL], direction=+1))
    elif scenario == "iZVS_case1":
        def cc_case1(t, x, dx):
            b = system.branch_currents(t, x, dx)
            return abs(b.i_rs1) - abs(b.i_c_s1)
        events.append(Event("cc_complete", cc_case1, direction=+1))
    else:  # ZVS: channel resumes carrying the full load current after the dip
        events.append(Event(
            "cc_complete",
            lambda t, x, dx: abs(system.channel_s1(x)) - abs(x[IDX_IL]), direction=+1))

    events.append(Event(
        "idc_zero",
        lambda t, x, dx: system.branch_currents(t, x, dx).i_dc, direction=0))
    if system._crr_enabled:
        events.append(Event(
            "rr_exhausted",
            lambda t, x, dx: cfg.dev_s2.q_rr - x[IDX_QRR], direction=-1))
    return events


def attach_columns(system: CircuitSystem, trace: WaveformTrace):
    """Add node voltages and branch currents as named trace columns."""
    n = len(trace)
    cols = {name: np.empty(n) for name in BRANCH_FIELDS}
    for k in range(n):
        b = system.branch_currents(trace.t[k], trace.x[k], trace.dx[k])
        for name in BRANCH_FIELDS:
            cols[name][k] = getattr(b, name)
    trace.data["v_ds_s1"] = system.v_dc - trace.x[:, IDX_VM]
    trace.data["v_ds_s2"] = trace.x[:, IDX_VM].copy()
    trace.data.update(cols)
    return trace


def simulate(config: HalfBridgeConfig, settings: SolverSettings | None = None,
             t_end=None, with_events=True):
    """Run a configured half-bridge turn-on; returns (trace, system)."""
    system = assemble(config)
    settings = settings or SolverSettings()
    t_end = t_end if t_end is not None else default_t_end(config)
    events = standard_events(system) if with_events else ()
    trace = integrate(system, system.initial_state, settings, t_end, events=events)
    attach_columns(system, trace)
    trace.metadata.update({
        "scenario": config.scenario,
        "v_dc": config.v_dc,
        "v_th_s1": config.dev_s1.v_th,
        "gate_on": config.gate_on,
        "gate_off": config.gate_off,
        "load_current_into_midpoint": config.load.signed_current,
    })
    return trace, system
