"""Turn-on energy accounting by three independent pipelines.

1. Direct dissipation: ∫ v_ds_s1 · i_rs1 dt over the event window.
2. Charge-conservation ledger: the closed form built from the DC-source
   charge balance (stored-charge deltas of the complementary switch, load
   charge, shoot-through charge).
3. Energy-conservation ledger: initial minus final stored energy plus the
   work done by the DC source and the load, minus complementary-switch
   dissipation. Algebraically identical to the charge ledger; both are
   evaluated and cross-checked.

Also provides the closed-form predictions: the proposed model (ledger with
datasheet-only closures for the load-current integrals) and the
conventional energy-balance estimate that ignores the load current.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np

from .device import DeviceModel
from .errors import InputError
from .solver import WaveformTrace, trapezoid_integral


@dataclass(frozen=True)
class PredictionInputs:
    """Window-resolved quantities feeding the closed-form E_on ledgers.

    Integrals run over the event window (onset to end of voltage fall).
    i_l is signed positive into the midpoint; delta_v is the residual
    v_ds_s1 at onset; v_gp records the gate-plateau level used to justify
    the small-v_gs approximations (reporting only).
    """

    v_dc: float
    delta_v: float
    t_start: float
    t_end: float
    int_i_rs2: float
    int_v_ds2_i_rs2: float
    int_i_l: float
    int_v_ds2_i_l: float
    dev_s1: DeviceModel
    dev_s2: DeviceModel
    c_par_s1: float = 0.0
    c_par_s2: float = 0.0
    v_gp: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.delta_v <= self.v_dc):
            raise InputError(f"delta_v={self.delta_v:g} outside [0, v_dc]")
        if self.t_end < self.t_start:
            raise InputError("empty prediction window")

    @property
    def t_diss(self):
        return self.t_end - self.t_start


@dataclass
class EnergyReport:
    """E_on by every pipeline plus the itemized ledger terms (all joules/SI)."""

    e_on_direct: float
    e_on_direct_full: float
    e_on_charge_ledger: float
    e_on_energy_ledger: float
    e_on_proposed_analytic: float | None
    e_on_conventional: float | None
    terms: dict
    ledgers: dict
    residuals: dict
    t_diss: float
    window: tuple
    delta_v: float
    v_gp: float | None

    def to_json(self, path=None):
        payload = {k: _clean(v) for k, v in asdict(self).items()}
        if path is not None:
            Path(path).write_text(json.dumps(payload, indent=2))
        return payload


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def e_on_direct(trace: WaveformTrace, window=None):
    """Dissipated turn-on energy ∫ v_ds_s1 · i_rs1 dt over the window."""
    t0 = trace.t_start if window is None else window[0]
    t1 = trace.t_end if window is None else window[1]
    if t0 < trace.t_start - 1e-15 or t1 > trace.t_end + 1e-15:
        raise InputError(f"window [{t0:g}, {t1:g}] outside trace span")
    p = trace.column("v_ds_s1") * trace.column("i_rs1")
    return trapezoid_integral(trace, p, t0, t1)


def delta_q_s2(dev_s2: DeviceModel, c_par_s2, v_dc, delta_v):
    """Charge absorbed by S2's output capacitance and its parallel capacitance."""
    if not (0.0 <= delta_v <= v_dc):
        raise InputError("delta_v outside [0, v_dc]")
    dq = dev_s2.q_oss(v_dc) - dev_s2.q_oss(v_dc - delta_v)
    return dq, c_par_s2 * delta_v


def s2_absorbed_energy(dev_s2: DeviceModel, c_par_s2, v_dc, delta_v, shoot_through=0.0):
    """Energy absorbed by S2 over the window: stored (output + parallel caps) plus shoot-through."""
    if not (0.0 <= delta_v <= v_dc):
        raise InputError("delta_v outside [0, v_dc]")
    de_oss = dev_s2.e_oss(v_dc) - dev_s2.e_oss(v_dc - delta_v)
    de_par = 0.5 * c_par_s2 * (v_dc ** 2 - (v_dc - delta_v) ** 2)
    return de_oss + de_par + shoot_through


def charge_ledger_e_on(inputs: PredictionInputs):
    """E_on from the charge-conservation ledger; returns (value, itemized terms)."""
    v_dc, dv = inputs.v_dc, inputs.delta_v
    dq_s2, dq_par = delta_q_s2(inputs.dev_s2, inputs.c_par_s2, v_dc, dv)
    de_oss_s2 = inputs.dev_s2.e_oss(v_dc) - inputs.dev_s2.e_oss(v_dc - dv)
    e_par_s2 = 0.5 * inputs.c_par_s2 * (v_dc ** 2 - (v_dc - dv) ** 2)
    e_s1 = inputs.dev_s1.e_oss(dv) + 0.5 * inputs.c_par_s1 * dv ** 2
    dc_source = v_dc * (inputs.int_i_rs2 + dq_s2 + dq_par - inputs.int_i_l)
    load = inputs.int_v_ds2_i_l
    shoot = inputs.int_v_ds2_i_rs2
    e_on = dc_source + load - de_oss_s2 - shoot - e_par_s2 + e_s1
    terms = {
        "dc_source_energy": dc_source,
        "load_inductor_energy": load,
        "s2_stored_energy_delta": de_oss_s2,
        "shoot_through_dissipation": shoot,
        "s2_parallel_cap_energy": e_par_s2,
        "s1_discharge_energy": e_s1,
        "delta_q_s2": dq_s2,
        "delta_q_par_s2": dq_par,
    }
    return e_on, terms


def energy_ledger_e_on(inputs: PredictionInputs):
    """E_on from the energy-conservation ledger; returns (value, ledger fields).

    E_initial - E_final + W_DC + W_L - E_dissipated_S2, with the work terms
    built from the DC-source charge balance. Identical in closed form to the
    charge ledger; evaluated independently as a cross-check.
    """
    v_dc, dv = inputs.v_dc, inputs.delta_v
    dev1, dev2 = inputs.dev_s1, inputs.dev_s2
    e_initial = (dev1.e_oss(dv) + 0.5 * inputs.c_par_s1 * dv ** 2
                 + dev2.e_oss(v_dc - dv) + 0.5 * inputs.c_par_s2 * (v_dc - dv) ** 2)
    e_final = dev2.e_oss(v_dc) + 0.5 * inputs.c_par_s2 * v_dc ** 2
    dq_s2, dq_par = delta_q_s2(dev2, inputs.c_par_s2, v_dc, dv)
    delta_q_dc = dq_s2 + dq_par + inputs.int_i_rs2 - inputs.int_i_l
    w_dc = v_dc * delta_q_dc
    w_l = inputs.int_v_ds2_i_l
    e_diss_s2 = inputs.int_v_ds2_i_rs2
    e_on = e_initial - e_final + w_dc + w_l - e_diss_s2
    ledger = {
        "e_initial": e_initial,
        "e_final": e_final,
        "delta_q_s2": dq_s2,
        "delta_q_par_s2": dq_par,
        "delta_q_dc": delta_q_dc,
        "w_dc": w_dc,
        "w_l": w_l,
        "e_dissipated_s2": e_diss_s2,
        "e_delivered": -(w_dc + w_l),
    }
    return e_on, ledger


@dataclass(frozen=True)
class AnalyticClosure:
    """Datasheet-only assumptions closing the load-current integrals.

    The transition is split into two channel-current segments, each
    piecewise constant: the commutation ramp (averaged to half the load
    current over a gate-charging time constant) and the voltage fall at the
    plateau current. The plateau current is calibrated once, at mid swing,
    from the Miller-limited slew rate. Defaults are documented run
    assumptions, not device data.
    """

    r_g: float = 5.0
    v_gate_on: float = 18.0
    plateau_current: float | None = None
    grid_points: int = 2000


def _plateau_voltage(dev: DeviceModel, current, v_ds_ref):
    """Gate voltage whose channel sustains `current` at the reference v_ds."""
    if current <= 0.0:
        return dev.v_th
    gv = dev.iv.gate_voltages
    lo, hi = dev.v_th, float(gv[-1])
    if dev.channel_current(hi, v_ds_ref) < current:
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if dev.channel_current(mid, v_ds_ref) < current:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def predict_proposed_analytic(dev_s1: DeviceModel, dev_s2: DeviceModel,
                              c_par_s1, c_par_s2, v_dc, delta_v, i_l,
                              closure: AnalyticClosure | None = None):
    """Closed-form proposed E_on prediction from datasheet data only.

    i_l is signed positive into the midpoint (case-2 operation passes a
    negative value). Returns (e_on, details) where details carries every
    ledger term plus the closure diagnostics.
    """
    if not (0.0 <= delta_v <= v_dc):
        raise InputError("delta_v outside [0, v_dc]")
    cl = closure or AnalyticClosure()
    i_out = max(0.0, -i_l)

    # commutation segment: gate charges from threshold to the plateau level
    v_sat_ref = float(dev_s1.iv.curves[0].x[-1])
    v_gp = _plateau_voltage(dev_s1, i_out, v_sat_ref)
    c_iss = dev_s1.c_gs + dev_s1.c_gd.c(v_dc) + dev_s1.c_par_gd
    if cl.v_gate_on <= v_gp:
        raise InputError("gate drive does not exceed the plateau voltage")
    t_cc = cl.r_g * c_iss * math.log(
        max((cl.v_gate_on - dev_s1.v_th) / (cl.v_gate_on - v_gp), 1.0))

    def c_tot(v_m):
        return (dev_s2.c_oss(v_m) + c_par_s2
                + dev_s1.c_oss(v_dc - v_m) + c_par_s1)

    v0 = v_dc - delta_v
    # midpoint sag during commutation (channel averages half the load current)
    sag = 0.5 * i_out * t_cc / c_tot(v0) if i_out > 0.0 else 0.0
    int_v_cc = v0 * t_cc - 0.25 * i_out * t_cc ** 2 / c_tot(v0) if i_out > 0.0 else v0 * t_cc
    v1 = max(v0 - sag, 0.0)

    # voltage-fall segment: plateau channel current, net charging current
    if cl.plateau_current is not None:
        i_pl = cl.plateau_current
    else:
        v_star = 0.5 * v_dc
        i_g_pl = (cl.v_gate_on - v_gp) / cl.r_g
        slew = i_g_pl / (dev_s1.c_gd.c(v_dc - v_star) + dev_s1.c_par_gd)
        i_pl = i_out + c_tot(v_star) * slew
    delta_i = i_pl - i_out
    if delta_i <= 0.0:
        raise InputError("plateau current must exceed the load current for the voltage fall")
    grid = np.linspace(v1, v_dc, cl.grid_points)
    ct = np.array([c_tot(v) for v in grid])
    t_vf = float(np.trapezoid(ct / delta_i, grid))
    int_v_vf = float(np.trapezoid(grid * ct / delta_i, grid))

    t_diss = t_cc + t_vf
    int_v = int_v_cc + int_v_vf
    inputs = PredictionInputs(
        v_dc=v_dc, delta_v=delta_v, t_start=0.0, t_end=t_diss,
        int_i_rs2=0.0, int_v_ds2_i_rs2=0.0,
        int_i_l=i_l * t_diss, int_v_ds2_i_l=i_l * int_v,
        dev_s1=dev_s1, dev_s2=dev_s2, c_par_s1=c_par_s1, c_par_s2=c_par_s2,
        v_gp=v_gp)
    e_on, terms = charge_ledger_e_on(inputs)
    details = dict(terms)
    details.update({"t_diss": t_diss, "t_cc": t_cc, "t_vf": t_vf,
                    "v_gp": v_gp, "plateau_current": i_pl,
                    "net_charging_current": delta_i, "midpoint_sag": sag})
    return e_on, details


def predict_conventional(dev_s1: DeviceModel, dev_s2: DeviceModel, v_dc, delta_v):
    """Conventional energy-balance E_on estimate (no load-current or commutation terms).

    Residual stored energy of the turning-on switch plus the charging loss
    of the complementary switch drawn from the DC link.
    """
    if not (0.0 <= delta_v <= v_dc):
        raise InputError("delta_v outside [0, v_dc]")
    dq = dev_s2.q_oss(v_dc) - dev_s2.q_oss(v_dc - delta_v)
    de = dev_s2.e_oss(v_dc) - dev_s2.e_oss(v_dc - delta_v)
    return dev_s1.e_oss(delta_v) + v_dc * dq - de


def error_metrics(measured, predicted_conv, predicted_prop):
    """Relative errors against the measurement and the error-reduction ratio."""
    if measured <= 0.0:
        raise InputError("measured energy must be positive")
    err_conv = (predicted_conv - measured) / measured
    err_prop = (predicted_prop - measured) / measured
    reduction = abs(err_conv) / abs(err_prop) if err_prop != 0.0 else math.inf
    return err_conv, err_prop, reduction


# ---------------------------------------------------------------------------
# trace-level gathering and reporting

def gather_prediction_inputs(trace: WaveformTrace, timeline, config) -> PredictionInputs:
    """Build ledger inputs from a simulated trace over onset .. end of VF."""
    t0 = timeline.onset
    t1 = timeline.first("VFEnd")
    if t1 is None:
        t1 = trace.t_end
    t = trace.t
    vds1 = trace.column("v_ds_s1")
    vds2 = trace.column("v_ds_s2")
    i_rs2 = trace.column("i_rs2")
    i_l = trace.column("i_l")
    delta_v = float(np.interp(t0, t, vds1))
    delta_v = min(max(delta_v, 0.0), config.v_dc)
    v_gp = None
    mi = timeline.miller_interval()
    if mi is not None:
        vgs = trace.column("v_gs_s1")
        mask = (t >= mi[0]) & (t <= mi[1])
        if mask.any():
            v_gp = float(np.median(vgs[mask]))
    return PredictionInputs(
        v_dc=config.v_dc, delta_v=delta_v, t_start=t0, t_end=t1,
        int_i_rs2=trapezoid_integral(trace, i_rs2, t0, t1),
        int_v_ds2_i_rs2=trapezoid_integral(trace, vds2 * i_rs2, t0, t1),
        int_i_l=trapezoid_integral(trace, i_l, t0, t1),
        int_v_ds2_i_l=trapezoid_integral(trace, vds2 * i_l, t0, t1),
        dev_s1=config.dev_s1, dev_s2=config.dev_s2,
        c_par_s1=config.dev_s1.c_par, c_par_s2=config.dev_s2.c_par,
        v_gp=v_gp)


def trace_energy_balance(system, trace: WaveformTrace, window=None):
    """Simulation-level conservation check over a window (defaults to the whole trace).

    Stored energy in every capacitance (including the reverse-recovery
    equivalent) plus the work delivered by the DC source, load and gate
    drivers must balance channel and gate-resistor dissipation.
    """
    cfg = system.config
    t = trace.t
    t0 = trace.t_start if window is None else window[0]
    t1 = trace.t_end if window is None else window[1]
    vds1 = trace.column("v_ds_s1")
    vds2 = trace.column("v_ds_s2")
    vgs1 = trace.column("v_gs_s1")
    vgs2 = trace.column("v_gs_s2")
    i_rs1 = trace.column("i_rs1")
    i_rs2 = trace.column("i_rs2")
    i_g1 = trace.column("i_g_s1")
    i_g2 = trace.column("i_g_s2")
    i_dc = trace.column("i_dc")
    i_l = trace.column("i_l")
    drv1 = np.array([system.drive_s1(tk) for tk in t])
    drv2 = np.array([system.drive_s2(tk) for tk in t])

    def stored_at(tq):
        x, _ = trace.hermite_eval(tq)
        vgs1k, vgs2k, vmk, _, q_rr = x
        vd1, vd2 = cfg.v_dc - vmk, vmk
        vdg1, vdg2 = vd1 - vgs1k, vd2 - vgs2k
        d1, d2 = cfg.dev_s1, cfg.dev_s2
        e = 0.5 * d1.c_gs * vgs1k ** 2 + 0.5 * d2.c_gs * vgs2k ** 2
        e += d1.c_gd.energy_quadrature(0.0, vdg1) + d2.c_gd.energy_quadrature(0.0, vdg2)
        e += d1.c_ds.energy_quadrature(0.0, vd1) + d2.c_ds.energy_quadrature(0.0, vd2)
        e += 0.5 * d1.c_par_gd * vdg1 ** 2 + 0.5 * d2.c_par_gd * vdg2 ** 2
        e += 0.5 * d1.c_par_ds * vd1 ** 2 + 0.5 * d2.c_par_ds * vd2 ** 2
        return e

    integ = lambda arr: trapezoid_integral(trace, arr, t0, t1)
    e_initial = stored_at(t0)
    e_final = stored_at(t1)
    w_dc = integ(cfg.v_dc * i_dc)
    w_load = integ(vds2 * i_l)
    w_drv1 = integ(drv1 * i_g1)
    w_drv2 = integ(drv2 * i_g2)
    e_ch1 = integ(vds1 * i_rs1)
    e_ch2 = integ(vds2 * i_rs2)
    e_rg1 = integ(cfg.r_g_s1 * i_g1 ** 2)
    e_rg2 = integ(cfg.r_g_s2 * i_g2 ** 2)
    # charge extracted through the recovery capacitance stays absorbed in the
    # device, so its energy counts as dissipation, not recoverable storage
    e_rr = integ(vds2 * trace.column("i_crr_s2")) if "i_crr_s2" in trace.data else 0.0
    residual = (e_initial + w_dc + w_load + w_drv1 + w_drv2
                - e_final - e_ch1 - e_ch2 - e_rg1 - e_rg2 - e_rr)
    return {
        "e_initial": e_initial, "e_final": e_final,
        "w_dc": w_dc, "w_load": w_load, "w_driver_s1": w_drv1, "w_driver_s2": w_drv2,
        "e_channel_s1": e_ch1, "e_channel_s2": e_ch2,
        "e_gate_resistor_s1": e_rg1, "e_gate_resistor_s2": e_rg2,
        "e_reverse_recovery": e_rr,
        "residual": residual,
        "residual_rel_e_initial": abs(residual) / abs(e_initial) if e_initial else math.inf,
    }


def build_energy_report(system, trace: WaveformTrace, timeline,
                        closure: AnalyticClosure | None = None) -> EnergyReport:
    """Assemble the full per-run energy report (all pipelines, terms, residuals)."""
    cfg = system.config
    inputs = gather_prediction_inputs(trace, timeline, cfg)
    window = (inputs.t_start, inputs.t_end)
    direct = e_on_direct(trace, window)
    direct_full = e_on_direct(trace)
    charge, terms = charge_ledger_e_on(inputs)
    energy, ledgers = energy_ledger_e_on(inputs)
    closure = closure or AnalyticClosure(r_g=cfg.r_g_s1, v_gate_on=cfg.gate_on)
    i_l0 = cfg.load.signed_current
    try:
        proposed, details = predict_proposed_analytic(
            cfg.dev_s1, cfg.dev_s2, cfg.dev_s1.c_par, cfg.dev_s2.c_par,
            cfg.v_dc, inputs.delta_v, i_l0, closure)
    except InputError:
        proposed, details = None, {}
    conventional = predict_conventional(cfg.dev_s1, cfg.dev_s2, cfg.v_dc, inputs.delta_v)
    balance = trace_energy_balance(system, trace)
    residuals = {
        "direct_vs_charge_ledger": charge - direct,
        "direct_vs_charge_ledger_rel": abs(charge - direct) / abs(direct) if direct else math.inf,
        "charge_vs_energy_ledger": charge - energy,
        "charge_vs_energy_ledger_rel": abs(charge - energy) / max(abs(charge), 1e-30),
        "simulation_energy_balance": balance["residual"],
        "simulation_energy_balance_rel": balance["residual_rel_e_initial"],
    }
    ledgers = dict(ledgers)
    ledgers.update({f"balance_{k}": v for k, v in balance.items()})
    if details:
        ledgers.update({f"closure_{k}": v for k, v in details.items()
                        if k in ("t_diss", "t_cc", "t_vf", "v_gp",
                                 "plateau_current", "net_charging_current")})
    return EnergyReport(
        e_on_direct=direct,
        e_on_direct_full=direct_full,
        e_on_charge_ledger=charge,
        e_on_energy_ledger=energy,
        e_on_proposed_analytic=proposed,
        e_on_conventional=conventional,
        terms=terms,
        ledgers=ledgers,
        residuals=residuals,
        t_diss=inputs.t_diss,
        window=window,
        delta_v=inputs.delta_v,
        v_gp=inputs.v_gp,
    )
