"""Scenario classification and phase segmentation of turn-on waveform traces.

Event kinds follow the turn-on timeline: Onset (gate reaches threshold with
the channel engaging), CCComplete (load current fully commutated), VFStart /
VFEnd (drain-source collapse of the switching device), RRStart / RRPeak /
RRExhausted (reverse recovery of the complementary switch), IDCReversal
(DC-source current changes direction), MillerStart / MillerSub2..4 /
MillerEnd (gate plateau and its sub-phases), SettleStart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit import CircuitState, HalfBridgeConfig
from .device import DeviceModel
from .errors import ClassificationError, InputError, NotSwitchedError
from .solver import WaveformTrace

PLATEAU_EPS = 0.1          # plateau slope threshold relative to post-onset peak slope
MIN_SWING_FRACTION = 0.05  # v_ds swing below this fraction of v_dc -> no Miller platform
VF_END_FRACTION = 0.005    # VF ends when v_ds_s1 is within 0.5% of swing of its settle value
SETTLE_BAND = 0.02


@dataclass(frozen=True)
class PhaseEvent:
    t: float
    kind: str
    note: str = ""


@dataclass
class PhaseTimeline:
    scenario: str
    onset: float
    events: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def kinds(self):
        return [e.kind for e in self.events]

    def has(self, kind):
        return any(e.kind == kind for e in self.events)

    def times_of(self, kind):
        return [e.t for e in self.events if e.kind == kind]

    def first(self, kind):
        times = self.times_of(kind)
        return times[0] if times else None

    def sorted_events(self):
        return sorted(self.events, key=lambda e: e.t)

    def miller_interval(self):
        start, end = self.first("MillerStart"), self.first("MillerEnd")
        return (start, end) if start is not None and end is not None else None

    def to_json(self, path=None):
        payload = {
            "scenario": self.scenario,
            "onset": self.onset,
            "events": [{"t": e.t, "kind": e.kind, "note": e.note}
                       for e in self.sorted_events()],
            "warnings": list(self.warnings),
        }
        if path is not None:
            Path(path).write_text(json.dumps(payload, indent=2))
        return payload


def classify_scenario(config: HalfBridgeConfig, initial: CircuitState) -> str:
    """Label the switching scenario from load direction, residual v_ds and conduction state.

    ZVS and case-1 incomplete ZVS carry the load current into the midpoint
    (S1 reverse-conducts it in ZVS); hard switching and case-2 carry it out
    of the midpoint (S2 reverse-conducts it in HS).
    """
    v_dc = config.v_dc
    i_l = initial.i_l
    v_ds1 = v_dc - initial.v_m
    eps_v = 0.02 * v_dc
    if i_l == 0.0:
        raise ClassificationError(
            "ambiguous scenario: i_L = 0 with v_ds_s1 = "
            f"{v_ds1:.3g} V; no conduction path identifies ZVS/HS and no load "
            "direction separates the incomplete-ZVS cases")
    i_rs1 = config.dev_s1.channel_current(initial.v_gs_s1, v_ds1)
    i_rs2 = config.dev_s2.channel_current(initial.v_gs_s2, initial.v_m)
    eps_i = 1e-3 * abs(i_l)
    if i_l > 0.0:
        if i_rs1 < -eps_i or v_ds1 <= eps_v:
            return "ZVS"
        return "iZVS_case1"
    if i_rs2 < -eps_i or v_ds1 >= v_dc - eps_v:
        return "HS"
    return "iZVS_case2"


def _upward_crossings(t, y, level):
    idx = np.where((y[:-1] < level) & (y[1:] >= level))[0]
    out = []
    for k in idx:
        if y[k + 1] == y[k]:
            out.append((t[k + 1], k))
        else:
            w = (level - y[k]) / (y[k + 1] - y[k])
            out.append((t[k] + w * (t[k + 1] - t[k]), k))
    return out


def detect_onset(trace: WaveformTrace, dev_s1: DeviceModel, min_hold=None) -> float:
    """Earliest v_th crossing of v_gs_s1 that engages the channel.

    A crossing qualifies when the channel resistance is finite over a
    sustained hold window afterwards; sub-threshold blips and ringing
    crossings that never conduct are rejected.
    """
    t = trace.t
    vgs = trace.column("v_gs_s1")
    vds1 = trace.column("v_ds_s1")
    crossings = _upward_crossings(t, vgs, dev_s1.v_th)
    if not crossings:
        raise NotSwitchedError(
            f"v_gs_s1 never crosses v_th = {dev_s1.v_th:g} V from below")
    if min_hold is None:
        min_hold = 0.02 * (t[-1] - t[0])
    down = np.where((vgs[:-1] >= dev_s1.v_th) & (vgs[1:] < dev_s1.v_th))[0]
    for t_c, k in crossings:
        k_next = len(t) - 1
        later = down[down > k]
        if len(later):
            k_next = later[0]
        hold = t[k_next] - t_c
        window = slice(k + 1, max(k + 2, k_next + 1))
        finite = [np.isfinite(dev_s1.r_s(vg, vd))
                  for vg, vd in zip(vgs[window], vds1[window])]
        if hold >= min_hold and len(finite) and np.mean(finite) >= 0.9:
            return float(t_c)
    raise NotSwitchedError("no threshold crossing with sustained finite channel resistance")


def _first_crossing_after(t, y, t_min, rising=True):
    mask = t[:-1] >= t_min
    if rising:
        idx = np.where(mask & (y[:-1] < 0.0) & (y[1:] >= 0.0))[0]
    else:
        idx = np.where(mask & (y[:-1] > 0.0) & (y[1:] <= 0.0))[0]
    if not len(idx):
        return None
    k = idx[0]
    if y[k + 1] == y[k]:
        return float(t[k + 1])
    w = -y[k] / (y[k + 1] - y[k])
    return float(t[k] + w * (t[k + 1] - t[k]))


def _knee_of_combined(dev: DeviceModel, use="oss", factor=2.0):
    """Voltage where the (combined) capacitance drops to factor x its high-V value."""
    if use == "gd":
        return dev.c_gd.knee_voltage(factor)
    v_hi = min(dev.c_gd.v_max, dev.c_ds.v_max)
    grid = np.linspace(0.0, v_hi, 2000)
    c = dev.c_gd.curve.eval_many(grid) + dev.c_ds.curve.eval_many(grid)
    target = factor * c[-1]
    if c[0] <= target:
        return None
    below = np.where(c <= target)[0]
    if not len(below):
        return None
    k = below[0]
    w = (target - c[k - 1]) / (c[k] - c[k - 1])
    return float(grid[k - 1] + w * (grid[k] - grid[k - 1]))


def _marker_time(trace, kind, t_min=None):
    times = [m.t for m in trace.markers
             if m.kind == kind and (t_min is None or m.t >= t_min)]
    return min(times) if times else None


def segment(trace: WaveformTrace, scenario: str,
            dev_s1: DeviceModel | None = None,
            dev_s2: DeviceModel | None = None) -> PhaseTimeline:
    """Segment a classified trace into the scenario's phase timeline.

    Missing expected events produce warnings on the timeline, not errors
    (device data may legitimately suppress features, e.g. q_rr = 0 means
    no reverse-recovery markers).
    """
    t = trace.t
    vgs1 = trace.column("v_gs_s1")
    vds1 = trace.column("v_ds_s1")
    i_rs1 = trace.column("i_rs1")
    i_l = trace.column("i_l")
    events = []
    warnings = []

    # onset
    onset = _marker_time(trace, "onset_vth")
    if onset is None:
        if dev_s1 is None:
            raise InputError("segment: need dev_s1 (or an onset marker) to locate the onset")
        onset = detect_onset(trace, dev_s1)
    events.append(PhaseEvent(onset, "Onset"))

    # current commutation completion
    cc = _marker_time(trace, "cc_complete", t_min=onset)
    if cc is None:
        if scenario in ("HS", "iZVS_case2"):
            e = i_rs1 + i_l
        elif scenario == "iZVS_case1":
            e = np.abs(i_rs1) - np.abs(trace.column("i_c_s1"))
        else:
            e = np.abs(i_rs1) - np.abs(i_l)
        cc = _first_crossing_after(t, e, onset, rising=True)
    if cc is None:
        warnings.append("CCComplete not found: commutation event function never crosses zero")
    else:
        events.append(PhaseEvent(cc, "CCComplete"))

    # voltage fall
    v_settle = float(vds1[-1])
    k_on = int(np.searchsorted(t, onset))
    v_onset = float(np.interp(onset, t, vds1))
    swing = v_onset - v_settle
    vf_start = cc if scenario != "ZVS" else None
    vf_end = None
    if scenario != "ZVS":
        if vf_start is not None and swing > 0.0:
            events.append(PhaseEvent(vf_start, "VFStart"))
            band = v_settle + VF_END_FRACTION * swing
            vf_end = _first_crossing_after(t, vds1 - band, vf_start, rising=False)
            if vf_end is None:
                warnings.append("VFEnd not found: v_ds_s1 never reaches its settle band")
            else:
                events.append(PhaseEvent(vf_end, "VFEnd"))
        else:
            warnings.append("VF not found: no voltage swing after commutation")

    # reverse recovery (HS with q_rr > 0)
    if "i_crr_s2" in trace.data:
        i_crr = trace.column("i_crr_s2")
        peak = float(np.max(np.abs(i_crr)))
        if peak > 0.0:
            k_rr = np.where(np.abs(i_crr) > 0.02 * peak)[0]
            if len(k_rr):
                events.append(PhaseEvent(float(t[k_rr[0]]), "RRStart"))
                events.append(PhaseEvent(float(t[np.argmax(np.abs(i_crr))]), "RRPeak"))
            t_exh = _marker_time(trace, "rr_exhausted")
            if t_exh is not None:
                events.append(PhaseEvent(t_exh, "RRExhausted"))
        elif scenario == "HS":
            warnings.append("RR not found: no reverse-recovery current (q_rr = 0?)")

    # i_DC direction reversals (debounced sign changes after onset)
    if "i_dc" in trace.data:
        idc = trace.column("i_dc")
        peak = float(np.max(np.abs(idc)))
        if peak > 0.0:
            sgn = np.sign(idc)
            sgn[np.abs(idc) < 0.02 * peak] = 0
            last_sign = 0
            last_k = 0
            for k in range(len(sgn)):
                s = sgn[k]
                if s == 0:
                    continue
                if last_sign != 0 and s != last_sign and t[k] >= onset:
                    seg_t = t[last_k:k + 1]
                    seg_y = idc[last_k:k + 1] * last_sign
                    t_rev = _first_crossing_after(seg_t, seg_y, seg_t[0], rising=False)
                    events.append(PhaseEvent(
                        t_rev if t_rev is not None else float(t[k]), "IDCReversal"))
                last_sign, last_k = s, k

    # Miller platform
    v_dc = trace.metadata.get("v_dc", float(np.max(np.abs(vds1))))
    dvgs = trace.data.get("d_v_gs_s1_dt")
    platform = None
    if swing >= MIN_SWING_FRACTION * v_dc and dvgs is not None and vf_end is not None:
        sl = np.abs(dvgs)
        k_end = int(np.searchsorted(t, vf_end, side="right"))
        peak_slope = float(np.max(sl[k_on:k_end])) if k_end > k_on else 0.0
        lo_band = v_settle + SETTLE_BAND * swing
        hi_band = v_onset - SETTLE_BAND * swing
        ok = ((sl < PLATEAU_EPS * peak_slope)
              & (vds1 > lo_band) & (vds1 < hi_band)
              & (t >= onset))
        runs = []
        start = None
        for k in range(len(ok)):
            if ok[k] and start is None:
                start = k
            elif not ok[k] and start is not None:
                runs.append((start, k - 1))
                start = None
        if start is not None:
            runs.append((start, len(ok) - 1))
        runs = [r for r in runs if r[1] > r[0]]
        if runs:
            lo, hi = max(runs, key=lambda r: t[r[1]] - t[r[0]])
            # the platform ends with a gate-voltage dip and recovery; the
            # slope criterion truncates it, so extend until v_gs climbs past
            # the core level again (capped shortly after the voltage fall)
            level_hi = float(np.max(vgs1[lo:hi + 1])) + 0.3
            cap_t = vf_end + 0.15 * (vf_end - onset)
            while hi + 1 < len(t) and t[hi + 1] <= cap_t and vgs1[hi + 1] <= level_hi:
                hi += 1
            platform = (float(t[lo]), float(t[hi]))
            events.append(PhaseEvent(platform[0], "MillerStart"))
            events.append(PhaseEvent(platform[1], "MillerEnd"))
    if platform is None and scenario != "ZVS":
        warnings.append("Miller platform not found")

    # Miller sub-phase boundaries
    if platform is not None:
        p0, p1 = platform
        bounds = []
        if dev_s2 is not None:
            knee2 = _knee_of_combined(dev_s2, use="oss")
            if knee2 is not None:
                vds2 = trace.column("v_ds_s2")
                t_a = _first_crossing_after(t, vds2 - knee2, p0, rising=True)
                if t_a is not None and t_a < p1:
                    bounds.append((t_a, "complementary output capacitance leaves "
                                        "its high-capacitance region"))
        ks = np.where((t >= p0) & (t <= p1))[0]
        if len(ks) > 2:
            k_pk = ks[int(np.argmax(i_rs1[ks]))]
            if ks[0] < k_pk < ks[-1]:
                bounds.append((float(t[k_pk]), "channel current peaks"))
        if dev_s1 is not None:
            knee1 = dev_s1.c_gd.knee_voltage()
            if knee1 is not None:
                t_c = _first_crossing_after(t, vds1 - knee1, p0, rising=False)
                if t_c is not None and t_c < p1:
                    bounds.append((t_c, "gate-drain capacitance enters its "
                                        "high-capacitance region"))
        bounds = sorted(b for b in bounds if p0 < b[0] < p1)
        deduped = []
        for b in bounds:
            if not deduped or b[0] - deduped[-1][0] > 1e-3 * (p1 - p0):
                deduped.append(b)
        for j, (tb, note) in enumerate(deduped[:3]):
            events.append(PhaseEvent(tb, f"MillerSub{j + 2}", note))
        if len(deduped) < 3:
            warnings.append(f"only {len(deduped)} Miller sub-phase boundaries detected")

    # settling
    vgs_end = float(vgs1[-1])
    vgs_span = max(abs(vgs_end - float(np.interp(onset, t, vgs1))), 1e-12)
    v_span = max(abs(swing), 1e-12)
    off = (np.abs(vds1 - v_settle) > SETTLE_BAND * v_span) | \
          (np.abs(vgs1 - vgs_end) > SETTLE_BAND * vgs_span)
    still_moving = np.where(off)[0]
    if len(still_moving) and still_moving[-1] + 1 < len(t):
        events.append(PhaseEvent(float(t[still_moving[-1] + 1]), "SettleStart"))

    timeline = PhaseTimeline(scenario=scenario, onset=onset,
                             events=sorted(events, key=lambda e: e.t),
                             warnings=warnings)
    return timeline
