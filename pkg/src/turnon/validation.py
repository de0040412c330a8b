"""Embedded measurement-comparison dataset and its reproduction machinery.

The dataset holds thirty published turn-on energy operating points for two
SiC MOSFET classes (25 mΩ and 80 mΩ) at two DC-link voltages, with measured
energies, both prediction models' values, their relative errors and the
error-reduction ratios. verify_dataset_arithmetic() recomputes all derived
columns; run_dataset_predictions() re-evaluates both prediction models from
supplied device curve files (best-effort: the original per-row load
currents are not published, so an implied load current is reported per row
alongside fixed-assumption deviations).
"""

from __future__ import annotations

import csv
import importlib.resources
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .device import CapacitanceCurve, DeviceModel, load_device
from .energy import (AnalyticClosure, error_metrics, predict_conventional,
                     predict_proposed_analytic)

@dataclass(frozen=True)
class Table1Row:
    r_ds_class: int      # mΩ
    v_dc: float          # V
    delta_v: float       # V
    measured: float      # µJ
    conv_pred: float     # µJ
    prop_pred: float     # µJ
    err_conv: float      # %
    err_prop: float      # %
    reduction: float     # ratio


def load_dataset():
    ref = importlib.resources.files("turnon.data").joinpath("table1.csv")
    rows = []
    with ref.open(newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(Table1Row(
                r_ds_class=int(rec["r_ds_class_mohm"]),
                v_dc=float(rec["v_dc"]),
                delta_v=float(rec["delta_v"]),
                measured=float(rec["measured_uj"]),
                conv_pred=float(rec["conv_pred_uj"]),
                prop_pred=float(rec["prop_pred_uj"]),
                err_conv=float(rec["err_conv_pct"]),
                err_prop=float(rec["err_prop_pct"]),
                reduction=float(rec["reduction"]),
            ))
    return rows


def _rounding_envelope_pct(measured, predicted, decimals=2):
    """Worst-case shift of the error percentage from rounding both µJ inputs."""
    d = 0.5 * 10.0 ** (-decimals)
    base = (predicted - measured) / measured
    worst = 0.0
    for dm in (-d, d):
        for dp in (-d, d):
            e = (predicted + dp - (measured + dm)) / (measured + dm)
            worst = max(worst, abs(e - base))
    return worst * 100.0


def verify_dataset_arithmetic():
    """Recompute every derived column; returns a report dict with per-row checks.

    Published percentages are rounded to two decimals, so the tolerance is
    0.1 percentage points plus the exact per-row input-rounding envelope.
    """
    rows = load_dataset()
    checks = []
    for row in rows:
        err_c, err_p, red = error_metrics(row.measured, row.conv_pred, row.prop_pred)
        err_c *= 100.0
        err_p *= 100.0
        env_c = _rounding_envelope_pct(row.measured, row.conv_pred)
        env_p = _rounding_envelope_pct(row.measured, row.prop_pred)
        red_pub = abs(row.err_conv) / abs(row.err_prop)
        red_tol = 0.02 + env_c / abs(err_c) + env_p / abs(err_p)
        checks.append({
            "r_ds_class": row.r_ds_class, "v_dc": row.v_dc, "delta_v": row.delta_v,
            "err_conv_recomputed": err_c, "err_conv_published": row.err_conv,
            "err_prop_recomputed": err_p, "err_prop_published": row.err_prop,
            "reduction_recomputed": red, "reduction_published": row.reduction,
            "err_conv_ok": abs(err_c - row.err_conv) <= 0.1 + env_c,
            "err_prop_ok": abs(err_p - row.err_prop) <= 0.1 + env_p,
            "reduction_ok": (abs(red - row.reduction) / row.reduction <= red_tol
                             and abs(red_pub - row.reduction) / row.reduction <= red_tol),
        })
    err_conv = [r.err_conv for r in rows]
    err_prop = [r.err_prop for r in rows]
    reductions = [r.reduction for r in rows]
    mean_of_ratios = float(np.mean(reductions))
    ratio_of_means = float(np.mean(np.abs(err_conv)) / np.mean(np.abs(err_prop)))
    return {
        "rows": checks,
        "n_rows": len(rows),
        "all_ok": all(c["err_conv_ok"] and c["err_prop_ok"] and c["reduction_ok"]
                      for c in checks),
        "conv_error_range_pct": [min(err_conv), max(err_conv)],
        "prop_error_range_pct": [min(err_prop), max(err_prop)],
        "prop_error_magnitude_max_pct": max(abs(e) for e in err_prop),
        "mean_reduction_of_row_ratios": mean_of_ratios,
        "reduction_of_mean_errors": ratio_of_means,
    }


# ---------------------------------------------------------------------------
# curve-dependent reproduction

def fit_coss_to_conventional(rows, v_max=1000.0, x0=None, bounds=None):
    """Back out a parametric C_oss(v) from the conventional-prediction column.

    The conventional estimate is a pure functional of the output-capacitance
    curve, so the published column constrains the digitization. The fitted
    form is c_inf + c0 / (1 + v/v0)^gamma; returns (params, rel_rms).
    """
    v_grid = np.linspace(0.0, v_max, 4001)

    def conv_model(p, v_dc, dv):
        c_inf, c0, v0, gamma = p
        c = c_inf + c0 / (1.0 + v_grid / v0) ** gamma
        # E_oss(dv) + integral of (v_dc - v) C(v) over the recharge span
        k1 = v_grid <= dv
        e_s1 = np.trapezoid(v_grid[k1] * c[k1], v_grid[k1])
        k2 = (v_grid >= v_dc - dv) & (v_grid <= v_dc)
        chg = np.trapezoid((v_dc - v_grid[k2]) * c[k2], v_grid[k2])
        return e_s1 + chg

    def residuals(p):
        return [math.log(conv_model(p, r.v_dc, r.delta_v) / (r.conv_pred * 1e-6))
                for r in rows]

    x0 = x0 or (150e-12, 3e-9, 10.0, 1.2)
    bounds = bounds or ([20e-12, 0.2e-9, 0.5, 0.4], [800e-12, 40e-9, 80.0, 2.5])
    sol = least_squares(residuals, x0, bounds=bounds)
    rel_rms = float(np.sqrt(np.mean(np.square(np.expm1(sol.fun)))))
    return tuple(sol.x), rel_rms


def run_dataset_predictions(curve_dir, closure=None, i_l_by_row=None):
    """Re-evaluate both prediction models per dataset row from device curve files.

    curve_dir must contain <class>mohm.json device manifests (e.g.
    25mohm.json, 80mohm.json). Rows without a manifest are skipped with a
    notice. Because the original load currents are unpublished, each row
    reports (a) predictions under a documented default load-current
    assumption (or i_l_by_row overrides) and (b) the implied load current
    that would reproduce the published proposed value.
    """
    curve_dir = Path(curve_dir)
    closure = closure or AnalyticClosure()
    rows = load_dataset()
    devices = {}
    notices = []
    for cls in sorted({r.r_ds_class for r in rows}):
        manifest = curve_dir / f"{cls}mohm.json"
        if manifest.is_file():
            devices[cls] = load_device(manifest)
        else:
            notices.append(f"no device manifest for {cls} mΩ class "
                           f"(expected {manifest.name}); rows skipped")
    out_rows = []
    for row in rows:
        dev = devices.get(row.r_ds_class)
        if dev is None:
            continue
        conv = predict_conventional(dev, dev, row.v_dc, row.delta_v) * 1e6
        i_l_mag = None
        if i_l_by_row:
            i_l_mag = i_l_by_row.get((row.r_ds_class, row.v_dc, row.delta_v))
        if i_l_mag is None:
            i_l_mag = default_load_current(dev, row.v_dc, row.delta_v)
        prop, details = predict_proposed_analytic(
            dev, dev, dev.c_par, dev.c_par, row.v_dc, row.delta_v,
            -i_l_mag, closure)
        prop *= 1e6
        implied = implied_load_current(dev, row.v_dc, row.delta_v,
                                       row.prop_pred * 1e-6, closure)
        rec = {
            "r_ds_class": row.r_ds_class, "v_dc": row.v_dc, "delta_v": row.delta_v,
            "measured_uj": row.measured,
            "conv_published_uj": row.conv_pred, "conv_recomputed_uj": conv,
            "conv_deviation_pct": (conv - row.conv_pred) / row.conv_pred * 100.0,
            "prop_published_uj": row.prop_pred, "prop_recomputed_uj": prop,
            "prop_deviation_pct": (prop - row.prop_pred) / row.prop_pred * 100.0,
            "assumed_i_l_a": i_l_mag,
            "implied_i_l_a": implied,
        }
        rec.update({f"term_{k}": v for k, v in details.items()})
        out_rows.append(rec)
    summary = {}
    if out_rows:
        conv_dev = [abs(r["conv_deviation_pct"]) for r in out_rows]
        prop_dev = [abs(r["prop_deviation_pct"]) for r in out_rows]
        summary = {
            "n_rows_evaluated": len(out_rows),
            "conv_abs_deviation_mean_pct": float(np.mean(conv_dev)),
            "conv_abs_deviation_max_pct": float(np.max(conv_dev)),
            "prop_abs_deviation_mean_pct": float(np.mean(prop_dev)),
            "prop_abs_deviation_max_pct": float(np.max(prop_dev)),
        }
    return {"rows": out_rows, "notices": notices, "summary": summary}


def default_load_current(dev: DeviceModel, v_dc, delta_v):
    """Documented load-current assumption for dataset rows.

    The original per-row currents are unpublished. These round values sit in
    the middle of the implied-current diagnostic (the current at which the
    proposed model reproduces each published value), which comes out
    remarkably consistent within each DC-link group; every report carries
    both the assumption and the per-row implied current.
    """
    return 13.0 if v_dc <= 200.0 else 18.0


def implied_load_current(dev: DeviceModel, v_dc, delta_v, target_e_on,
                         closure=None, i_max=400.0):
    """Load current magnitude at which the proposed model hits target_e_on."""
    closure = closure or AnalyticClosure()
    from .errors import InputError

    def f(i_mag):
        e, _ = predict_proposed_analytic(dev, dev, dev.c_par, dev.c_par,
                                         v_dc, delta_v, -i_mag, closure)
        return e - target_e_on

    lo, hi = 1e-3, i_max
    if f(lo) > 0.0:
        return 0.0
    while hi > lo:
        try:
            f_hi = f(hi)
            break
        except InputError:  # beyond the gate drive's conduction capability
            hi *= 0.7
    else:
        return math.inf
    if f_hi < 0.0:
        return math.inf
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def write_report_csv(report, path):
    path = Path(path)
    rows = report["rows"]
    if not rows:
        path.write_text("")
        return path
    names = list(rows[0].keys())
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
    return path
