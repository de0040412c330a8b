"""Command-line front end: simulate, predict, sweep, validate, phases.

Every run writes a manifest.json (tool version, arguments, input content
hashes) into the output directory; delimited outputs carry the manifest
hash as a comment line and JSON outputs embed it, so any artifact can be
traced back to its exact inputs. All file values are SI units; µJ and ns
appear only in printed human-readable tables.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import config_digest, load_config
from .device import load_device
from .energy import (AnalyticClosure, build_energy_report,
                     predict_conventional, predict_proposed_analytic)
from .errors import ConfigurationError, InputError, IntegrationError
from .phases import segment
from .plotting import plot_prediction_comparison, plot_sweep, plot_waveforms
from .simulate import simulate
from .solver import SolverSettings, WaveformTrace
from .validation import (run_dataset_predictions, verify_dataset_arithmetic,
                         write_report_csv)


@dataclass
class RunManifest:
    command: str
    arguments: dict
    input_hashes: dict
    tool_version: str = __version__
    outputs: list = field(default_factory=list)

    @property
    def digest(self):
        payload = json.dumps(
            {"command": self.command, "arguments": self.arguments,
             "input_hashes": self.input_hashes, "tool_version": self.tool_version},
            sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def write(self, outdir: Path):
        path = outdir / "manifest.json"
        path.write_text(json.dumps(
            {"command": self.command, "arguments": self.arguments,
             "input_hashes": self.input_hashes, "tool_version": self.tool_version,
             "manifest": self.digest, "outputs": self.outputs}, indent=2))
        return path


def _hash_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _write_json(path, payload, manifest):
    payload = dict(payload)
    payload["manifest"] = manifest.digest
    Path(path).write_text(json.dumps(payload, indent=2, default=_json_default))
    manifest.outputs.append(Path(path).name)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _write_csv(path, rows, manifest):
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# manifest: {manifest.digest}\n")
        if rows:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    manifest.outputs.append(path.name)
    return path


def _solver_settings(args):
    kwargs = {}
    if args.rel_tol is not None:
        kwargs["rel_tol"] = args.rel_tol
    if args.abs_tol is not None:
        kwargs["abs_tol"] = args.abs_tol
    if args.max_step is not None:
        kwargs["max_step"] = args.max_step
    return SolverSettings(**kwargs)


def cmd_simulate(args):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    overrides = {}
    if args.delta_v is not None:
        overrides["delta_v"] = args.delta_v
    config = load_config(args.config, overrides=overrides)
    manifest = RunManifest(
        command="simulate",
        arguments={"config": str(args.config), "t_end": args.t_end,
                   "rel_tol": args.rel_tol, "abs_tol": args.abs_tol,
                   "delta_v": args.delta_v},
        input_hashes={"config": config_digest(args.config)})

    trace, system = simulate(config, _solver_settings(args), t_end=args.t_end)
    timeline = segment(trace, config.scenario, config.dev_s1, config.dev_s2)
    report = build_energy_report(system, trace, timeline)

    trace.to_csv(outdir / "trace.csv",
                 extra_header_lines=[f"manifest: {manifest.digest}"])
    manifest.outputs += ["trace.csv", "trace.csv.markers.json"]
    _write_json(outdir / "timeline.json", timeline.to_json(), manifest)
    _write_json(outdir / "energy.json", report.to_json(), manifest)
    if not args.no_svg:
        plot_waveforms(trace, timeline, outdir / "waveforms.svg",
                       metadata={"Description": f"manifest: {manifest.digest}"})
        manifest.outputs.append("waveforms.svg")
    manifest.write(outdir)

    print(f"scenario           : {config.scenario}")
    print(f"onset              : {timeline.onset * 1e9:.3f} ns")
    print(f"window (t_diss)    : {report.t_diss * 1e9:.3f} ns")
    print(f"E_on direct        : {report.e_on_direct * 1e6:.4f} µJ")
    print(f"E_on charge ledger : {report.e_on_charge_ledger * 1e6:.4f} µJ")
    print(f"E_on energy ledger : {report.e_on_energy_ledger * 1e6:.4f} µJ")
    if report.e_on_proposed_analytic is not None:
        print(f"E_on proposed      : {report.e_on_proposed_analytic * 1e6:.4f} µJ")
    print(f"E_on conventional  : {report.e_on_conventional * 1e6:.4f} µJ")
    for w in timeline.warnings:
        print(f"warning: {w}")
    print(f"outputs in {outdir}")
    return 0


def _predict_row(dev1, dev2, v_dc, delta_v, i_l_signed, closure):
    prop, details = predict_proposed_analytic(
        dev1, dev2, dev1.c_par, dev2.c_par, v_dc, delta_v, i_l_signed, closure)
    conv = predict_conventional(dev1, dev2, v_dc, delta_v)
    row = {"v_dc": v_dc, "delta_v": delta_v, "i_l_into_midpoint": i_l_signed,
           "e_on_proposed_j": prop, "e_on_conventional_j": conv}
    row.update({f"term_{k}": v for k, v in details.items()})
    return row


def cmd_predict(args):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    dev1 = load_device(args.dev_s1)
    dev2 = load_device(args.dev_s2 or args.dev_s1)
    closure = AnalyticClosure(r_g=args.r_g, v_gate_on=args.v_gate_on)
    i_l_signed = args.i_l if args.direction == "into_midpoint" else -args.i_l
    deltas = args.delta_v
    manifest = RunManifest(
        command="predict",
        arguments={"dev_s1": str(args.dev_s1), "dev_s2": str(args.dev_s2 or args.dev_s1),
                   "v_dc": args.v_dc, "delta_v": deltas, "i_l": args.i_l,
                   "direction": args.direction, "r_g": args.r_g,
                   "v_gate_on": args.v_gate_on},
        input_hashes={"dev_s1": _hash_file(args.dev_s1),
                      "dev_s2": _hash_file(args.dev_s2 or args.dev_s1)})
    rows = [_predict_row(dev1, dev2, args.v_dc, dv, i_l_signed, closure)
            for dv in deltas]
    _write_csv(outdir / "predictions.csv", rows, manifest)
    _write_json(outdir / "predictions.json", {"rows": rows}, manifest)
    if len(rows) > 1 and not args.no_svg:
        plot_sweep([r["delta_v"] for r in rows],
                   {"proposed": [r["e_on_proposed_j"] for r in rows],
                    "conventional": [r["e_on_conventional_j"] for r in rows]},
                   outdir / "predictions.svg", xlabel="ΔV (V)",
                   metadata={"Description": f"manifest: {manifest.digest}"})
        manifest.outputs.append("predictions.svg")
    manifest.write(outdir)
    print(f"{'ΔV (V)':>8} {'proposed (µJ)':>14} {'conventional (µJ)':>18}")
    for r in rows:
        print(f"{r['delta_v']:8.1f} {r['e_on_proposed_j'] * 1e6:14.4f} "
              f"{r['e_on_conventional_j'] * 1e6:18.4f}")
    print(f"outputs in {outdir}")
    return 0


def _set_by_path(raw, path, value):
    keys = path.split(".")
    node = raw
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigurationError(f"sweep parameter path '{path}': unknown key '{key}'")
        node = node[key]
    node[keys[-1]] = value


def cmd_sweep(args):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    raw = json.loads(Path(args.config).read_text())
    values = [float(v) for v in args.values.split(",")]
    manifest = RunManifest(
        command="sweep",
        arguments={"config": str(args.config), "param": args.param,
                   "values": values, "mode": args.mode},
        input_hashes={"config": config_digest(args.config)})
    rows = []
    for value in values:
        cfg_raw = json.loads(json.dumps(raw))
        _set_by_path(cfg_raw, args.param, value)
        tmp = Path(args.config).parent / f".sweep_tmp_{manifest.digest}.json"
        tmp.write_text(json.dumps(cfg_raw))
        try:
            config = load_config(tmp)
        finally:
            tmp.unlink(missing_ok=True)
        if args.mode == "simulate":
            settings = SolverSettings() if args.rel_tol is None else \
                SolverSettings(rel_tol=args.rel_tol,
                               abs_tol=args.abs_tol if args.abs_tol else 1e-9)
            trace, system = simulate(config, settings, t_end=args.t_end)
            timeline = segment(trace, config.scenario, config.dev_s1, config.dev_s2)
            report = build_energy_report(system, trace, timeline)
            rows.append({
                "param": args.param, "value": value,
                "e_on_direct_j": report.e_on_direct,
                "e_on_charge_ledger_j": report.e_on_charge_ledger,
                "e_on_proposed_j": report.e_on_proposed_analytic,
                "e_on_conventional_j": report.e_on_conventional,
                "t_diss_s": report.t_diss,
            })
        else:
            dv = config.delta_v if config.delta_v is not None else 0.0
            row = _predict_row(config.dev_s1, config.dev_s2, config.v_dc, dv,
                               config.load.signed_current,
                               AnalyticClosure(r_g=config.r_g_s1,
                                               v_gate_on=config.gate_on))
            rows.append({"param": args.param, "value": value,
                         "e_on_proposed_j": row["e_on_proposed_j"],
                         "e_on_conventional_j": row["e_on_conventional_j"]})
    _write_csv(outdir / "sweep.csv", rows, manifest)
    if len(rows) > 1 and not args.no_svg:
        series = {k: [r[k] for r in rows] for k in rows[0]
                  if k.startswith("e_on") and all(r[k] is not None for r in rows)}
        plot_sweep(values, series, outdir / "sweep.svg", xlabel=args.param,
                   metadata={"Description": f"manifest: {manifest.digest}"})
        manifest.outputs.append("sweep.svg")
    manifest.write(outdir)
    print(f"swept {args.param} over {len(values)} values; outputs in {outdir}")
    return 0


def cmd_validate(args):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="validate",
        arguments={"curve_dir": str(args.curve_dir) if args.curve_dir else None},
        input_hashes={})
    arith = verify_dataset_arithmetic()
    _write_csv(outdir / "arithmetic_check.csv", arith["rows"], manifest)
    summary = {k: v for k, v in arith.items() if k != "rows"}
    _write_json(outdir / "arithmetic_summary.json", summary, manifest)
    print(f"dataset rows          : {arith['n_rows']}")
    print(f"arithmetic consistent : {arith['all_ok']}")
    print(f"conventional error    : [{arith['conv_error_range_pct'][0]:.2f}%, "
          f"{arith['conv_error_range_pct'][1]:.2f}%]")
    print(f"proposed |error| max  : {arith['prop_error_magnitude_max_pct']:.2f}%")
    print(f"mean error reduction  : {arith['mean_reduction_of_row_ratios']:.2f} "
          f"(row ratios) / {arith['reduction_of_mean_errors']:.2f} (ratio of means)")
    if args.curve_dir:
        pred = run_dataset_predictions(args.curve_dir)
        write_report_csv(pred, outdir / "prediction_comparison.csv")
        manifest.outputs.append("prediction_comparison.csv")
        _write_json(outdir / "prediction_summary.json",
                    {"summary": pred["summary"], "notices": pred["notices"]}, manifest)
        for notice in pred["notices"]:
            print(f"notice: {notice}")
        if pred["rows"]:
            s = pred["summary"]
            print(f"conventional deviation: mean {s['conv_abs_deviation_mean_pct']:.1f}% "
                  f"max {s['conv_abs_deviation_max_pct']:.1f}%")
            print(f"proposed deviation    : mean {s['prop_abs_deviation_mean_pct']:.1f}% "
                  f"max {s['prop_abs_deviation_max_pct']:.1f}% "
                  "(load currents assumed; see implied_i_l_a column)")
            if not args.no_svg:
                plot_prediction_comparison(
                    pred["rows"], outdir / "prediction_comparison.svg",
                    metadata={"Description": f"manifest: {manifest.digest}"})
                manifest.outputs.append("prediction_comparison.svg")
    manifest.write(outdir)
    print(f"outputs in {outdir}")
    return 0 if arith["all_ok"] else 1


def cmd_phases(args):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    trace = WaveformTrace.from_csv(args.trace)
    dev1 = load_device(args.dev_s1) if args.dev_s1 else None
    dev2 = load_device(args.dev_s2) if args.dev_s2 else None
    scenario = args.scenario or trace.metadata.get("scenario")
    if scenario is None:
        raise ConfigurationError("scenario: not in trace metadata; pass --scenario")
    manifest = RunManifest(
        command="phases",
        arguments={"trace": str(args.trace), "scenario": scenario},
        input_hashes={"trace": _hash_file(args.trace)})
    timeline = segment(trace, scenario, dev1, dev2)
    _write_json(outdir / "timeline.json", timeline.to_json(), manifest)
    if not args.no_svg:
        plot_waveforms(trace, timeline, outdir / "phases.svg",
                       metadata={"Description": f"manifest: {manifest.digest}"})
        manifest.outputs.append("phases.svg")
    manifest.write(outdir)
    for ev in timeline.sorted_events():
        print(f"{ev.t * 1e9:10.3f} ns  {ev.kind}" + (f"  ({ev.note})" if ev.note else ""))
    for w in timeline.warnings:
        print(f"warning: {w}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="turnon",
        description="Half-bridge turn-on transient simulation and E_on prediction")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a configured turn-on event")
    p.add_argument("--config", required=True, help="half-bridge config JSON")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--t-end", type=float, default=None, help="simulation span (s)")
    p.add_argument("--rel-tol", type=float, default=None)
    p.add_argument("--abs-tol", type=float, default=None)
    p.add_argument("--max-step", type=float, default=None)
    p.add_argument("--delta-v", type=float, default=None,
                   help="override the config's residual v_ds_s1 at onset (V)")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", help="closed-form E_on predictions from device data")
    p.add_argument("--dev-s1", required=True, help="device manifest JSON")
    p.add_argument("--dev-s2", default=None, help="complementary device (default: same)")
    p.add_argument("--v-dc", type=float, required=True)
    p.add_argument("--delta-v", type=float, nargs="+", required=True,
                   help="one or more residual voltages (V)")
    p.add_argument("--i-l", type=float, required=True, help="load current magnitude (A)")
    p.add_argument("--direction", choices=["into_midpoint", "out_of_midpoint"],
                   default="out_of_midpoint")
    p.add_argument("--r-g", type=float, default=5.0, help="assumed gate resistance (Ω)")
    p.add_argument("--v-gate-on", type=float, default=18.0, help="assumed gate drive (V)")
    p.add_argument("--out", default="out")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="sweep one config parameter")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True,
                   help="dotted config path, e.g. delta_v or load.i_l")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--mode", choices=["simulate", "predict"], default="predict")
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--rel-tol", type=float, default=None)
    p.add_argument("--abs-tol", type=float, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="reproduce the embedded comparison dataset")
    p.add_argument("--curve-dir", default=None,
                   help="directory with <class>mohm.json device manifests")
    p.add_argument("--out", default="out")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("phases", help="segment an existing trace CSV")
    p.add_argument("--trace", required=True, help="trace CSV exported by simulate")
    p.add_argument("--dev-s1", default=None, help="device manifest for thresholds/knees")
    p.add_argument("--dev-s2", default=None)
    p.add_argument("--scenario", default=None,
                   choices=["ZVS", "HS", "iZVS_case1", "iZVS_case2"])
    p.add_argument("--out", default="out")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_phases)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IntegrationError as exc:
        print(f"integration error: {exc} (t = {exc.t})", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
