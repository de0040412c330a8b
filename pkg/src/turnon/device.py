"""Per-device nonlinear characteristics.

Tabulated I-V grids and capacitance curves are turned into the continuous
functions used by the circuit model and the energy ledgers: channel current,
equivalent channel resistance, stored charge Q_oss(v) and stored energy
E_oss(v), and the lumped reverse-recovery capacitance.

Interpolation policy: shape-preserving monotone cubic (PCHIP) along the
tabulated axis, linear blending between gate curves, clamp-to-endpoint
outside the tabulated range.
"""

from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigurationError, InputError

INF_RESISTANCE = math.inf


def _as_float_array(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ConfigurationError(f"{name}: need at least two samples, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name}: non-finite sample values")
    return arr


class MonotoneCurve:
    """PCHIP interpolant with clamp-to-endpoint extrapolation.

    Scalar evaluation uses precomputed piecewise-cubic coefficients (about
    10x faster than calling the scipy object); the antiderivative is kept
    for exact integrals of the interpolant.
    """

    def __init__(self, x, y, name="curve"):
        x = _as_float_array(x, f"{name}.x")
        y = _as_float_array(y, f"{name}.y")
        if x.shape != y.shape:
            raise ConfigurationError(f"{name}: x and y lengths differ")
        if not np.all(np.diff(x) > 0):
            raise ConfigurationError(f"{name}: x samples must be strictly increasing")
        self.name = name
        self.x = x
        self.y = y
        self._pp = PchipInterpolator(x, y, extrapolate=False)
        self._der = self._pp.derivative()
        anti = self._pp.antiderivative()
        self._xs = x.tolist()
        self._y_lo = float(y[0])
        self._y_hi = float(y[-1])
        c = self._pp.c
        self._cs = [tuple(float(c[k, j]) for k in range(c.shape[0])) for j in range(c.shape[1])]
        ca = anti.c
        self._cas = [tuple(float(ca[k, j]) for k in range(ca.shape[0])) for j in range(ca.shape[1])]
        self._area_total = self._anti_inside(float(x[-1]))

    def __call__(self, v):
        xs = self._xs
        if v <= xs[0]:
            return self._y_lo
        if v >= xs[-1]:
            return self._y_hi
        j = bisect.bisect_right(xs, v) - 1
        t = v - xs[j]
        c3, c2, c1, c0 = self._cs[j]
        return ((c3 * t + c2) * t + c1) * t + c0

    def eval_many(self, v):
        v = np.asarray(v, dtype=float)
        return self._pp(np.clip(v, self.x[0], self.x[-1]))

    def derivative(self, v):
        v = min(max(v, self._xs[0]), self._xs[-1])
        return float(self._der(v))

    def _anti_inside(self, v):
        xs = self._xs
        j = min(bisect.bisect_right(xs, v) - 1, len(self._cas) - 1)
        j = max(j, 0)
        t = v - xs[j]
        c4, c3, c2, c1, c0 = self._cas[j]
        return (((c4 * t + c3) * t + c2) * t + c1) * t + c0

    def integral_from_origin(self, v):
        """Exact integral of the clamped interpolant from x[0] to v (linear tails)."""
        xs = self._xs
        if v <= xs[0]:
            return self._y_lo * (v - xs[0])
        if v >= xs[-1]:
            return self._area_total + self._y_hi * (v - xs[-1])
        return self._anti_inside(v)

    def integral(self, a, b):
        return self.integral_from_origin(b) - self.integral_from_origin(a)


def adaptive_simpson(f, a, b, rel_tol=1e-9, breakpoints=(), max_depth=40):
    """Adaptive composite Simpson quadrature of f over [a, b].

    Interior breakpoints (e.g. interpolant knots) seed the initial panels so
    piecewise-cubic integrands converge in one refinement.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    knots = [a] + sorted(p for p in breakpoints if a < p < b) + [b]

    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    total = 0.0
    scale = max(abs(f(a)), abs(f(b)), 1e-300)
    for lo, hi in zip(knots[:-1], knots[1:]):
        stack = [(lo, hi, f(lo), f(0.5 * (lo + hi)), f(hi), 0)]
        while stack:
            x0, x1, f0, fm, f1, depth = stack.pop()
            xm = 0.5 * (x0 + x1)
            xl = 0.5 * (x0 + xm)
            xr = 0.5 * (xm + x1)
            fl = f(xl)
            fr = f(xr)
            whole = simpson(x0, x1, f0, fm, f1)
            left = simpson(x0, xm, f0, fl, fm)
            right = simpson(xm, x1, fm, fr, f1)
            err = left + right - whole
            if depth >= max_depth or abs(err) <= 15.0 * rel_tol * (abs(left + right) + scale * (x1 - x0)):
                total += left + right + err / 15.0
            else:
                stack.append((x0, xm, f0, fl, fm, depth + 1))
                stack.append((xm, x1, fm, fr, f1, depth + 1))
    return sign * total


@dataclass(frozen=True)
class CapacitanceCurve:
    """Voltage-dependent capacitance from tabulated (v, c) samples, clamped outside."""

    curve: MonotoneCurve

    @classmethod
    def from_samples(cls, v, c, name="capacitance"):
        curve = MonotoneCurve(v, c, name=name)
        if np.any(curve.y <= 0.0):
            raise ConfigurationError(f"{name}: capacitance samples must be positive")
        return cls(curve)

    @classmethod
    def constant(cls, c0, v_max=2000.0, name="capacitance"):
        return cls.from_samples([0.0, v_max], [c0, c0], name=name)

    def c(self, v):
        return self.curve(v)

    def charge(self, a, b):
        """Exact ∫ C dv of the interpolant between two voltages (any order, any sign)."""
        return self.curve.integral(a, b)

    def charge_quadrature(self, a, b, rel_tol=1e-9):
        return adaptive_simpson(self.curve, a, b, rel_tol=rel_tol, breakpoints=self.curve.x)

    def energy_quadrature(self, a, b, rel_tol=1e-9):
        cur = self.curve
        return adaptive_simpson(lambda u: u * cur(u), a, b, rel_tol=rel_tol, breakpoints=cur.x)

    @property
    def v_max(self):
        return float(self.curve.x[-1])

    def knee_voltage(self, factor=2.0):
        """Voltage where c(v) falls to `factor` x its high-voltage endpoint value.

        Returns None for curves that never exceed the endpoint by that factor.
        """
        target = factor * self.curve._y_hi
        xs = self.curve.x
        if self.curve(xs[0]) <= target:
            return None
        lo, hi = float(xs[0]), float(xs[-1])
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.curve(mid) > target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


class IVGrid:
    """Forward and reverse conduction characteristics on a (v_gs, v_ds) grid.

    Each gate voltage owns one monotone curve i_d(v_ds). Every curve must
    include the (0 V, 0 A) point; current is clamped to the tabulated v_ds
    range (saturation flat-top) and gate voltage is clamped to the grid span.
    """

    def __init__(self, gate_voltages, curves):
        gate_voltages = _as_float_array(gate_voltages, "iv.gate_voltages")
        if not np.all(np.diff(gate_voltages) > 0):
            raise ConfigurationError("iv.gate_voltages must be strictly increasing")
        if len(curves) != len(gate_voltages):
            raise ConfigurationError("iv: one curve required per gate voltage")
        self.gate_voltages = gate_voltages
        self._vgs_list = gate_voltages.tolist()
        self.curves = []
        for vg, (vds, idrain) in zip(gate_voltages, curves):
            vds = np.asarray(vds, dtype=float)
            idrain = np.asarray(idrain, dtype=float)
            cur = MonotoneCurve(vds, idrain, name=f"iv@vgs={vg:g}")
            if np.any(np.diff(idrain) < -1e-12 * max(1.0, np.max(np.abs(idrain)))):
                raise ConfigurationError(f"iv@vgs={vg:g}: i_d must be nondecreasing in v_ds")
            k = np.searchsorted(vds, 0.0)
            if k >= len(vds) or vds[k] != 0.0 or idrain[k] != 0.0:
                raise ConfigurationError(f"iv@vgs={vg:g}: curve must contain the (0 V, 0 A) sample")
            self.curves.append(cur)

    @classmethod
    def from_triplets(cls, vgs, vds, idrain):
        vgs = np.asarray(vgs, dtype=float)
        vds = np.asarray(vds, dtype=float)
        idrain = np.asarray(idrain, dtype=float)
        gates = np.unique(vgs)
        curves = []
        for g in gates:
            mask = vgs == g
            order = np.argsort(vds[mask])
            curves.append((vds[mask][order], idrain[mask][order]))
        return cls(gates, curves)

    def _bracket(self, v_gs):
        gl = self._vgs_list
        if v_gs <= gl[0]:
            return 0, 0, 0.0
        if v_gs >= gl[-1]:
            n = len(gl) - 1
            return n, n, 0.0
        j = bisect.bisect_right(gl, v_gs) - 1
        w = (v_gs - gl[j]) / (gl[j + 1] - gl[j])
        return j, j + 1, w

    def current(self, v_gs, v_ds):
        if math.isnan(v_gs) or math.isnan(v_ds):
            raise InputError("iv.current: NaN input")
        j0, j1, w = self._bracket(v_gs)
        i0 = self.curves[j0](v_ds)
        if j1 == j0:
            return i0
        return i0 + w * (self.curves[j1](v_ds) - i0)

    def slope_at_origin(self, v_gs):
        j0, j1, w = self._bracket(v_gs)
        g0 = self.curves[j0].derivative(0.0)
        if j1 == j0:
            return g0
        return g0 + w * (self.curves[j1].derivative(0.0) - g0)


@dataclass(frozen=True)
class DeviceModel:
    """One transistor's characterization for half-bridge turn-on studies.

    c_gs is taken voltage-independent; c_gd and c_ds carry the datasheet
    nonlinearity; c_par_gd / c_par_ds are external parallel capacitances;
    q_rr is the total reverse-recovery charge (0 disables the recovery
    capacitance); v_ee_ref records the gate-off level used when shifting
    gate-drain curve arguments in exact (unapproximated) ledgers.
    """

    name: str
    iv: IVGrid
    c_gs: float
    c_gd: CapacitanceCurve
    c_ds: CapacitanceCurve
    v_th: float
    c_par_gd: float = 0.0
    c_par_ds: float = 0.0
    q_rr: float = 0.0
    v_ee_ref: float = 0.0
    quad_rel_tol: float = 1e-9

    def __post_init__(self):
        if self.c_gs <= 0:
            raise ConfigurationError(f"{self.name}: c_gs must be positive")
        if self.c_par_gd < 0 or self.c_par_ds < 0:
            raise ConfigurationError(f"{self.name}: parallel capacitances must be >= 0")
        if self.q_rr < 0:
            raise ConfigurationError(f"{self.name}: q_rr must be >= 0")
        gv = self.iv.gate_voltages
        if not (gv[0] <= self.v_th <= gv[-1]):
            raise ConfigurationError(
                f"{self.name}: v_th={self.v_th:g} outside gate-voltage span [{gv[0]:g}, {gv[-1]:g}]")

    @property
    def c_par(self):
        return self.c_par_gd + self.c_par_ds

    def channel_current(self, v_gs, v_ds):
        """Non-displacement current through the device, positive drain-to-source."""
        return self.iv.current(v_gs, v_ds)

    def r_s(self, v_gs, v_ds):
        """Equivalent channel resistance v_ds / i; infinite when blocking."""
        if math.isnan(v_gs) or math.isnan(v_ds):
            raise InputError("r_s: NaN input")
        if v_ds == 0.0:
            g = self.iv.slope_at_origin(v_gs)
            return INF_RESISTANCE if g == 0.0 else 1.0 / g
        i = self.channel_current(v_gs, v_ds)
        if i == 0.0:
            return INF_RESISTANCE
        return v_ds / i

    def c_oss(self, v):
        return self.c_gd.c(v) + self.c_ds.c(v)

    def _check_nonneg(self, v, op):
        if math.isnan(v):
            raise InputError(f"{op}: NaN input")
        if v < 0:
            raise InputError(f"{op}: voltage must be >= 0 (got {v:g})")

    def q_oss(self, v):
        """Charge stored in the output capacitance at drain-source voltage v."""
        self._check_nonneg(v, "q_oss")
        return (self.c_gd.charge_quadrature(0.0, v, self.quad_rel_tol)
                + self.c_ds.charge_quadrature(0.0, v, self.quad_rel_tol))

    def e_oss(self, v):
        """Energy stored in the output capacitance at drain-source voltage v."""
        self._check_nonneg(v, "e_oss")
        return (self.c_gd.energy_quadrature(0.0, v, self.quad_rel_tol)
                + self.c_ds.energy_quadrature(0.0, v, self.quad_rel_tol))

    def q_gd(self, v):
        self._check_nonneg(v, "q_gd")
        return self.c_gd.charge_quadrature(0.0, v, self.quad_rel_tol)

    def q_ds(self, v):
        self._check_nonneg(v, "q_ds")
        return self.c_ds.charge_quadrature(0.0, v, self.quad_rel_tol)

    def e_gd(self, v):
        self._check_nonneg(v, "e_gd")
        return self.c_gd.energy_quadrature(0.0, v, self.quad_rel_tol)

    def e_ds(self, v):
        self._check_nonneg(v, "e_ds")
        return self.c_ds.energy_quadrature(0.0, v, self.quad_rel_tol)

    def c_rr(self, v_ds, q_removed, v_swing):
        """Lumped reverse-recovery capacitance while the recovery event is active.

        Constant value q_rr / v_swing until the integrated extracted charge
        reaches q_rr, then zero. q_removed is caller-owned event state.
        """
        if q_removed < 0:
            raise InputError("c_rr: q_removed must be >= 0")
        if self.q_rr <= 0.0 or q_removed >= self.q_rr:
            return 0.0
        if v_swing <= 0.0:
            raise InputError("c_rr: v_swing must be positive")
        return self.q_rr / v_swing


def read_capacitance_csv(path):
    path = Path(path)
    v, c = [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:2]] != ["v", "c"]:
            raise ConfigurationError(f"{path}: capacitance CSV must have header 'v,c'")
        for row in reader:
            v.append(float(row["v"]))
            c.append(float(row["c"]))
    return CapacitanceCurve.from_samples(v, c, name=path.stem)


def read_iv_csv(path):
    path = Path(path)
    vgs, vds, idr = [], [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        expect = ["vgs", "vds", "id"]
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:3]] != expect:
            raise ConfigurationError(f"{path}: IV CSV must have header 'vgs,vds,id'")
        for row in reader:
            vgs.append(float(row["vgs"]))
            vds.append(float(row["vds"]))
            idr.append(float(row["id"]))
    return IVGrid.from_triplets(vgs, vds, idr)


_DEVICE_KEYS = {"name", "c_gs", "v_th", "c_par_gd", "c_par_ds", "q_rr", "v_ee_ref",
                "c_gd_curve", "c_ds_curve", "iv_grid", "notes"}


def load_device(manifest_path):
    """Load a DeviceModel from a JSON manifest naming curve files and scalars.

    Curve file paths are resolved relative to the manifest location. All
    values are SI (farads, volts, coulombs).
    """
    manifest_path = Path(manifest_path)
    try:
        spec = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{manifest_path}: invalid JSON ({exc})") from exc
    unknown = set(spec) - _DEVICE_KEYS
    if unknown:
        raise ConfigurationError(f"{manifest_path}: unknown keys {sorted(unknown)}")
    for key in ("c_gs", "v_th", "c_gd_curve", "c_ds_curve", "iv_grid"):
        if key not in spec:
            raise ConfigurationError(f"{manifest_path}: missing required key '{key}'")
    base = manifest_path.parent
    return DeviceModel(
        name=spec.get("name", manifest_path.stem),
        iv=read_iv_csv(base / spec["iv_grid"]),
        c_gs=float(spec["c_gs"]),
        c_gd=read_capacitance_csv(base / spec["c_gd_curve"]),
        c_ds=read_capacitance_csv(base / spec["c_ds_curve"]),
        v_th=float(spec["v_th"]),
        c_par_gd=float(spec.get("c_par_gd", 0.0)),
        c_par_ds=float(spec.get("c_par_ds", 0.0)),
        q_rr=float(spec.get("q_rr", 0.0)),
        v_ee_ref=float(spec.get("v_ee_ref", 0.0)),
    )
