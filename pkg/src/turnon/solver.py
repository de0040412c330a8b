"""Stiff implicit time integration with event localization and dense output.

Trapezoidal rule on the charge form Q(x1) - Q(x0) = h/2 [f(x0) + f(x1)],
solved per step with a damped modified-Newton iteration. Step control uses
step doubling (one full step vs. two half steps); the composite half-step
solution is accepted, so the method stays second order. Dense output is
cubic Hermite on the accepted samples and their solved derivatives.

Systems must expose: n, regime(x), charges(x, regime), flows(t, x, regime),
mass(x, regime), flow_jacobian(t, x, regime), derivative(t, x).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IntegrationError, InputError

STATE_COLUMNS = ("v_gs_s1", "v_gs_s2", "v_m", "i_l", "q_rr_removed")
DERIV_COLUMNS = tuple(f"d_{name}_dt" for name in STATE_COLUMNS)


@dataclass(frozen=True)
class SolverSettings:
    rel_tol: float = 1e-7
    abs_tol: float = 1e-9
    max_step: float = math.inf
    min_step: float = 1e-16
    newton_tol: float = 1e-4
    newton_max_iters: int = 12
    event_tol: float = 1e-12
    fixed_step: float | None = None
    max_steps: int = 400_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise InputError("solver tolerances must be positive")
        if not (0 < self.min_step < self.max_step):
            raise InputError("need 0 < min_step < max_step")


@dataclass(frozen=True)
class Event:
    """Scalar event g(t, x, dx); a marker is recorded at each qualifying zero crossing."""

    name: str
    fn: object
    direction: int = 0      # +1 rising, -1 falling, 0 any
    terminal: bool = False


@dataclass(frozen=True)
class Marker:
    t: float
    kind: str
    note: str = ""


class WaveformTrace:
    """Time-indexed record of solver states, derivatives and named columns."""

    def __init__(self, t, x, dx, markers=None, metadata=None, data=None):
        self.t = np.asarray(t, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.dx = np.asarray(dx, dtype=float)
        self.markers = list(markers or [])
        self.metadata = dict(metadata or {})
        self.data = dict(data or {})
        for j, name in enumerate(STATE_COLUMNS[:self.x.shape[1]]):
            self.data.setdefault(name, self.x[:, j])
            self.data.setdefault(f"d_{name}_dt", self.dx[:, j])

    def __len__(self):
        return len(self.t)

    @property
    def t_start(self):
        return float(self.t[0])

    @property
    def t_end(self):
        return float(self.t[-1])

    def column(self, name):
        try:
            return self.data[name]
        except KeyError:
            raise KeyError(f"trace has no column '{name}' "
                           f"(available: {sorted(self.data)})") from None

    def _segment(self, t):
        if not (self.t[0] <= t <= self.t[-1]):
            raise InputError(f"time {t:g} outside trace span [{self.t[0]:g}, {self.t[-1]:g}]")
        j = int(np.searchsorted(self.t, t, side="right")) - 1
        j = min(max(j, 0), len(self.t) - 2)
        return j

    def hermite_eval(self, t):
        """Dense-output state and derivative at time t (cubic Hermite)."""
        if len(self.t) == 1:
            return self.x[0].copy(), self.dx[0].copy()
        j = self._segment(t)
        h = self.t[j + 1] - self.t[j]
        if h == 0.0:
            return self.x[j].copy(), self.dx[j].copy()
        s = (t - self.t[j]) / h
        x0, x1 = self.x[j], self.x[j + 1]
        d0, d1 = self.dx[j] * h, self.dx[j + 1] * h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        x = h00 * x0 + h10 * d0 + h01 * x1 + h11 * d1
        g00 = 6 * s * (s - 1)
        g10 = (1 - s) * (1 - 3 * s)
        g01 = -g00
        g11 = s * (3 * s - 2)
        dxdt = (g00 * x0 + g10 * d0 + g01 * x1 + g11 * d1) / h
        return x, dxdt

    def window_indices(self, t0, t1):
        if t1 < t0:
            raise InputError("window end precedes window start")
        i0 = int(np.searchsorted(self.t, t0, side="left"))
        i1 = int(np.searchsorted(self.t, t1, side="right"))
        return i0, i1

    def to_csv(self, path, extra_header_lines=()):
        path = Path(path)
        names = list(self.data.keys())
        with path.open("w", newline="") as fh:
            for line in extra_header_lines:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["t"] + names)
            for k in range(len(self.t)):
                writer.writerow([repr(float(self.t[k]))]
                                + [repr(float(self.data[n][k])) for n in names])
        sidecar = path.with_suffix(path.suffix + ".markers.json")
        sidecar.write_text(json.dumps(
            {"markers": [{"t": m.t, "kind": m.kind, "note": m.note} for m in self.markers],
             "metadata": _jsonable(self.metadata)}, indent=2))
        return path

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        header, body = rows[0], rows[1:]
        arr = np.array([[float(v) for v in row] for row in body])
        t = arr[:, 0]
        data = {name: arr[:, j + 1] for j, name in enumerate(header[1:])}
        nstate = sum(1 for n in STATE_COLUMNS if n in data)
        x = np.column_stack([data[n] for n in STATE_COLUMNS[:nstate]]) if nstate else np.zeros((len(t), 0))
        if all(n in data for n in DERIV_COLUMNS[:nstate]) and nstate:
            dx = np.column_stack([data[n] for n in DERIV_COLUMNS[:nstate]])
        else:
            dx = np.gradient(x, t, axis=0) if len(t) > 1 else np.zeros_like(x)
        markers = []
        metadata = {}
        sidecar = path.with_suffix(path.suffix + ".markers.json")
        if sidecar.exists():
            raw = json.loads(sidecar.read_text())
            markers = [Marker(m["t"], m["kind"], m.get("note", "")) for m in raw.get("markers", [])]
            metadata = raw.get("metadata", {})
        return cls(t, x, dx, markers=markers, metadata=metadata, data=data)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


class _Stepper:
    def __init__(self, system, settings: SolverSettings):
        self.system = system
        self.settings = settings

    def _weights(self, x0, x1):
        s = self.settings
        return s.abs_tol + s.rel_tol * np.maximum(np.abs(x0), np.abs(x1))

    def solve_step(self, t0, x0, h, regime, q0, f0):
        """One trapezoidal step; returns x1 or None on Newton failure."""
        sys_, s = self.system, self.settings
        t1 = t0 + h
        dx0 = np.linalg.solve(self.system.mass(x0, regime), f0)
        x = x0 + h * dx0
        jac = None
        res = sys_.charges(x, regime) - q0 - 0.5 * h * (f0 + sys_.flows(t1, x, regime))
        rnorm_prev = np.linalg.norm(res / self._weights(x0, x))
        step_prev = None
        for it in range(s.newton_max_iters):
            if jac is None or it == 4:
                jac = (sys_.mass(x, regime)
                       - 0.5 * h * sys_.flow_jacobian(t1, x, regime))
            try:
                delta = np.linalg.solve(jac, -res)
            except np.linalg.LinAlgError:
                return None
            # damped update: backtrack while the residual grows
            lam = 1.0
            for _ in range(5):
                x_new = x + lam * delta
                res_new = (sys_.charges(x_new, regime) - q0
                           - 0.5 * h * (f0 + sys_.flows(t1, x_new, regime)))
                rnorm = np.linalg.norm(res_new / self._weights(x0, x_new))
                if rnorm <= rnorm_prev or rnorm < 1.0:
                    break
                lam *= 0.5
            else:
                return None
            step_norm = np.linalg.norm(lam * delta / self._weights(x0, x_new))
            x, res, rnorm_prev = x_new, res_new, rnorm
            if step_norm < s.newton_tol:
                return x
            # updates stalled well below the error-test scale: the iteration
            # has hit the floating-point noise floor of the charge evaluation
            if step_prev is not None and step_norm >= 0.5 * step_prev and step_norm < 3e-2:
                return x
            step_prev = step_norm
        return None


def integrate(system, x0, settings: SolverSettings, t_end, events=(), t_start=0.0):
    """Integrate the system from t_start to t_end, localizing registered events.

    Returns a WaveformTrace; terminal events truncate it at the event time.
    Raises IntegrationError (carrying the last good time/state) if Newton
    cannot converge above the step-size floor.
    """
    if t_end <= t_start:
        raise InputError("t_end must exceed t_start")
    s = settings
    span = t_end - t_start
    stepper = _Stepper(system, s)
    x0 = np.asarray(x0, dtype=float)
    dx0 = system.derivative(t_start, x0)

    times = [t_start]
    states = [x0.copy()]
    derivs = [dx0.copy()]
    markers = []
    accepted = rejected = 0

    def event_values(t, x, dx):
        return [float(ev.fn(t, x, dx)) for ev in events]

    ev_prev = event_values(t_start, x0, dx0)
    for v in ev_prev:
        if math.isnan(v):
            raise IntegrationError("event function returned NaN", t=t_start, state=x0)

    if s.fixed_step is not None:
        h = s.fixed_step
    else:
        scale = s.abs_tol + s.rel_tol * np.abs(x0)
        rate = np.max(np.abs(dx0) / scale)
        h = min(s.max_step, span / 10.0, (0.01 / rate) if rate > 0 else span / 10.0)
        h = max(h, s.min_step)

    t, x = t_start, x0
    terminal_hit = False

    def localize(ev, ta, tb, ga, gb, trace_tail):
        """Bisection on the dense interpolant down to event_tol."""
        lo, hi, glo = ta, tb, ga
        while hi - lo > s.event_tol:
            mid = 0.5 * (lo + hi)
            xm, dxm = trace_tail.hermite_eval(mid)
            gm = float(ev.fn(mid, xm, dxm))
            if math.isnan(gm):
                raise IntegrationError(f"event '{ev.name}' returned NaN", t=mid, state=xm)
            if (glo <= 0.0 < gm) or (glo >= 0.0 > gm):
                hi = mid
            else:
                lo, glo = mid, gm
        return 0.5 * (lo + hi)

    while t < t_end - 1e-30 and not terminal_hit:
        if accepted + rejected > s.max_steps:
            raise IntegrationError("step budget exhausted", t=t, state=x)
        h = min(h, t_end - t)
        regime = system.regime(x)
        q0 = system.charges(x, regime)
        f0 = system.flows(t, x, regime)

        if s.fixed_step is not None:
            x1 = stepper.solve_step(t, x, h, regime, q0, f0)
            if x1 is None:
                raise IntegrationError("Newton failed in fixed-step mode", t=t, state=x)
            new_samples = [(t + h, x1)]
        else:
            x_full = stepper.solve_step(t, x, h, regime, q0, f0)
            x_half = x_mid = None
            if x_full is not None:
                x_mid = stepper.solve_step(t, x, 0.5 * h, regime, q0, f0)
                if x_mid is not None:
                    q_mid = system.charges(x_mid, regime)
                    f_mid = system.flows(t + 0.5 * h, x_mid, regime)
                    x_half = stepper.solve_step(t + 0.5 * h, x_mid, 0.5 * h, regime, q_mid, f_mid)
            if x_half is None:
                rejected += 1
                if h <= s.min_step * (1 + 1e-12):
                    raise IntegrationError("Newton failed at the step-size floor", t=t, state=x)
                h = max(h * 0.5, s.min_step)
                continue
            err = (x_half - x_full) / 3.0
            enorm = np.linalg.norm(err / stepper._weights(x, x_half)) / math.sqrt(len(x))
            if enorm > 1.0:
                rejected += 1
                if h <= s.min_step * (1 + 1e-12):
                    raise IntegrationError("error control hit the step-size floor", t=t, state=x)
                shrink = max(0.2, 0.9 * enorm ** (-1.0 / 3.0))
                h = max(h * shrink, s.min_step)
                continue
            # accept the Richardson-extrapolated endpoint; the estimate tracks
            # the unextrapolated error, keeping the controller conservative
            new_samples = [(t + 0.5 * h, x_mid), (t + h, x_half + err)]
            grow = min(5.0, 0.9 * enorm ** (-1.0 / 3.0)) if enorm > 0 else 5.0
            h = min(max(h * grow, s.min_step), s.max_step)

        accepted += 1
        for tk, xk in new_samples:
            dxk = system.derivative(tk, xk)
            times.append(tk)
            states.append(xk.copy())
            derivs.append(dxk)
            if events:
                tail = WaveformTrace(times[-2:], states[-2:], derivs[-2:])
                ev_now = event_values(tk, xk, dxk)
                for j, ev in enumerate(events):
                    ga, gb = ev_prev[j], ev_now[j]
                    if math.isnan(gb):
                        raise IntegrationError(f"event '{ev.name}' returned NaN", t=tk, state=xk)
                    crossed = (ga < 0.0 <= gb) or (ga > 0.0 >= gb)
                    if ev.direction > 0:
                        crossed = ga < 0.0 <= gb
                    elif ev.direction < 0:
                        crossed = ga > 0.0 >= gb
                    if crossed and ga != 0.0:
                        t_ev = localize(ev, times[-2], tk, ga, gb, tail)
                        markers.append(Marker(t=t_ev, kind=ev.name))
                        if ev.terminal:
                            x_ev, dx_ev = tail.hermite_eval(t_ev)
                            times[-1] = t_ev
                            states[-1] = x_ev
                            derivs[-1] = system.derivative(t_ev, x_ev)
                            terminal_hit = True
                            break
                ev_prev = ev_now if not terminal_hit else ev_prev
            if terminal_hit:
                break
        t = times[-1]
        x = states[-1]

    metadata = {
        "t_start": t_start, "t_end": times[-1],
        "accepted_steps": accepted, "rejected_steps": rejected,
        "settings": {"rel_tol": s.rel_tol, "abs_tol": s.abs_tol,
                     "max_step": s.max_step, "min_step": s.min_step,
                     "fixed_step": s.fixed_step, "event_tol": s.event_tol},
        "terminated_by_event": terminal_hit,
    }
    return WaveformTrace(times, np.array(states), np.array(derivs),
                         markers=markers, metadata=metadata)


def resample(trace: WaveformTrace, dt):
    """Uniformly sampled copy of a trace via its dense output; markers preserved."""
    if dt <= 0:
        raise InputError("dt must be positive")
    t0, t1 = trace.t_start, trace.t_end
    if dt >= t1 - t0:
        grid = np.array([t0, t1])
    else:
        grid = np.arange(t0, t1, dt)
        if grid[-1] < t1:
            grid = np.append(grid, t1)
    xs, dxs = [], []
    for tk in grid:
        xk, dxk = trace.hermite_eval(tk)
        xs.append(xk)
        dxs.append(dxk)
    out = WaveformTrace(grid, np.array(xs), np.array(dxs),
                        markers=list(trace.markers),
                        metadata={**trace.metadata, "resampled_dt": dt})
    interp_only = {k for k in trace.data if k not in out.data}
    for name in interp_only:
        out.data[name] = np.interp(grid, trace.t, trace.data[name])
    return out


def trapezoid_integral(trace: WaveformTrace, values, t0=None, t1=None):
    """∫ values dt over [t0, t1] by trapezoid on the trace samples.

    Window ends falling between samples are handled by linear interpolation.
    `values` is a column name or an array aligned with the trace times.
    """
    t = trace.t
    if isinstance(values, str):
        values = trace.column(values)
    values = np.asarray(values, dtype=float)
    t0 = trace.t_start if t0 is None else t0
    t1 = trace.t_end if t1 is None else t1
    if t1 <= t0:
        return 0.0
    inside = (t > t0) & (t < t1)
    ts = np.concatenate([[t0], t[inside], [t1]])
    vs = np.concatenate([[np.interp(t0, t, values)], values[inside],
                         [np.interp(t1, t, values)]])
    return float(np.trapezoid(vs, ts))
