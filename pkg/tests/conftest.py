"""Shared builders: synthetic devices and half-bridge configs for the test suite."""

import numpy as np
import pytest

from turnon.circuit import ConstantCurrentLoad, HalfBridgeConfig
from turnon.device import CapacitanceCurve, DeviceModel, IVGrid


def make_capacitance(c0, c_inf, v0, gamma, v_max=900.0, n=24, name="cap"):
    """Decreasing power-law capacitance curve sampled on a log-spaced grid."""
    v = np.concatenate([[0.0], np.geomspace(0.5, v_max, n - 1)])
    c = c_inf + c0 / (1.0 + v / v0) ** gamma
    return CapacitanceCurve.from_samples(v, c, name=name)


def make_iv_grid(v_th=2.6, k_sat=2.2, sat_exp=1.6, g_lin=4.0,
                 diode_vf=3.0, diode_r=0.12, v_ds_max=6.0):
    """Saturating forward channel + third-quadrant body-diode characteristics.

    Forward: i = I_sat(vgs) * tanh(g(vgs) * vds / I_sat); reverse adds a
    piecewise-linear diode below -diode_vf. Clamping beyond v_ds_max models
    the flat saturation region.
    """
    gates = np.array([-5.0, -2.0, 0.0, v_th, v_th + 1.5, v_th + 3.0,
                      v_th + 5.0, v_th + 8.0, v_th + 12.0, v_th + 16.0])
    neg = -np.geomspace(0.2, 6.5, 9)[::-1]
    pos = np.geomspace(0.2, v_ds_max, 10)
    vds = np.concatenate([neg, [0.0], pos])

    def current(vgs, v):
        over = max(0.0, vgs - v_th)
        i_sat = k_sat * over ** sat_exp
        g = g_lin * over
        if v >= 0.0:
            return i_sat * np.tanh(g * v / i_sat) if i_sat > 0.0 else 0.0
        chan = i_sat * np.tanh(g * v / i_sat) if i_sat > 0.0 else 0.0
        diode = -max(0.0, -v - diode_vf) / diode_r
        return chan + diode

    curves = [(vds, np.array([current(g, v) for v in vds])) for g in gates]
    return IVGrid(gates, curves)


def make_device(name="synthetic-sic", v_th=2.6, c_gs=2.0e-9, q_rr=0.0,
                c_par_gd=0.0, c_par_ds=0.0, gd=(1.2e-9, 15e-12, 4.0, 1.1),
                ds=(2.5e-9, 120e-12, 8.0, 1.0), **iv_kwargs):
    return DeviceModel(
        name=name,
        iv=make_iv_grid(v_th=v_th, **iv_kwargs),
        c_gs=c_gs,
        c_gd=make_capacitance(*gd, name=f"{name}-cgd"),
        c_ds=make_capacitance(*ds, name=f"{name}-cds"),
        v_th=v_th,
        c_par_gd=c_par_gd,
        c_par_ds=c_par_ds,
        q_rr=q_rr,
        v_ee_ref=-5.0,
    )


def make_config(scenario, i_l=10.0, delta_v=None, v_dc=400.0, q_rr_s2=0.0,
                dev=None, dev2=None, **kwargs):
    dev1 = dev or make_device()
    dev2 = dev2 or (dev1 if q_rr_s2 == 0.0 else make_device(q_rr=q_rr_s2))
    direction = ("into_midpoint" if scenario in ("ZVS", "iZVS_case1")
                 else "out_of_midpoint")
    return HalfBridgeConfig(
        v_dc=v_dc, gate_on=18.0, gate_off=-5.0, r_g_s1=5.0, r_g_s2=5.0,
        load=ConstantCurrentLoad(i_l=i_l, direction=direction),
        dev_s1=dev1, dev_s2=dev2, scenario=scenario, delta_v=delta_v, **kwargs)


@pytest.fixture(scope="session")
def synthetic_device():
    return make_device()
