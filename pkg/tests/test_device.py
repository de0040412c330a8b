import math

import numpy as np
import pytest

from turnon.device import (CapacitanceCurve, DeviceModel, IVGrid, MonotoneCurve,
                           adaptive_simpson)
from turnon.errors import ConfigurationError, InputError


def linear_grid_device(g=2.0, v_th=4.0):
    """Synthetic device with i_d = g * v_ds on the v_gs = 10 V curve, 0 below."""
    vds = np.linspace(-5.0, 5.0, 11)
    zero = np.zeros_like(vds)
    grid = IVGrid([2.0, 10.0], [(vds, zero), (vds, g * vds)])
    cap = CapacitanceCurve.constant(1e-9)
    return DeviceModel(name="lin", iv=grid, c_gs=1e-9, c_gd=cap, c_ds=cap, v_th=v_th)


class TestChannelCurrent:
    def test_blocking_curve_gives_zero(self):
        dev = linear_grid_device()
        assert dev.channel_current(0.0, 10.0) == 0.0

    def test_zero_vds_gives_zero(self):
        dev = linear_grid_device()
        for vgs in (0.0, 2.0, 6.3, 10.0, 14.0):
            assert dev.channel_current(vgs, 0.0) == 0.0

    def test_linear_grid_value(self):
        dev = linear_grid_device(g=2.0)
        assert dev.channel_current(10.0, 3.0) == pytest.approx(6.0, rel=1e-12)

    def test_grid_nodes_reproduced_exactly(self):
        rng = np.random.RandomState(7)
        vds = np.sort(np.concatenate([[0.0], rng.uniform(0.1, 8.0, 6)]))
        gates = [3.0, 6.0, 9.0]
        curves = []
        for k, g in enumerate(gates):
            i = np.concatenate([[0.0], np.cumsum(rng.uniform(0.0, 2.0, 6))]) * (k + 1)
            curves.append((vds, i))
        grid = IVGrid(gates, curves)
        for g, (v, i) in zip(gates, curves):
            for vk, ik in zip(v, i):
                assert grid.current(g, vk) == pytest.approx(ik, abs=1e-14)

    def test_gate_interpolation_is_linear(self):
        dev = linear_grid_device(g=2.0)
        # halfway between the 2 V (zero) and 10 V (g=2) curves
        assert dev.channel_current(6.0, 3.0) == pytest.approx(3.0, rel=1e-12)

    def test_vds_clamp_acts_as_saturation(self):
        dev = linear_grid_device(g=2.0)
        assert dev.channel_current(10.0, 400.0) == pytest.approx(10.0, rel=1e-12)

    def test_nan_rejected(self):
        dev = linear_grid_device()
        with pytest.raises(InputError):
            dev.channel_current(float("nan"), 1.0)

    def test_missing_zero_sample_rejected(self):
        with pytest.raises(ConfigurationError):
            IVGrid([5.0, 10.0], [([0.5, 1.0], [0.1, 0.2]), ([0.0, 1.0], [0.0, 1.0])])


class TestRs:
    def test_blocking_state_infinite(self):
        dev = linear_grid_device()
        assert dev.r_s(0.0, 10.0) == math.inf

    def test_linear_grid_resistance(self):
        dev = linear_grid_device(g=2.0)
        assert dev.r_s(10.0, 3.0) == pytest.approx(0.5, rel=1e-12)

    def test_limit_slope_at_origin(self):
        dev = linear_grid_device(g=2.0)
        assert dev.r_s(10.0, 0.0) == pytest.approx(0.5, rel=1e-9)

    def test_ohms_law_identity(self):
        dev = linear_grid_device(g=2.0)
        rng = np.random.RandomState(3)
        for _ in range(50):
            vgs = rng.uniform(2.0, 10.0)
            vds = rng.uniform(-4.5, 4.5)
            i = dev.channel_current(vgs, vds)
            if i == 0.0:
                continue
            assert dev.r_s(vgs, vds) * i == pytest.approx(vds, rel=1e-12)


def random_piecewise_linear_curve(rng, n_min=4, n_max=24):
    n = rng.randint(n_min, n_max + 1)
    v = np.sort(rng.uniform(0.0, 900.0, n))
    v[0] = 0.0
    v = np.unique(v)
    c = rng.uniform(2e-11, 4e-9, len(v))
    return v, c


class TestStoredChargeEnergy:
    def test_zero_voltage(self):
        dev = linear_grid_device()
        assert dev.q_oss(0.0) == 0.0
        assert dev.e_oss(0.0) == 0.0

    def test_constant_curve_closed_form(self):
        cap_half = CapacitanceCurve.constant(0.5e-9)
        dev = DeviceModel(name="c0", iv=linear_grid_device().iv, c_gs=1e-9,
                          c_gd=cap_half, c_ds=cap_half, v_th=4.0)
        # combined C_gd + C_ds = 1 nF
        assert dev.q_oss(100.0) == pytest.approx(100e-9, rel=1e-12)
        assert dev.e_oss(100.0) == pytest.approx(5e-6, rel=1e-12)

    def test_quadrature_vs_dense_trapezoid_oracle(self):
        # independent oracle: 1e6-panel trapezoid on the same interpolant
        rng = np.random.RandomState(42)
        grid = np.linspace(0.0, 1.0, 1_000_001)
        worst_q = worst_e = 0.0
        for _ in range(100):
            v, c = random_piecewise_linear_curve(rng)
            cap = CapacitanceCurve.from_samples(v, c)
            v_hi = rng.uniform(0.3, 1.0) * 900.0
            u = grid * v_hi
            cu = cap.curve.eval_many(u)
            q_oracle = np.trapezoid(cu, u)
            e_oracle = np.trapezoid(u * cu, u)
            q = cap.charge_quadrature(0.0, v_hi)
            e = cap.energy_quadrature(0.0, v_hi)
            worst_q = max(worst_q, abs(q - q_oracle) / q_oracle)
            worst_e = max(worst_e, abs(e - e_oracle) / e_oracle)
        assert worst_q < 1e-6
        assert worst_e < 1e-6

    def test_monotone_and_energy_bound(self):
        rng = np.random.RandomState(5)
        v, c = random_piecewise_linear_curve(rng)
        cap = CapacitanceCurve.from_samples(v, c)
        dev = DeviceModel(name="r", iv=linear_grid_device().iv, c_gs=1e-9,
                          c_gd=cap, c_ds=cap, v_th=4.0)
        vs = np.linspace(0.0, 900.0, 40)
        qs = [dev.q_oss(x) for x in vs]
        es = [dev.e_oss(x) for x in vs]
        assert all(b >= a - 1e-18 for a, b in zip(qs, qs[1:]))
        assert all(b >= a - 1e-18 for a, b in zip(es, es[1:]))
        for x, q, e in zip(vs, qs, es):
            assert e <= x * q + 1e-18

    def test_exact_antiderivative_matches_quadrature(self):
        rng = np.random.RandomState(11)
        v, c = random_piecewise_linear_curve(rng)
        cap = CapacitanceCurve.from_samples(v, c)
        for hi in (13.0, 250.0, 888.0):
            assert cap.charge(0.0, hi) == pytest.approx(cap.charge_quadrature(0.0, hi), rel=1e-9)

    def test_negative_voltage_rejected(self):
        dev = linear_grid_device()
        with pytest.raises(InputError):
            dev.q_oss(-1.0)


class TestCrr:
    def test_disabled_without_qrr(self):
        dev = linear_grid_device()
        assert dev.c_rr(100.0, 0.0, 400.0) == 0.0

    def test_exhausted_charge(self):
        dev = DeviceModel(name="rr", iv=linear_grid_device().iv, c_gs=1e-9,
                          c_gd=CapacitanceCurve.constant(1e-10),
                          c_ds=CapacitanceCurve.constant(1e-9), v_th=4.0, q_rr=50e-9)
        assert dev.c_rr(100.0, 50e-9, 400.0) == 0.0
        assert dev.c_rr(100.0, 60e-9, 400.0) == 0.0

    def test_uniform_value(self):
        dev = DeviceModel(name="rr", iv=linear_grid_device().iv, c_gs=1e-9,
                          c_gd=CapacitanceCurve.constant(1e-10),
                          c_ds=CapacitanceCurve.constant(1e-9), v_th=4.0, q_rr=50e-9)
        assert dev.c_rr(100.0, 0.0, 400.0) == pytest.approx(0.125e-9, rel=1e-12)


class TestAdaptiveSimpson:
    def test_polynomial_exact(self):
        val = adaptive_simpson(lambda x: x ** 3 - 2 * x + 1, 0.0, 2.0)
        assert val == pytest.approx(4.0 - 4.0 + 2.0, rel=1e-12)

    def test_reversed_limits(self):
        assert adaptive_simpson(lambda x: x, 1.0, 0.0) == pytest.approx(-0.5, rel=1e-12)

    def test_transcendental(self):
        val = adaptive_simpson(math.sin, 0.0, math.pi)
        assert val == pytest.approx(2.0, rel=1e-9)


class TestValidation:
    def test_positive_capacitance_required(self):
        with pytest.raises(ConfigurationError):
            CapacitanceCurve.from_samples([0.0, 10.0], [1e-9, -1e-9])

    def test_strictly_increasing_voltage_required(self):
        with pytest.raises(ConfigurationError):
            CapacitanceCurve.from_samples([0.0, 0.0, 10.0], [1e-9, 1e-9, 1e-9])

    def test_vth_within_grid_span(self):
        with pytest.raises(ConfigurationError):
            DeviceModel(name="bad", iv=linear_grid_device().iv, c_gs=1e-9,
                        c_gd=CapacitanceCurve.constant(1e-10),
                        c_ds=CapacitanceCurve.constant(1e-9), v_th=30.0)

    def test_monotone_curve_requires_sorted_x(self):
        with pytest.raises(ConfigurationError):
            MonotoneCurve([1.0, 0.0], [1.0, 2.0])
