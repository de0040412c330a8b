import numpy as np
import pytest
from scipy.linalg import expm

from conftest import make_config, make_device, make_iv_grid
from turnon.circuit import (CircuitState, CircuitSystem, ConstantCurrentLoad,
                            HalfBridgeConfig, InductorLoad, assemble,
                            IDX_VGS1, IDX_VGS2, IDX_VM, IDX_IL)
from turnon.device import CapacitanceCurve, DeviceModel, IVGrid
from turnon.errors import ConfigurationError
from turnon.simulate import simulate
from turnon.solver import SolverSettings, integrate, trapezoid_integral

FAST = SolverSettings(rel_tol=1e-6, abs_tol=1e-8)


def linear_device(g=2.0, c_gd=50e-12, c_ds=300e-12, c_gs=1e-9):
    """Constant capacitances and a gate-independent linear channel."""
    vds = np.linspace(-500.0, 500.0, 11)
    grid = IVGrid([0.0, 10.0], [(vds, g * vds), (vds, g * vds)])
    return DeviceModel(name="linear", iv=grid, c_gs=c_gs,
                       c_gd=CapacitanceCurve.constant(c_gd),
                       c_ds=CapacitanceCurve.constant(c_ds), v_th=5.0)


def linear_config(g=2e-3):
    dev = linear_device(g=g)
    return HalfBridgeConfig(
        v_dc=400.0, gate_on=8.0, gate_off=0.0, r_g_s1=5.0, r_g_s2=5.0,
        load=ConstantCurrentLoad(i_l=0.0, direction="into_midpoint"),
        dev_s1=dev, dev_s2=dev, scenario="ZVS")


class TestRhs:
    def test_static_equilibrium_zero_derivative(self):
        # blocking devices, drives at their pre-step level, zero load
        dev = make_device()
        config = HalfBridgeConfig(
            v_dc=400.0, gate_on=18.0, gate_off=-5.0, r_g_s1=5.0, r_g_s2=5.0,
            load=ConstantCurrentLoad(i_l=0.0, direction="into_midpoint"),
            dev_s1=dev, dev_s2=dev, scenario="ZVS")
        sys_ = CircuitSystem(config)
        x = np.array([-5.0, -5.0, 200.0, 0.0, 0.0])
        dx = sys_.derivative(-1.0, x)  # t < 0: both drives at gate_off
        assert np.allclose(dx, 0.0, atol=1e-15)

    def test_linear_surrogate_matches_expm(self):
        # constant caps + linear channel: exact solution via matrix exponential
        config = linear_config()
        sys_ = CircuitSystem(config)
        x0 = np.array([0.0, 0.0, 100.0, 0.0, 0.0])
        n = 3

        def deriv(x5):
            return sys_.derivative(1.0, x5)[:n]

        b = deriv(np.zeros(5))
        a_mat = np.empty((n, n))
        for j in range(n):
            e = np.zeros(5)
            e[j] = 1.0
            a_mat[:, j] = deriv(e) - b
        aug = np.zeros((n + 1, n + 1))
        aug[:n, :n] = a_mat
        aug[:n, n] = b
        t_end = 30e-9
        exact = (expm(aug * t_end) @ np.append(x0[:n], 1.0))[:n]

        trace = integrate(sys_, x0, SolverSettings(rel_tol=1e-8, abs_tol=1e-12,
                                                   max_step=1e-9), t_end)
        assert np.allclose(trace.x[-1, :n], exact, rtol=1e-6, atol=1e-8)

    def test_rhs_wrapper_roundtrip(self):
        cfg = make_config("iZVS_case2", i_l=10.0, delta_v=200.0)
        sys_ = assemble(cfg)
        state = CircuitState.from_vector(1e-9, sys_.initial_state)
        dstate = sys_.rhs(state)
        dx = sys_.derivative(1e-9, sys_.initial_state)
        assert dstate.v_m == pytest.approx(dx[IDX_VM], rel=1e-12)


@pytest.fixture(scope="module")
def case2_run():
    cfg = make_config("iZVS_case2", i_l=10.0, delta_v=255.0)
    trace, system = simulate(cfg, FAST)
    return cfg, trace, system


class TestBranchCurrents:
    def test_equilibrium_displacement_zero(self):
        dev = make_device()
        config = HalfBridgeConfig(
            v_dc=400.0, gate_on=18.0, gate_off=-5.0, r_g_s1=5.0, r_g_s2=5.0,
            load=ConstantCurrentLoad(i_l=0.0, direction="into_midpoint"),
            dev_s1=dev, dev_s2=dev, scenario="ZVS")
        sys_ = CircuitSystem(config)
        x = np.array([-5.0, -5.0, 200.0, 0.0, 0.0])
        b = sys_.branch_currents(-1.0, x, np.zeros(5))
        for name in ("i_cgs_s1", "i_cgd_s1", "i_cds_s1", "i_cpar_s1",
                     "i_cgs_s2", "i_cgd_s2", "i_cds_s2", "i_cpar_s2", "i_crr_s2"):
            assert getattr(b, name) == 0.0

    def test_kcl_residuals_machine_level(self, case2_run):
        cfg, trace, system = case2_run
        worst = 0.0
        for k in range(len(trace)):
            (rm, r1, r2), scale = system.kcl_residuals(trace.t[k], trace.x[k], trace.dx[k])
            worst = max(worst, abs(rm) / scale, abs(r1) / scale, abs(r2) / scale)
        assert worst < 1e-9

    def test_kvl_identity(self, case2_run):
        cfg, trace, system = case2_run
        assert np.allclose(trace.column("v_ds_s1") + trace.column("v_ds_s2"),
                           cfg.v_dc, rtol=0, atol=1e-9)

    def test_dc_current_consistency(self, case2_run):
        # the source current computed at S1's drain equals i_d_s2 - i_l exactly
        cfg, trace, system = case2_run
        idc = trace.column("i_dc")
        alt = trace.column("i_d_s2") - trace.column("i_l")
        scale = np.max(np.abs(idc))
        assert np.allclose(idc, alt, atol=1e-9 * scale)

    def test_charge_bookkeeping_all_capacitors(self, case2_run):
        # ∫ i dt for every displacement branch equals its Q(v) endpoint delta;
        # error is measured against the branch's charge excursion since some
        # capacitors return to their starting charge
        cfg, trace, system = case2_run
        vm = trace.x[:, IDX_VM]
        vgs1 = trace.x[:, IDX_VGS1]
        vgs2 = trace.x[:, IDX_VGS2]
        vdg1 = (cfg.v_dc - vm) - vgs1
        vdg2 = vm - vgs2
        checks = [
            ("i_cgs_s1", cfg.dev_s1.c_gs * (vgs1[-1] - vgs1[0])),
            ("i_cgs_s2", cfg.dev_s2.c_gs * (vgs2[-1] - vgs2[0])),
            ("i_cds_s2", cfg.dev_s2.c_ds.charge(vm[0], vm[-1])),
            ("i_cgd_s1", cfg.dev_s1.c_gd.charge(vdg1[0], vdg1[-1])),
            ("i_cgd_s2", cfg.dev_s2.c_gd.charge(vdg2[0], vdg2[-1])),
            ("i_cds_s1", cfg.dev_s1.c_ds.charge(cfg.v_dc - vm[0], cfg.v_dc - vm[-1])),
        ]
        dt = np.diff(trace.t)
        for name, want in checks:
            col = trace.column(name)
            got = trapezoid_integral(trace, name)
            running = np.concatenate([[0.0], np.cumsum(0.5 * (col[1:] + col[:-1]) * dt)])
            excursion = np.max(np.abs(running))
            assert abs(got - want) / max(excursion, 1e-15) < 1e-3, name

    def test_reverse_conduction_only_when_shoot_through_disabled(self):
        cfg = make_config("iZVS_case2", i_l=10.0, delta_v=200.0,
                          shoot_through_enabled=False)
        sys_ = CircuitSystem(cfg)
        x = np.array([5.0, 5.0, 10.0, -10.0, 0.0])  # S2 gate bumped above threshold
        assert sys_.channel_s2(x) == 0.0
        cfg_on = make_config("iZVS_case2", i_l=10.0, delta_v=200.0,
                             shoot_through_enabled=True)
        assert CircuitSystem(cfg_on).channel_s2(x) > 0.0

    def test_zvs_narrative_current_split(self):
        # early in ZVS the gate-drain displacement dominates and the channel
        # share of the load current dips
        cfg = make_config("ZVS", i_l=10.0)
        trace, system = simulate(cfg, FAST)
        vgs = trace.column("v_gs_s1")
        sel = (trace.t > 0) & (vgs < -4.2) & (vgs > -4.9)
        assert sel.any()
        i_cgd = np.abs(trace.column("i_cgd_s1")[sel])
        i_cds = np.abs(trace.column("i_cds_s1")[sel])
        i_rs1 = np.abs(trace.column("i_rs1")[sel])
        assert np.all(i_cgd > i_cds)
        assert np.all(i_rs1 < abs(cfg.load.signed_current))


class TestAssemble:
    def test_zvs_initial_state_reverse_conducting(self):
        cfg = make_config("ZVS", i_l=10.0)
        sys_ = assemble(cfg)
        x0 = sys_.initial_state
        v_ds1 = cfg.v_dc - x0[IDX_VM]
        assert v_ds1 < 0.0  # midpoint clamped above the rail by reverse conduction
        i_rs1 = cfg.dev_s1.channel_current(x0[IDX_VGS1], v_ds1)
        assert i_rs1 == pytest.approx(-10.0, rel=1e-6)

    def test_hs_initial_state(self):
        cfg = make_config("HS", i_l=10.0)
        sys_ = assemble(cfg)
        x0 = sys_.initial_state
        assert x0[IDX_VM] < 0.0
        i_rs2 = cfg.dev_s2.channel_current(x0[IDX_VGS2], x0[IDX_VM])
        assert i_rs2 == pytest.approx(-10.0, rel=1e-6)

    def test_case2_delta_v_pinned_at_onset(self):
        cfg = make_config("iZVS_case2", i_l=10.0, delta_v=255.0)
        trace, system = simulate(cfg, FAST)
        onset = [m.t for m in trace.markers if m.kind == "onset_vth"][0]
        vds1_onset = np.interp(onset, trace.t, trace.column("v_ds_s1"))
        assert vds1_onset == pytest.approx(255.0, rel=5e-3)

    def test_explicit_initial_midpoint(self):
        cfg = make_config("iZVS_case2", i_l=10.0, initial_midpoint=145.0)
        sys_ = assemble(cfg)
        assert sys_.initial_state[IDX_VM] == 145.0

    def test_scenario_load_pairing_validated(self):
        dev = make_device()
        with pytest.raises(ConfigurationError):
            assemble(HalfBridgeConfig(
                v_dc=400.0, gate_on=18.0, gate_off=-5.0, r_g_s1=5.0, r_g_s2=5.0,
                load=ConstantCurrentLoad(i_l=10.0, direction="out_of_midpoint"),
                dev_s1=dev, dev_s2=dev, scenario="ZVS"))

    def test_inductor_load_state(self):
        dev = make_device()
        cfg = HalfBridgeConfig(
            v_dc=400.0, gate_on=18.0, gate_off=-5.0, r_g_s1=5.0, r_g_s2=5.0,
            load=InductorLoad(l=100e-6, i_l0=10.0, direction="out_of_midpoint"),
            dev_s1=dev, dev_s2=dev, scenario="iZVS_case2", delta_v=200.0)
        trace, system = simulate(cfg, FAST, t_end=60e-9)
        i_l = trace.column("i_l")
        assert i_l[0] == pytest.approx(-10.0, rel=1e-9)
        # the event moves the inductor current by roughly v_m * t / L, a few
        # percent here, nothing like the bridge currents
        drift = abs(i_l[-1] - i_l[0])
        assert 1e-3 < drift < 0.5


class TestConfigValidation:
    def test_bad_scenario(self):
        dev = make_device()
        with pytest.raises(ConfigurationError, match="scenario"):
            HalfBridgeConfig(v_dc=400.0, gate_on=18.0, gate_off=-5.0,
                             r_g_s1=5.0, r_g_s2=5.0,
                             load=ConstantCurrentLoad(i_l=1.0, direction="into_midpoint"),
                             dev_s1=dev, dev_s2=dev, scenario="bogus")

    def test_delta_v_range(self):
        with pytest.raises(ConfigurationError, match="delta_v"):
            make_config("iZVS_case2", i_l=10.0, delta_v=500.0)

    def test_load_direction(self):
        with pytest.raises(ConfigurationError, match="direction"):
            ConstantCurrentLoad(i_l=1.0, direction="sideways")
