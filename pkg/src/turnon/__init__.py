"""Half-bridge turn-on transient simulator and switching-loss prediction toolkit."""

__version__ = "0.1.0"

from .device import CapacitanceCurve, DeviceModel, IVGrid, load_device
from .circuit import (HalfBridgeConfig, ConstantCurrentLoad, InductorLoad,
                      CircuitState, BranchCurrents, CircuitSystem, assemble,
                      load_config)
from .solver import (SolverSettings, Event, Marker, WaveformTrace, integrate,
                     resample, trapezoid_integral)
from .phases import (PhaseTimeline, PhaseEvent, classify_scenario, detect_onset,
                     segment)
from .energy import (EnergyReport, PredictionInputs, AnalyticClosure,
                     e_on_direct, delta_q_s2, s2_absorbed_energy,
                     charge_ledger_e_on, energy_ledger_e_on,
                     predict_proposed_analytic, predict_conventional,
                     error_metrics, gather_prediction_inputs,
                     trace_energy_balance, build_energy_report)
from .simulate import simulate

__all__ = [
    "CapacitanceCurve", "DeviceModel", "IVGrid", "load_device",
    "HalfBridgeConfig", "ConstantCurrentLoad", "InductorLoad", "CircuitState",
    "BranchCurrents", "CircuitSystem", "assemble", "load_config",
    "SolverSettings", "Event", "Marker", "WaveformTrace", "integrate",
    "resample", "trapezoid_integral",
    "PhaseTimeline", "PhaseEvent", "classify_scenario", "detect_onset", "segment",
    "EnergyReport", "PredictionInputs", "AnalyticClosure", "e_on_direct",
    "delta_q_s2", "s2_absorbed_energy", "charge_ledger_e_on",
    "energy_ledger_e_on", "predict_proposed_analytic", "predict_conventional",
    "error_metrics", "gather_prediction_inputs", "trace_energy_balance",
    "build_energy_report",
    "simulate",
]
