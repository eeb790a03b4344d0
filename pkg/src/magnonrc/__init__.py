"""Micromagnetic spin-wave reservoir computing: AOR and PSM reservoirs, readouts and experiments."""

from .magnetics import (ConfigurationError, MagState, MaterialMap, MaterialParams, NumericBlowupError, SimGrid,
                        Simulation, step_rk4, uniform_state)
from .excitation import AntennaSpec, ProbeSpec, Region
from .aor import AnnSpec, AorConfig, ReservoirTrace, build_aor, run_aor, trace_features
from .psm import PsmConfig, PsmTrace, build_psm, cascade_psm, psm_features, run_psm
from .readout import evaluate, fit_ensemble, fit_linear, fit_mlp
from .harness import ExperimentConfig, TrialReport, emit_report, memory_benchmark, run_experiment

__version__ = "0.1.0"
