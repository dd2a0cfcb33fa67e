"""Anytime algorithm configuration with censored-runtime confidence bounds."""
from .analysis import eps_delta_profile, quantile_cap, read_events, trajectory
from .baseline import run_baseline, sp_queue_size
from .lcb import EmpiricalCdf, LcbValue, beta, capped_mean, epsilon, lcb
from .pool import FinitePoolSampler, QuantilePool, level_size
from .runners import (InstanceStream, ProcessSource, RunResult, RuntimeMatrix, SimulatedSource,
                      load_matrix, run_process, run_simulated)
from .scheduler import Certificate, Scheduler, certify_delta, suboptimality_bound
from .tester import CappedObservation, ConfigurationTester, target_queue_size

__all__ = [
    "Certificate", "CappedObservation", "ConfigurationTester", "EmpiricalCdf",
    "FinitePoolSampler", "InstanceStream", "LcbValue", "ProcessSource", "QuantilePool",
    "RunResult", "RuntimeMatrix", "Scheduler", "SimulatedSource", "beta", "capped_mean",
    "certify_delta", "epsilon", "eps_delta_profile", "lcb", "level_size", "load_matrix",
    "quantile_cap", "read_events", "run_baseline", "run_process", "run_simulated",
    "sp_queue_size", "suboptimality_bound", "target_queue_size", "trajectory",
]
__version__ = "0.1.0"
