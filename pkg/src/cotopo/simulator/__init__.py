"""Flow-level simulation of training iterations."""

from .engine import (COMM, COMPUTE, FlowState, SimResult, Simulation, SimulationError,
                     Task, gbps_to_bytes_per_us, max_min_rates, simulate)
from .metrics import cdf_points, metrics
from .multijob import (AdmissionError, JobRequest, MultiJobResult, allocate_shards,
                       job_mix, multi_job_run)
from .networks import DirectNetwork, SwitchNetwork, random_expander
from .reconfig import (ReconfigPolicy, discount, ocs_reconfig_step, simulate_reconfig,
                       utility)
from .tasks import allreduce_only_tasks, build_tasks

__all__ = [
    "AdmissionError", "JobRequest", "MultiJobResult", "allocate_shards", "job_mix",
    "multi_job_run",
    "COMM", "COMPUTE", "DirectNetwork", "FlowState", "ReconfigPolicy", "SimResult",
    "Simulation", "SimulationError", "SwitchNetwork", "Task", "allreduce_only_tasks",
    "build_tasks", "cdf_points", "discount", "gbps_to_bytes_per_us", "max_min_rates",
    "metrics", "ocs_reconfig_step", "random_expander", "simulate", "simulate_reconfig",
    "utility",
]
