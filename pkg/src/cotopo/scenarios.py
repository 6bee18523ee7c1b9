"""Evaluate a job on each simulated interconnect architecture."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .altopt import (SearchConfig, alternate_optimize, mcmc_search, network_cost_fn,
                     ring_assignment_for)
from .costmodel import PriceTable, cost_equivalent_fattree_bandwidth
from .simulator.engine import SimResult, simulate
from .simulator.metrics import metrics
from .simulator.networks import DirectNetwork, SwitchNetwork, random_expander
from .simulator.reconfig import UNITY, ReconfigPolicy, simulate_reconfig
from .simulator.tasks import build_tasks
from .workload import JobSpec, ParallelStrategy, data_parallel, derive_transfers

PERF_ARCHITECTURES = ("direct_connect", "ideal_switch", "fat_tree", "oversub_fat_tree",
                      "expander", "ocs_reconfig", "sip_ml")


class ScenarioError(ValueError):
    pass


@dataclass
class ArchResult:
    architecture: str
    iteration_time_us: float
    result: SimResult
    strategy: ParallelStrategy
    topology: object = None
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        m = metrics(self.result)
        return {"architecture": self.architecture,
                "iteration_time_us": self.iteration_time_us,
                "bandwidth_tax": m["bandwidth_tax"],
                "flow_path_length_mean": m["flow_path_length_mean"],
                "link_load_max": m["link_load_max"],
                **self.extra}


def _search_on(job, network, cfg, ring_fn=None, search=True, fixed=None):
    if fixed is not None:
        return fixed
    if not search:
        return data_parallel(job)
    cost = network_cost_fn(job, network, cfg.overlap, ring_fn)
    return mcmc_search(job, cfg=cfg, cost_fn=cost)


def evaluate(arch: str, job: JobSpec, d: int = 4, B: float = 100.0,
             cfg: SearchConfig = SearchConfig(), prices: PriceTable | None = None,
             policy: ReconfigPolicy | None = None, search: bool = True,
             seed: int = 0, strategy: ParallelStrategy | None = None) -> ArchResult:
    """Iteration time of ``job`` on ``arch`` with ``d`` links of ``B`` Gbps.

    With ``search=False`` every architecture runs pure data parallelism (or
    ``strategy`` when given) and the direct-connect topology is built once
    for it.
    """
    n = job.n
    if strategy is not None:
        strategy.validate(job)
        search = False
    if arch == "direct_connect":
        if search:
            opt = alternate_optimize(job, n, d, cfg, B)
            strat, topo, routes = opt.strategy, opt.topology, opt.routes
        else:
            from .topology import topology_finder
            strat = strategy or data_parallel(job)
            topo, routes = topology_finder(n, d, derive_transfers(job, strat), cfg.k_paths)
        ts = derive_transfers(job, strat)
        net = DirectNetwork(topo, B, routes)
        res = simulate(build_tasks(job, strat, ring_assignment_for(ts, routes), cfg.overlap, ts),
                       net)
        return ArchResult(arch, res.iteration_time_us, res, strat, topo)

    if arch in ("ideal_switch", "fat_tree", "oversub_fat_tree"):
        extra = {}
        if arch == "fat_tree":
            bp = cost_equivalent_fattree_bandwidth(n, d, B, prices, seed)
            net = SwitchNetwork(n, d * bp)
            extra["B_prime"] = bp
        elif arch == "ideal_switch":
            net = SwitchNetwork(n, d * B)
        else:
            net = SwitchNetwork(n, d * B, oversub=2.0)
        strat = _search_on(job, net, cfg, search=search, fixed=strategy)
        res = simulate(build_tasks(job, strat, None, cfg.overlap), net)
        return ArchResult(arch, res.iteration_time_us, res, strat, None, extra)

    if arch == "expander":
        topo = random_expander(n, d, seed)
        net = DirectNetwork(topo, B)
        strat = _search_on(job, net, cfg, search=search, fixed=strategy)
        res = simulate(build_tasks(job, strat, None, cfg.overlap), net)
        return ArchResult(arch, res.iteration_time_us, res, strat, topo)

    if arch in ("ocs_reconfig", "sip_ml"):
        if policy is None:
            policy = ReconfigPolicy()
        if arch == "sip_ml":
            policy = ReconfigPolicy("periodic", policy.interval_us, policy.reconfig_latency_us,
                                    forwarding=False, discount=UNITY)
        # circuits follow the demand, so pick the strategy a full-bandwidth switch would
        strat = _search_on(job, SwitchNetwork(n, d * B), cfg, search=search, fixed=strategy)
        res = simulate_reconfig(build_tasks(job, strat, None, cfg.overlap), policy, n, d, B)
        return ArchResult(arch, res.iteration_time_us, res, strat, None,
                          {"reconfigs": res.reconfigs, "pause_us": res.pause_us})

    raise ScenarioError(f"unknown architecture {arch!r}; choose from {PERF_ARCHITECTURES}")
