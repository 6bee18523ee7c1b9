"""Parallelization search and its alternation with topology construction.

The strategy search is a Metropolis chain over per-layer placements: each
proposal moves one layer to a new (mode, server block) choice.  Cost is the
simulated iteration time on a fixed network.  The outer loop alternates the
search with rebuilding the topology for the strategy's traffic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .routing import RoutingError, RoutingTable
from .simulator.engine import SimulationError, simulate
from .simulator.networks import DirectNetwork
from .simulator.tasks import build_tasks
from .topology import Topology, TopologyError, topology_finder
from .workload import (REPLICATE, PARTITION, JobSpec, ParallelStrategy, Placement,
                       data_parallel, derive_transfers)


@dataclass(frozen=True)
class SearchConfig:
    mcmc_budget: int = 100
    initial_temperature: float | None = None   # None: 5% of the initial cost
    temperature_fraction: float = 0.05
    decay: float = 0.99
    alt_rounds: int = 3
    convergence_epsilon: float = 0.01
    seed: int = 0
    overlap: bool = False
    k_paths: int = 2

    def __post_init__(self):
        if self.mcmc_budget < 1:
            raise ValueError("mcmc_budget must be >= 1")
        if self.alt_rounds < 1:
            raise ValueError("alt_rounds must be >= 1")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.convergence_epsilon <= 0:
            raise ValueError("convergence_epsilon must be > 0")


@dataclass
class OptResult:
    strategy: ParallelStrategy
    topology: Topology
    routes: RoutingTable
    iteration_time_us: list = field(default_factory=list)
    log: list = field(default_factory=list)

    @property
    def best_time_us(self) -> float:
        return min(self.iteration_time_us)

    def write_log(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def ring_assignment_for(ts, routes: RoutingTable | None) -> dict:
    """Reuse a group's strides when a ring set was built for the same members."""
    if routes is None:
        return {}
    by_members = {tuple(m): routes.group_strides[g] for g, m in routes.group_members.items()}
    return {g.group_id: by_members[tuple(g.members)]
            for g in ts.allreduce_groups if tuple(g.members) in by_members}


def estimate_iteration_time(job: JobSpec, strategy: ParallelStrategy, topology: Topology,
                            routes: RoutingTable | None, link_gbps: float = 100.0,
                            overlap: bool = False, prop_delay_us: float = 1.0) -> float:
    """Simulated iteration time of ``strategy`` on a direct-connect topology."""
    ts = derive_transfers(job, strategy)
    net = DirectNetwork(topology, link_gbps, routes, prop_delay_us)
    tasks = build_tasks(job, strategy, ring_assignment_for(ts, routes), overlap, ts)
    return simulate(tasks, net).iteration_time_us


def network_cost_fn(job: JobSpec, network, overlap: bool = False,
                    ring_assignment_fn=None) -> Callable[[ParallelStrategy], float]:
    """Iteration time of a strategy on a fixed network; inf if unroutable."""
    def cost(strategy):
        ts = derive_transfers(job, strategy)
        ra = ring_assignment_fn(ts) if ring_assignment_fn else {}
        try:
            return simulate(build_tasks(job, strategy, ra, overlap, ts), network).iteration_time_us
        except SimulationError:
            return math.inf
    return cost


def placement_choices(n: int, allow_partition: bool = True) -> list[Placement]:
    """Power-of-two server blocks (plus the whole cluster) in both modes."""
    sizes = []
    m = 1
    while m <= n:
        sizes.append(m)
        m *= 2
    if n not in sizes:
        sizes.append(n)
    out = []
    for m in sizes:
        for o in range(0, n - m + 1, m):
            block = tuple(range(o, o + m))
            if m >= 2:
                out.append(Placement(REPLICATE, block))
            if allow_partition:
                out.append(Placement(PARTITION, block))
    return out


def mcmc_search(job: JobSpec, topology: Topology | None = None,
                routes: RoutingTable | None = None, cfg: SearchConfig = SearchConfig(),
                init: ParallelStrategy | None = None,
                cost_fn: Callable[[ParallelStrategy], float] | None = None,
                link_gbps: float = 100.0, trace: list | None = None,
                log: list | None = None) -> ParallelStrategy:
    """Best strategy seen by a Metropolis chain started at ``init`` (default DP).

    ``trace`` receives one ``(step, layer, placement, cost, accepted)`` tuple
    per proposal.
    """
    if cost_fn is None:
        if topology is None:
            raise ValueError("need a topology or a cost function")
        net = DirectNetwork(topology, link_gbps, routes)
        cost_fn = network_cost_fn(job, net, cfg.overlap,
                                  lambda ts: ring_assignment_for(ts, routes))
    rng = np.random.default_rng(cfg.seed)
    cache: dict = {}

    def cost(s):
        key = s.placements
        if key not in cache:
            cache[key] = cost_fn(s)
        return cache[key]

    cur = init if init is not None else data_parallel(job)
    cur_cost = cost(cur)
    best, best_cost = cur, cur_cost
    if cfg.initial_temperature is not None:
        temp = cfg.initial_temperature
    else:
        temp = cfg.temperature_fraction * (cur_cost if math.isfinite(cur_cost) else 1.0)
    choices = placement_choices(job.n)
    L = len(job.layers)
    for step in range(cfg.mcmc_budget):
        i = int(rng.integers(L))
        options = [p for p in choices if p != cur.placements[i]]
        if not options:
            continue
        p = options[int(rng.integers(len(options)))]
        cand = cur.replace(i, p)
        c = cost(cand)
        delta = c - cur_cost
        u = rng.random()
        if delta < 0:
            accept = True
        elif not math.isfinite(c):
            accept = False
        elif temp <= 0:
            accept = False
        else:
            accept = u < math.exp(-delta / temp)
        if trace is not None:
            trace.append((step, i, p, c, accept))
        if accept:
            cur, cur_cost = cand, c
            if log is not None:
                log.append({"event": "accept", "step": step, "layer": i, "mode": p.mode,
                            "servers": [p.servers[0], len(p.servers)], "cost_us": c})
            if c < best_cost:
                best, best_cost = cand, c
        temp *= cfg.decay
    return best


def _rebuild(job, strategy, n, d, cfg):
    ts = derive_transfers(job, strategy)
    return topology_finder(n, d, ts, k_paths=cfg.k_paths)


def alternate_optimize(job: JobSpec, n: int | None = None, d: int = 4,
                       cfg: SearchConfig = SearchConfig(), link_gbps: float = 100.0,
                       rounds: int | None = None) -> OptResult:
    """Alternate strategy search and topology construction.

    Round ``r`` searches on the current topology (warm-started from the
    previous strategy), then rebuilds the topology for the result and keeps
    it when it lowers the simulated iteration time.  Stops after
    ``cfg.alt_rounds`` rounds or once a round improves by less than
    ``cfg.convergence_epsilon``.  Iteration times are best-seen per round.
    """
    n = n if n is not None else job.n
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    job = job if job.n == n else job.with_servers(n)
    rounds = rounds if rounds is not None else cfg.alt_rounds
    strategy = data_parallel(job)
    topo, routes = _rebuild(job, strategy, n, d, cfg)
    best_t = estimate_iteration_time(job, strategy, topo, routes, link_gbps, cfg.overlap)
    best = (strategy, topo, routes)
    times: list = []
    log: list = [{"event": "start", "cost_us": best_t}]
    for r in range(rounds):
        rcfg = SearchConfig(**{**cfg.__dict__, "seed": cfg.seed + r})
        strategy = mcmc_search(job, topo, routes, rcfg, init=best[0],
                               link_gbps=link_gbps, log=log)
        t_s = estimate_iteration_time(job, strategy, topo, routes, link_gbps, cfg.overlap)
        try:
            new_topo, new_routes = _rebuild(job, strategy, n, d, cfg)
            t_new = estimate_iteration_time(job, strategy, new_topo, new_routes,
                                            link_gbps, cfg.overlap)
        except (SimulationError, TopologyError, RoutingError):
            t_new = math.inf
        if t_new < t_s:
            topo, routes, t_round = new_topo, new_routes, t_new
        else:
            t_round = t_s
        prev = best_t
        if t_round < best_t:
            best_t = t_round
            best = (strategy, topo, routes)
        times.append(best_t)
        log.append({"event": "round", "round": r + 1, "cost_us": t_round, "best_us": best_t})
        if prev - best_t < cfg.convergence_epsilon * prev:
            break
    return OptResult(best[0], best[1], best[2], times, log)


def sequential_optimize(job: JobSpec, n: int | None = None, d: int = 4,
                        cfg: SearchConfig = SearchConfig(),
                        link_gbps: float = 100.0) -> OptResult:
    """One pass: search the strategy, then build its topology once."""
    return alternate_optimize(job, n, d, cfg, link_gbps, rounds=1)


def analytic_iteration_time(R_bytes: float, A_bytes: float, n: int, B: float,
                            alpha: float, C_bs: float) -> float:
    """AllReduce plus all-to-all time on ``n`` servers of bandwidth ``B``, plus compute."""
    for name, v in (("R", R_bytes), ("A", A_bytes), ("n", n), ("B", B),
                    ("alpha", alpha), ("C", C_bs)):
        if v < 0:
            raise ValueError(f"{name} must be >= 0")
    if n * B <= 0:
        raise ValueError("aggregate bandwidth n*B must be > 0")
    return R_bytes / (n * B) + alpha * A_bytes / (n * B) + C_bs
