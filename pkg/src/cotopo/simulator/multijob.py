"""Several jobs sharing one cluster on disjoint server shards.

Every job gets a contiguous block of servers and the links among them; no
traffic crosses shards, so each job is optimized and simulated on its own
relabelled sub-cluster.  Jobs with the same description share one run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..workload import JobSpec, load_preset
from .engine import SimResult

JOB_MIX = (("dlrm_shared", 4), ("bert_shared", 3), ("candle_shared", 2), ("vgg_shared", 1))


class AdmissionError(ValueError):
    pass


@dataclass(frozen=True)
class JobRequest:
    job: JobSpec
    servers: int

    def __post_init__(self):
        if self.servers < 1:
            raise AdmissionError("a job needs at least one server")


@dataclass
class MultiJobResult:
    n: int
    shards: list                      # (first server, count) per job
    results: list                     # SimResult per job
    names: list = field(default_factory=list)

    @property
    def times_us(self) -> np.ndarray:
        return np.array([r.iteration_time_us for r in self.results], dtype=float)

    @property
    def mean_us(self) -> float:
        return float(self.times_us.mean()) if self.results else 0.0

    @property
    def p99_us(self) -> float:
        return float(np.percentile(self.times_us, 99)) if self.results else 0.0

    def rows(self) -> list[dict]:
        return [{"job": i, "name": nm, "first_server": s0, "servers": k,
                 "iteration_time_us": r.iteration_time_us}
                for i, (nm, (s0, k), r) in enumerate(zip(self.names, self.shards, self.results))]


def allocate_shards(sizes, n: int) -> list[tuple[int, int]]:
    """Contiguous blocks in request order."""
    total = sum(sizes)
    if total > n:
        raise AdmissionError(f"jobs request {total} servers but the cluster has {n}")
    out, nxt = [], 0
    for k in sizes:
        out.append((nxt, k))
        nxt += k
    return out


def job_mix(num_jobs: int, servers_per_job: int = 16) -> list[JobRequest]:
    """Deterministic 40/30/20/10 mix of the shared-cluster presets.

    Job ``i`` takes its model from position ``i mod 10`` of the weighted
    pattern, so every prefix of ten jobs has the exact proportions.
    """
    pattern = [name for name, w in JOB_MIX for _ in range(w)]
    cache = {}
    out = []
    for i in range(num_jobs):
        name = pattern[i % len(pattern)]
        if name not in cache:
            cache[name] = load_preset(name, num_servers=servers_per_job)
        out.append(JobRequest(cache[name], servers_per_job))
    return out


def default_runner(d: int, link_gbps: float, cfg):
    from ..altopt import alternate_optimize, ring_assignment_for
    from ..workload import derive_transfers
    from .engine import simulate
    from .networks import DirectNetwork
    from .tasks import build_tasks

    def run(job: JobSpec) -> SimResult:
        opt = alternate_optimize(job, job.n, d, cfg, link_gbps)
        ts = derive_transfers(job, opt.strategy)
        tasks = build_tasks(job, opt.strategy, ring_assignment_for(ts, opt.routes),
                            cfg.overlap, ts)
        return simulate(tasks, DirectNetwork(opt.topology, link_gbps, opt.routes))
    return run


def multi_job_run(requests, n: int, d: int = 4, link_gbps: float = 100.0, cfg=None,
                  runner=None) -> MultiJobResult:
    """Admit every request on its own shard and run each job independently.

    ``runner(job) -> SimResult`` defaults to alternating optimization on a
    direct-connect shard followed by one simulated iteration.
    """
    from ..altopt import SearchConfig
    requests = list(requests)
    shards = allocate_shards([r.servers for r in requests], n)
    if runner is None:
        runner = default_runner(d, link_gbps, cfg or SearchConfig())
    memo: dict = {}
    results, names = [], []
    for req in requests:
        job = req.job if req.job.n == req.servers else req.job.with_servers(req.servers)
        if job not in memo:
            memo[job] = runner(job)
        results.append(memo[job])
        names.append(job.name)
    return MultiJobResult(n, shards, results, names)
