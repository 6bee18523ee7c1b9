"""A 432-server cluster split into 16-server shards, one job per shard."""

from cotopo.altopt import SearchConfig
from cotopo.simulator import AdmissionError, job_mix, multi_job_run

cfg = SearchConfig(mcmc_budget=10, alt_rounds=2)
for jobs in (9, 18, 27):
    res = multi_job_run(job_mix(jobs), 432, d=4, cfg=cfg)
    print(f"{jobs:2d} jobs: mean {res.mean_us / 1e3:9.1f} ms  p99 {res.p99_us / 1e3:9.1f} ms")

# shards are disjoint, so the 28th job has nowhere to go
try:
    multi_job_run(job_mix(28), 432, cfg=cfg)
except AdmissionError as e:
    print("28 jobs:", e)
