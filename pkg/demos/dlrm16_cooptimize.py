"""Co-optimize strategy and topology for the small DLRM model on 16 servers, d = 3.

Writes the topology, strategy and traffic heatmap to ./dlrm16_out.
"""

from pathlib import Path

import numpy as np

from cotopo.altopt import SearchConfig, alternate_optimize, ring_assignment_for
from cotopo.topology import ALLREDUCE, MP, mean_path_length
from cotopo.workload import derive_transfers, export_heatmap, load_preset, traffic_matrix

out = Path("dlrm16_out")
out.mkdir(exist_ok=True)

job = load_preset("dlrm16")
print(job.name, "on", job.n, "servers,", len(job.layers), "layers")

res = alternate_optimize(job, job.n, 3, SearchConfig(mcmc_budget=60, alt_rounds=3, seed=1))
print("iteration time per round (ms):", [round(t / 1e3, 1) for t in res.iteration_time_us])

for i, (layer, p) in enumerate(zip(job.layers, res.strategy.placements)):
    print(f"  {layer.name:>10s}  {p.mode:9s} on {p.size} server(s)")

t = res.topology
print("AllReduce links", len(t.subgraph(ALLREDUCE).links),
      "| MP links", len(t.subgraph(MP).links),
      "| mean hops", round(mean_path_length(t), 2))

ts = derive_transfers(job, res.strategy)
tm = traffic_matrix(ts, ring_assignment_for(ts, res.routes))
export_heatmap(tm, out / "heatmap.csv")
t.to_json(out / "topology.json")
print("busiest pair carries", f"{tm.max() / 1e9:.2f} GB;",
      "pairs with traffic:", int(np.count_nonzero(tm)))
