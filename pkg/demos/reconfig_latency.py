"""How circuit switching delay hurts a job that mixes AllReduce with point-to-point traffic."""

from cotopo.simulator import ReconfigPolicy, Task, allreduce_only_tasks, simulate_reconfig
from cotopo.workload import AllReduceGroup

g = AllReduceGroup(0, tuple(range(8)), 4e9, (0,))
tasks = allreduce_only_tasks([g], 8, compute_us=100.0)
tasks += [Task.comm(10_000 + i, i, (i + 3) % 8, 2e9) for i in range(8)]

for lat in (1, 10, 100, 1_000, 10_000):
    res = simulate_reconfig(tasks, ReconfigPolicy(reconfig_latency_us=lat), 8, 2, 100)
    print(f"latency {lat:>6} us: {res.iteration_time_us / 1e3:8.2f} ms, "
          f"{res.reconfigs} reconfigurations, paused {res.pause_us / 1e3:.2f} ms")

# without host forwarding a flow waits for its own circuit
pol = ReconfigPolicy(reconfig_latency_us=1.0, forwarding=False)
res = simulate_reconfig(tasks, pol, 8, 2, 100)
print(f"no forwarding, 1 us: {res.iteration_time_us / 1e3:.2f} ms")
