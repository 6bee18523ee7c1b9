"""Turn a placed job into a per-iteration task DAG."""

from __future__ import annotations

from typing import Mapping, Sequence

from ..permutations import ring_from_stride
from ..workload import (AllReduceGroup, JobSpec, ParallelStrategy, TransferSet,
                        derive_transfers)
from .engine import Task


class _Ids:
    def __init__(self, start=0):
        self.next = start

    def __call__(self):
        self.next += 1
        return self.next - 1


def allreduce_flows(groups: Sequence[AllReduceGroup], n: int,
                    ring_assignment: Mapping[int, Sequence[int]] | None,
                    ids, deps_of=lambda member, group: (), tag="ar") -> list[Task]:
    """One flow per ring edge; each member's volume is split over the strides."""
    out = []
    for g in groups:
        strides = list((ring_assignment or {}).get(g.group_id, [1])) or [1]
        share = g.ring_bytes_per_member / len(strides)
        for p in strides:
            ring = ring_from_stride(n, g.k, p, g.members)
            for u, v in ring.edges():
                out.append(Task.comm(ids(), u, v, share, deps=deps_of(u, g),
                                     tag=f"{tag}:g{g.group_id}:p{p}"))
    return out


def build_tasks(job: JobSpec, strategy: ParallelStrategy,
                ring_assignment: Mapping[int, Sequence[int]] | None = None,
                overlap: bool = False, ts: TransferSet | None = None,
                id_offset: int = 0, server_map: Sequence[int] | None = None) -> list[Task]:
    """Forward pass, backward pass and gradient synchronization of one iteration.

    Compute runs in layer order on every server that holds part of a layer;
    each share takes ``n / |placement|`` times the per-server profile.
    Without ``overlap`` a server starts its AllReduce traffic after its whole
    backward pass; with it, a group starts once its layers are done locally.
    ``server_map`` relabels job-local servers (used for cluster shards).
    """
    ts = ts if ts is not None else derive_transfers(job, strategy)
    n = job.n
    smap = list(server_map) if server_map is not None else list(range(n))
    ids = _Ids(id_offset)
    tasks: list[Task] = []
    L = len(job.layers)
    consumers = job.consumers()

    fwd_in: dict = {}     # (layer, server) -> incoming fwd transfer ids
    bwd_in: dict = {}
    by_layer: dict = {}
    for t in ts.mp_transfers:
        by_layer.setdefault((t.layer, t.phase), []).append(t)

    last = {s: None for s in range(n)}
    fwd_task: dict = {}
    bwd_task: dict = {}

    def chain(s, deps):
        d = list(deps)
        if last[s] is not None:
            d.append(last[s])
        return tuple(d)

    # forward
    for i, layer in enumerate(job.layers):
        pl = strategy.placements[i]
        scale = n / pl.size
        for s in pl.servers:
            tid = ids()
            tasks.append(Task.compute(tid, layer.fwd_compute_us * scale,
                                      chain(s, fwd_in.get((i, s), [])), tag=f"fwd:{i}"))
            fwd_task[(i, s)] = tid
            last[s] = tid
        c = consumers[i]
        for t in by_layer.get((i, "fwd"), []):
            tid = ids()
            tasks.append(Task.comm(tid, smap[t.src], smap[t.dst], t.bytes,
                                   deps=(fwd_task[(i, t.src)],), tag=f"mpf:{i}"))
            fwd_in.setdefault((c, t.dst), []).append(tid)
    # local producer -> consumer ordering on the same server
    # is implied by the per-server chain.

    # backward
    for i in range(L - 1, -1, -1):
        layer = job.layers[i]
        pl = strategy.placements[i]
        scale = n / pl.size
        for s in pl.servers:
            tid = ids()
            tasks.append(Task.compute(tid, layer.bwd_compute_us * scale,
                                      chain(s, bwd_in.get((i, s), [])), tag=f"bwd:{i}"))
            bwd_task[(i, s)] = tid
            last[s] = tid
        for t in by_layer.get((i, "bwd"), []):
            # gradient of layer i's output flows from consumer back to producer
            c = consumers[i]
            tid = ids()
            tasks.append(Task.comm(tid, smap[t.src], smap[t.dst], t.bytes,
                                   deps=(bwd_task[(c, t.src)],), tag=f"mpb:{i}"))
            bwd_in.setdefault((i, t.dst), []).append(tid)

    # gradient synchronization
    if ts.allreduce_groups:
        def deps_of(member, g):
            if overlap:
                return tuple(bwd_task[(j, member)] for j in g.layers
                             if (j, member) in bwd_task)
            return (last[member],) if last[member] is not None else ()
        groups = [AllReduceGroup(g.group_id, tuple(smap[m] for m in g.members),
                                 g.bytes_per_member, g.layers) for g in ts.allreduce_groups]
        local = {smap[s]: s for s in range(n)}

        def deps_global(member, g):
            return deps_of(local[member], g)
        tasks += allreduce_flows(groups, max(smap) + 1, ring_assignment, ids, deps_global)
    return tasks


def allreduce_only_tasks(groups: Sequence[AllReduceGroup], n: int,
                         ring_assignment: Mapping[int, Sequence[int]] | None = None,
                         compute_us: float = 0.0) -> list[Task]:
    """Pure gradient-synchronization workload, optionally after a compute step."""
    ids = _Ids()
    tasks: list[Task] = []
    pre = {}
    if compute_us > 0:
        for s in sorted({m for g in groups for m in g.members}):
            tid = ids()
            tasks.append(Task.compute(tid, compute_us, tag="compute"))
            pre[s] = tid
    tasks += allreduce_flows(groups, n, ring_assignment, ids,
                             lambda m, g: (pre[m],) if m in pre else ())
    return tasks
