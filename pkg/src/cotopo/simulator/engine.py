"""Event-driven fluid simulation of a task DAG over a network.

Ready communication tasks become flows.  Every flow crosses a list of links
and receives its max-min fair share, recomputed whenever the set of flows
changes.  A flow's last byte arrives ``delay_us`` after it leaves the source.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix

COMPUTE = "compute"
COMM = "comm"

# Gbps -> bytes per microsecond
def gbps_to_bytes_per_us(gbps: float) -> float:
    return gbps * 1e3 / 8.0


class SimulationError(RuntimeError):
    pass


@dataclass
class Task:
    id: int
    kind: str
    duration_us: float = 0.0
    src: int = -1
    dst: int = -1
    bytes: float = 0.0
    deps: tuple = ()
    tag: str = ""

    @classmethod
    def compute(cls, id, duration_us, deps=(), tag=""):
        return cls(id, COMPUTE, duration_us=float(duration_us), deps=tuple(deps), tag=tag)

    @classmethod
    def comm(cls, id, src, dst, nbytes, deps=(), tag=""):
        return cls(id, COMM, src=int(src), dst=int(dst), bytes=float(nbytes),
                   deps=tuple(deps), tag=tag)


@dataclass
class FlowState:
    task: Task
    links: list | None
    hops: int
    delay_us: float
    remaining: float
    rate: float = 0.0
    seg_sent: float = 0.0


@dataclass
class SimResult:
    iteration_time_us: float
    link_bytes: dict
    logical_bytes: float
    wire_bytes: float
    path_hops: list
    completion_us: dict
    pause_us: float = 0.0
    reconfigs: int = 0

    @property
    def bandwidth_tax(self) -> float:
        if self.logical_bytes <= 0:
            return 1.0
        return self.wire_bytes / self.logical_bytes

    @property
    def path_length_histogram(self) -> dict:
        h: dict = {}
        for x in self.path_hops:
            h[x] = h.get(x, 0) + 1
        return dict(sorted(h.items()))

    def to_dict(self) -> dict:
        return {
            "iteration_time_us": self.iteration_time_us,
            "bandwidth_tax": self.bandwidth_tax,
            "logical_bytes": self.logical_bytes,
            "wire_bytes": self.wire_bytes,
            "path_length_histogram": {str(k): v for k, v in self.path_length_histogram.items()},
            "pause_us": self.pause_us,
            "reconfigs": self.reconfigs,
            "link_bytes": [[u, v, b] for (u, v), b in sorted(self.link_bytes.items(),
                                                             key=lambda kv: str(kv[0]))],
        }


def max_min_rates(flow_links: Sequence[Sequence[int]], capacity: np.ndarray) -> np.ndarray:
    """Progressive filling: raise all unfrozen rates until a link saturates."""
    nf = len(flow_links)
    if nf == 0:
        return np.zeros(0)
    # flows over the same links always get the same rate: solve per class
    classes: dict = {}
    member = np.empty(nf, dtype=np.int64)
    for j, ls in enumerate(flow_links):
        member[j] = classes.setdefault(tuple(ls), len(classes))
    keys = list(classes)
    nc = len(keys)
    weight = np.bincount(member, minlength=nc).astype(float)
    rows, cols = [], []
    for c, ls in enumerate(keys):
        rows.extend(ls)
        cols.extend([c] * len(ls))
    nl = len(capacity)
    if nl * nc <= 4_000_000:
        A = np.zeros((nl, nc))
        np.add.at(A, (rows, cols), 1.0)
        AT = A.T
    else:
        A = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nl, nc))
        AT = A.T.tocsr()
    cap = capacity.astype(float).copy()
    crate = np.zeros(nc)
    # classes without links are not constrained by the network
    empty = np.array([len(k) == 0 for k in keys])
    active = ~empty
    crate[empty] = np.inf
    while active.any():
        users = A @ (weight * active)
        used = users > 0
        share = np.full(nl, np.inf)
        share[used] = cap[used] / users[used]
        inc = share.min()
        if not np.isfinite(inc):
            break
        crate[active] += inc
        cap -= users * inc
        tight = used & (share <= inc * (1 + 1e-12) + 1e-15)
        cap[tight] = 0.0
        frozen = (AT @ tight.astype(float)) > 0
        active &= ~frozen
    return crate[member]


class Simulation:
    """One run of a task DAG; ``controller`` may reconfigure the network.

    Active flows live in parallel arrays; ``_A`` is the link-by-flow
    incidence matrix, kept in step with the arrays.
    """

    def __init__(self, tasks: Sequence[Task], network, controller=None):
        self.tasks = {t.id: t for t in tasks}
        if len(self.tasks) != len(tasks):
            raise SimulationError("duplicate task ids")
        self.network = network
        self.controller = controller
        self.children: dict = {tid: [] for tid in self.tasks}
        self.waiting: dict = {}
        for t in tasks:
            deps = set(t.deps)
            for d in deps:
                if d not in self.tasks:
                    raise SimulationError(f"task {t.id} depends on unknown task {d}")
                self.children[d].append(t.id)
            self.waiting[t.id] = len(deps)
        self._check_acyclic()
        self.now = 0.0
        self.compute_heap: list = []
        self.tail_heap: list = []
        self.done: dict = {}
        self.link_bytes = np.zeros(network.num_links)
        self._banked: dict = {}
        self.wire_bytes = 0.0
        self.path_hops: list = []
        self.paused_until = -math.inf
        self.pause_total = 0.0
        self.reconfigs = 0
        # active flows
        self._fid: list = []
        self._links: list = []
        self._rem = np.zeros(0)
        self._rate = np.zeros(0)
        self._seg = np.zeros(0)
        self._hops = np.zeros(0, dtype=np.int64)
        self._delay = np.zeros(0)
        self._size = np.zeros(0)
        self._A = np.zeros((network.num_links, 0))
        self._pending: list = []
        self._dirty = True

    def _check_acyclic(self):
        indeg = dict(self.waiting)
        stack = [k for k, v in indeg.items() if v == 0]
        seen = 0
        while stack:
            u = stack.pop()
            seen += 1
            for c in self.children[u]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    stack.append(c)
        if seen != len(self.tasks):
            raise SimulationError("task graph has a cycle")

    @property
    def flows(self) -> dict:
        """Snapshot of the active flows keyed by task id."""
        self._flush()
        return {fid: FlowState(self.tasks[fid], self._links[j], int(self._hops[j]),
                               float(self._delay[j]), float(self._rem[j]),
                               float(self._rate[j]), float(self._seg[j]))
                for j, fid in enumerate(self._fid)}

    # --- state changes ----------------------------------------------------

    def _route(self, t):
        links, hops, delay = self.network.route(t.src, t.dst)
        if links is None and not getattr(self.network, "allow_stall", False):
            raise SimulationError(f"no route for flow {t.src} -> {t.dst}")
        return links, hops, delay

    def _release(self, tid):
        t = self.tasks[tid]
        if t.kind == COMPUTE:
            heapq.heappush(self.compute_heap, (self.now + t.duration_us, tid))
            return
        if t.src == t.dst:
            heapq.heappush(self.tail_heap, (self.now, tid))
            return
        links, hops, delay = self._route(t)
        if t.bytes <= 0:
            self.path_hops.append(hops)
            heapq.heappush(self.tail_heap, (self.now + delay, tid))
            return
        self._pending.append((tid, links, hops, delay, t.bytes))
        self._dirty = True

    def _column(self, links):
        col = np.zeros(self.network.num_links)
        if links:
            np.add.at(col, links, 1.0)
        return col

    def _flush(self):
        """Move newly released flows into the arrays."""
        if not self._pending:
            return
        p = self._pending
        self._pending = []
        self._fid += [x[0] for x in p]
        self._links += [x[1] for x in p]
        self._rem = np.concatenate([self._rem, [x[4] for x in p]])
        self._size = np.concatenate([self._size, [x[4] for x in p]])
        self._rate = np.concatenate([self._rate, np.zeros(len(p))])
        self._seg = np.concatenate([self._seg, np.zeros(len(p))])
        self._hops = np.concatenate([self._hops, np.array([x[2] for x in p], dtype=np.int64)])
        self._delay = np.concatenate([self._delay, [x[3] for x in p]])
        cols = np.stack([self._column(x[1]) for x in p], axis=1)
        self._A = np.concatenate([self._A, cols], axis=1)

    def _complete(self, tid):
        self.done[tid] = self.now
        for c in self.children[tid]:
            self.waiting[c] -= 1
            if self.waiting[c] == 0:
                self._release(c)

    def _close_segments(self, idx):
        for j in idx:
            links = self._links[j]
            sent = self._seg[j]
            if links and sent > 0:
                self.link_bytes[links] += sent
                self.wire_bytes += sent * float(self._hops[j])
            self._seg[j] = 0.0

    def reroute_all(self):
        """Recompute every active flow's route on the current network."""
        self._flush()
        self._close_segments(range(len(self._fid)))
        for j, fid in enumerate(self._fid):
            links, hops, delay = self._route(self.tasks[fid])
            self._links[j] = links
            self._hops[j] = hops
            self._delay[j] = delay
        nf = len(self._fid)
        self._A = (np.stack([self._column(l) for l in self._links], axis=1) if nf
                   else np.zeros((self.network.num_links, 0)))
        self._dirty = True

    def pause(self, duration_us: float):
        self.paused_until = self.now + duration_us
        self.pause_total += duration_us
        self._dirty = True

    def set_network(self, network):
        # link ids are per network, so bank the bytes by link name first
        self._flush()
        self._close_segments(range(len(self._fid)))
        self._bank_link_bytes()
        self.network = network
        self.link_bytes = np.zeros(network.num_links)
        self.reroute_all()

    def _bank_link_bytes(self):
        for i in np.nonzero(self.link_bytes)[0]:
            key = self.network.link_key(int(i))
            self._banked[key] = self._banked.get(key, 0.0) + float(self.link_bytes[i])

    def unsatisfied_demand(self, n: int) -> np.ndarray:
        self._flush()
        m = np.zeros((n, n))
        for j, fid in enumerate(self._fid):
            t = self.tasks[fid]
            m[t.src, t.dst] += self._rem[j]
        return m

    # --- rates --------------------------------------------------------------

    def _update_rates(self):
        self._flush()
        nf = len(self._fid)
        self._rate = np.zeros(nf)
        if nf and self.now >= self.paused_until:
            routed = np.array([l is not None for l in self._links], dtype=bool)
            free = np.array([l is not None and len(l) == 0 for l in self._links], dtype=bool)
            self._rate[free] = np.inf
            active = routed & ~free
            cap = self.network.capacity.astype(float).copy()
            A = self._A
            while active.any():
                users = A @ active
                used = users > 0
                share = np.full(len(cap), np.inf)
                share[used] = cap[used] / users[used]
                inc = share.min()
                if not np.isfinite(inc):
                    break
                self._rate[active] += inc
                cap -= users * inc
                tight = used & (share <= inc * (1 + 1e-12) + 1e-15)
                cap[tight] = 0.0
                active &= ~((tight @ A) > 0)
        self._dirty = False

    # --- main loop --------------------------------------------------------

    def run(self) -> SimResult:
        for tid, w in list(self.waiting.items()):
            if w == 0:
                self._release(tid)
        while len(self.done) < len(self.tasks):
            if self._dirty:
                self._update_rates()
            t_next = math.inf
            if self.compute_heap:
                t_next = self.compute_heap[0][0]
            if self.tail_heap:
                t_next = min(t_next, self.tail_heap[0][0])
            moving = self._rate > 0
            if moving.any():
                t_next = min(t_next, self.now + float(np.min(self._rem[moving] / self._rate[moving])))
            if self.now < self.paused_until:
                t_next = min(t_next, self.paused_until)
            if self.controller is not None:
                t_next = min(t_next, self.controller.next_time(self))
            if not math.isfinite(t_next):
                raise SimulationError("simulation stalled with unfinished tasks")
            self._advance(max(t_next, self.now))
            self._process_events()
        self._bank_link_bytes()
        return SimResult(
            iteration_time_us=max(self.done.values(), default=0.0),
            link_bytes=dict(self._banked),
            logical_bytes=float(sum(t.bytes for t in self.tasks.values()
                                    if t.kind == COMM and t.src != t.dst)),
            wire_bytes=float(self.wire_bytes),
            path_hops=list(self.path_hops),
            completion_us=dict(self.done),
            pause_us=self.pause_total,
            reconfigs=self.reconfigs,
        )

    def _advance(self, t):
        dt = t - self.now
        if dt > 0 and len(self._rem):
            sent = np.minimum(self._rem, self._rate * dt)
            self._rem -= sent
            self._seg += sent
        self.now = float(t)

    def _process_events(self):
        if len(self._rem):
            with np.errstate(divide="ignore", invalid="ignore"):
                left = np.where(self._rate > 0, self._rem / self._rate, np.inf)
            fin = (self._rem <= 1e-9 * np.maximum(1.0, self._size)) | (left <= 1e-9)
            if fin.any():
                idx = np.flatnonzero(fin)
                self._seg[idx] += self._rem[idx]
                self._rem[idx] = 0.0
                self._close_segments(idx)
                for j in idx:
                    self.path_hops.append(int(self._hops[j]))
                    heapq.heappush(self.tail_heap,
                                   (self.now + float(self._delay[j]), int(self._fid[j])))
                keep = ~fin
                self._fid = [f for f, k in zip(self._fid, keep) if k]
                self._links = [l for l, k in zip(self._links, keep) if k]
                for name in ("_rem", "_rate", "_seg", "_hops", "_delay", "_size"):
                    setattr(self, name, getattr(self, name)[keep])
                self._A = self._A[:, keep]
                self._dirty = True
        if self.now >= self.paused_until and self.paused_until > -math.inf:
            self.paused_until = -math.inf
            self._dirty = True
        while self.compute_heap and self.compute_heap[0][0] <= self.now + 1e-9:
            _, tid = heapq.heappop(self.compute_heap)
            self._complete(tid)
        while self.tail_heap and self.tail_heap[0][0] <= self.now + 1e-9:
            _, tid = heapq.heappop(self.tail_heap)
            self._complete(tid)
        if self.controller is not None and self.controller.next_time(self) <= self.now + 1e-9:
            self.controller.fire(self)


def simulate(tasks: Sequence[Task], network, controller=None) -> SimResult:
    return Simulation(tasks, network, controller).run()
