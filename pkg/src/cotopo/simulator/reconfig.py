"""Periodic circuit reconfiguration driven by unsatisfied demand."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ..topology import Link, Topology
from .engine import SimResult, Simulation, Task
from .networks import DirectNetwork

EXPONENTIAL = "exponential"
UNITY = "unity"


@dataclass(frozen=True)
class ReconfigPolicy:
    mode: str = "periodic"
    interval_us: float = 50_000.0
    reconfig_latency_us: float = 10_000.0
    forwarding: bool = True
    discount: str = EXPONENTIAL

    def __post_init__(self):
        if self.mode not in ("static", "periodic"):
            raise ValueError(f"unknown reconfiguration mode {self.mode!r}")
        if self.discount not in (EXPONENTIAL, UNITY):
            raise ValueError(f"unknown discount {self.discount!r}")
        if self.reconfig_latency_us < 0 or self.interval_us <= self.reconfig_latency_us:
            raise ValueError("need interval > latency >= 0")


def discount(l: int, kind: str = EXPONENTIAL) -> float:
    """Worth of ``l`` parallel links relative to the demand they serve."""
    if l <= 0:
        return 0.0
    if kind == UNITY:
        return 1.0
    return 1.0 - 2.0 ** (-l)


def utility(L: np.ndarray, T: np.ndarray, kind: str = EXPONENTIAL) -> float:
    L = np.asarray(L)
    T = np.asarray(T, dtype=float)
    if kind == UNITY:
        return float(T[L > 0].sum())
    return float((T * (1.0 - np.power(2.0, -L.astype(float)))).sum())


def _weak_components(L: np.ndarray):
    n = L.shape[0]
    ncomp, labels = connected_components(csr_matrix(L > 0), directed=True, connection="weak")
    return ncomp, labels


def _cheapest_edge(L, T, nodes, kind):
    """Edge inside ``nodes`` whose removal loses the least utility."""
    best = None
    for u in nodes:
        for v in nodes:
            if L[u, v] <= 0:
                continue
            loss = T[u, v] if kind == UNITY and L[u, v] == 1 else (
                0.0 if kind == UNITY else T[u, v] * 2.0 ** (-L[u, v]))
            key = (loss, u, v)
            if best is None or key < best:
                best = key
    return None if best is None else (best[1], best[2])


def connect_components(L: np.ndarray, T: np.ndarray, kind: str = EXPONENTIAL) -> np.ndarray:
    """Merge weakly connected components by swapping the endpoints of two links.

    Removing ``a1->a2`` and ``b1->b2`` and adding ``a1->b2``, ``b1->a2`` keeps
    every port count unchanged.  Since each node uses as many tx as rx ports
    the result is strongly connected once it is weakly connected.
    """
    L = L.copy()
    n = L.shape[0]
    while True:
        ncomp, labels = _weak_components(L)
        if ncomp <= 1:
            return L
        comps = [np.flatnonzero(labels == c).tolist() for c in range(ncomp)]
        comps.sort(key=lambda c: c[0])
        A, B = comps[0], comps[1]
        ea = _cheapest_edge(L, T, A, kind)
        eb = _cheapest_edge(L, T, B, kind)
        if ea is None and eb is None:
            raise RuntimeError("cannot connect two isolated nodes without links")
        if ea is None or eb is None:
            # one side is an isolated node with free ports: splice it in
            (u, v), x = (eb, A[0]) if ea is None else (ea, B[0])
            L[u, v] -= 1
            L[u, x] += 1
            L[x, v] += 1
            continue
        (a1, a2), (b1, b2) = ea, eb
        L[a1, a2] -= 1
        L[b1, b2] -= 1
        L[a1, b2] += 1
        L[b1, a2] += 1


def ocs_reconfig_step(n: int, T: np.ndarray, d: int, L: np.ndarray | None = None,
                      forwarding: bool = True, kind: str = EXPONENTIAL) -> np.ndarray:
    """Greedy circuit allocation; returns the link multiplicity matrix.

    Repeatedly links the highest-demand pair that still has a free transmit
    port at the source and receive port at the destination, then halves that
    pair's demand (with unity discount the pair's demand drops to zero so a
    second parallel link is never preferred).  Ties go to the smallest
    ``(src, dst)``.
    """
    if d < 1:
        raise ValueError("degree must be >= 1")
    T = np.asarray(T, dtype=float)
    L = np.zeros((n, n), dtype=np.int64) if L is None else np.array(L, dtype=np.int64)
    tx = d - L.sum(axis=1)
    rx = d - L.sum(axis=0)
    work = T.copy()
    np.fill_diagonal(work, -1.0)
    off = ~np.eye(n, dtype=bool)
    while True:
        mask = np.outer(tx > 0, rx > 0) & off
        if not mask.any():
            break
        score = np.where(mask, work, -np.inf)
        i, j = np.unravel_index(int(np.argmax(score)), score.shape)
        L[i, j] += 1
        tx[i] -= 1
        rx[j] -= 1
        work[i, j] = 0.0 if kind == UNITY else work[i, j] / 2
    if forwarding:
        L = connect_components(L, T, kind)
    return L


def topology_from_multiplicity(L: np.ndarray, d: int, tag: str = "ocs") -> Topology:
    u, v = np.nonzero(L)
    return Topology(L.shape[0], d, tuple(Link(int(a), int(b), int(L[a, b]), tag)
                                         for a, b in zip(u, v)))


class PeriodicReconfig:
    """Controller that re-solves the circuit allocation every interval."""

    def __init__(self, n, d, link_gbps, policy: ReconfigPolicy, prop_delay_us=1.0):
        self.n, self.d, self.gbps = n, d, link_gbps
        self.policy = policy
        self.prop = prop_delay_us
        self._next = 0.0
        self.history: list = []

    def next_time(self, sim) -> float:
        return self._next

    def _network(self, L):
        return DirectNetwork(topology_from_multiplicity(L, self.d), self.gbps,
                             prop_delay_us=self.prop, forwarding=self.policy.forwarding)

    def fire(self, sim: Simulation):
        t = sim.now
        first = not self.history
        self._next = t + self.policy.interval_us
        demand = sim.unsatisfied_demand(self.n)
        if not first and demand.sum() <= 0:
            return
        L = ocs_reconfig_step(self.n, demand, self.d, forwarding=self.policy.forwarding,
                              kind=self.policy.discount)
        self.history.append((t, L))
        sim.set_network(self._network(L))
        if not first:
            sim.reconfigs += 1
            if self.policy.reconfig_latency_us > 0:
                sim.pause(self.policy.reconfig_latency_us)


def simulate_reconfig(tasks: Sequence[Task], policy: ReconfigPolicy, n: int, d: int,
                      link_gbps: float, prop_delay_us: float = 1.0) -> SimResult:
    """Run ``tasks`` on circuits re-planned from the remaining demand."""
    ctl = PeriodicReconfig(n, d, link_gbps, policy, prop_delay_us)
    L0 = np.zeros((n, n), dtype=np.int64)
    empty = DirectNetwork(topology_from_multiplicity(L0, d), link_gbps,
                          prop_delay_us=prop_delay_us, forwarding=False)
    sim = Simulation(tasks, empty, controller=ctl)
    res = sim.run()
    res.reconfig_history = ctl.history
    return res
