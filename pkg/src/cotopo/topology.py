"""Demand-aware direct-connect topologies.

A server has ``d`` interfaces, each with one transmit and one receive port.
Part of the budget carries AllReduce rings (one tx and one rx per ring per
member); the rest carries duplex links chosen by repeated maximum-weight
matching over the model-parallel demand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .permutations import ring_from_stride, select_permutations, totient_perms
from .routing import (RoutingError, RoutingTable, coin_change_routes, hop_matrix,
                      shortest_paths)
from .workload import AllReduceGroup, TransferSet

ALLREDUCE = "allreduce"
MP = "mp"
OTHER = "other"


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    u: int
    v: int
    mult: int = 1
    tag: str = OTHER
    group: int | None = None
    stride: int | None = None


@dataclass(frozen=True)
class Topology:
    """Directed multigraph over ``n`` servers with ``d`` ports each way."""

    n: int
    d: int
    links: tuple[Link, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        for l in self.links:
            if l.u == l.v:
                raise TopologyError(f"self-loop at {l.u}")
            if not (0 <= l.u < self.n and 0 <= l.v < self.n):
                raise TopologyError(f"link ({l.u}, {l.v}) outside [0, {self.n})")
            if l.mult < 1:
                raise TopologyError("link multiplicity must be >= 1")

    # degree bookkeeping
    def multiplicity(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), dtype=np.int64)
        for l in self.links:
            m[l.u, l.v] += l.mult
        return m

    def out_degree(self) -> np.ndarray:
        return self.multiplicity().sum(axis=1)

    def in_degree(self) -> np.ndarray:
        return self.multiplicity().sum(axis=0)

    def check_degree(self) -> None:
        m = self.multiplicity()
        bad = np.flatnonzero((m.sum(axis=1) > self.d) | (m.sum(axis=0) > self.d))
        if bad.size:
            v = int(bad[0])
            raise TopologyError(
                f"node {v} uses tx={m[v].sum()} rx={m[:, v].sum()} > d={self.d}")

    def edge_pairs(self) -> list[tuple[int, int]]:
        return sorted({(l.u, l.v) for l in self.links})

    def successors(self) -> list[list[int]]:
        out: list[set] = [set() for _ in range(self.n)]
        for l in self.links:
            out[l.u].add(l.v)
        return [sorted(s) for s in out]

    def subgraph(self, tag: str) -> "Topology":
        return Topology(self.n, self.d, tuple(l for l in self.links if l.tag == tag))

    def union(self, other: "Topology") -> "Topology":
        return Topology(self.n, max(self.d, other.d), self.links + other.links)

    # JSON
    def to_dict(self) -> dict:
        return {"n": self.n, "d": self.d,
                "edges": [[l.u, l.v, l.mult, l.tag, l.group, l.stride] for l in self.links]}

    @classmethod
    def from_dict(cls, data: dict) -> "Topology":
        links = []
        for e in data["edges"]:
            u, v, mult, tag = e[:4]
            group = e[4] if len(e) > 4 else None
            stride = e[5] if len(e) > 5 else None
            links.append(Link(int(u), int(v), int(mult), tag, group, stride))
        return cls(int(data["n"]), int(data["d"]), tuple(links))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "Topology":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def from_rings(cls, n: int, strides: Iterable[int], d: int | None = None) -> "Topology":
        strides = list(strides)
        links = []
        for p in strides:
            ring = ring_from_stride(n, n, p)
            links += [Link(u, v, 1, ALLREDUCE, 0, p) for u, v in ring.edges()]
        return cls(n, d if d is not None else len(strides), tuple(links))

    @classmethod
    def circulant(cls, n: int, strides: Iterable[int], d: int | None = None) -> "Topology":
        """Chord graph ``i -> i + s``; strides need not be generators."""
        strides = [s % n for s in strides]
        if any(s == 0 for s in strides):
            raise TopologyError("stride 0 would create self-loops")
        links = [Link(i, (i + s) % n, 1, ALLREDUCE, 0, s) for s in strides for i in range(n)]
        return cls(n, d if d is not None else len(strides), tuple(links))


@dataclass(frozen=True)
class DegreeSplit:
    d_A: int
    d_MP: int
    d_k: dict = field(default_factory=dict, hash=False)

    @property
    def d(self) -> int:
        return self.d_A + self.d_MP


def split_degree(d: int, t_ar: float, t_mp: float) -> DegreeSplit:
    """Share of the ``d`` interfaces given to AllReduce, at least one."""
    if d < 1:
        raise TopologyError("degree must be >= 1")
    if t_ar < 0 or t_mp < 0:
        raise TopologyError("traffic totals must be >= 0")
    if t_ar + t_mp <= 0:
        raise TopologyError("no traffic to split degree over")
    d_a = max(1, math.ceil(d * t_ar / (t_ar + t_mp)))
    d_a = min(d_a, d)
    return DegreeSplit(d_A=d_a, d_MP=d - d_a)


def build_allreduce_subtopo(n: int, d_A: int, groups: Sequence[AllReduceGroup],
                            prime_only: bool = False
                            ) -> tuple[Topology, dict[int, list[int]]]:
    """Rings for each group, larger groups (by traffic) first.

    Returns the sub-topology and the stride set chosen for every group that
    received at least one ring.
    """
    total = sum(g.total_bytes for g in groups)
    if total <= 0:
        raise TopologyError("AllReduce groups carry no traffic")
    order = sorted(groups, key=lambda g: (-g.total_bytes, g.group_id))
    # ports in use per node so overlapping groups do not exceed d_A
    used = np.zeros(n, dtype=np.int64)
    links: list[Link] = []
    chosen: dict[int, list[int]] = {}
    remaining = d_A
    for g in order:
        if remaining <= 0:
            break
        d_k = math.ceil(d_A * g.total_bytes / total)
        free = d_A - int(used[list(g.members)].max())
        d_k = min(d_k, remaining, free)
        if d_k <= 0:
            continue
        cands = totient_perms(n, g.k, prime_only=prime_only)
        d_k = min(d_k, len(cands))
        strides = select_permutations(g.k, d_k, cands)
        for p in strides:
            ring = ring_from_stride(n, g.k, p, g.members)
            links += [Link(u, v, 1, ALLREDUCE, g.group_id, p) for u, v in ring.edges()]
        used[list(g.members)] += d_k
        chosen[g.group_id] = strides
        remaining -= d_k
    return Topology(n, d_A, tuple(links)), chosen


def _int_weights(edges, weights):
    w = np.array(weights, dtype=float)
    if np.all(w == np.round(w)) and w.max() < 2 ** 62:
        return [int(x) for x in w]
    return [int(round(x)) for x in w * (2 ** 40 / w.max())]


def max_weight_matching(weights: np.ndarray) -> set[tuple[int, int]]:
    """Maximum-weight matching of a symmetric weight matrix.

    Among optimal matchings, prefers the one containing the lexicographically
    smallest edges.  Ties are broken exactly by appending one rank bit per
    edge below the weight, so weights become wide integers.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape[0] != w.shape[1]:
        raise TopologyError("weight matrix must be square")
    if not np.allclose(w, w.T):
        raise TopologyError("weight matrix must be symmetric")
    n = w.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    keep = w[iu, ju] > 0
    edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
    if not edges:
        return set()
    vals = _int_weights(edges, w[iu[keep], ju[keep]])
    E = len(edges)
    g = nx.Graph()
    g.add_nodes_from(range(n))
    for r, ((u, v), x) in enumerate(zip(edges, vals)):
        g.add_edge(u, v, weight=(x << E) | (1 << (E - 1 - r)))
    m = nx.max_weight_matching(g, maxcardinality=False)
    return {(min(u, v), max(u, v)) for u, v in m}


def build_mp_subtopo(n: int, d_MP: int, t_mp: np.ndarray,
                     trace: list | None = None) -> Topology:
    """``d_MP`` rounds of matching; matched demand is halved after each round."""
    if d_MP < 0:
        raise TopologyError("d_MP must be >= 0")
    resid = np.array(t_mp, dtype=float)
    links: list[Link] = []
    for r in range(d_MP):
        m = max_weight_matching(resid + resid.T)
        if not m:
            break
        for u, v in sorted(m):
            links.append(Link(u, v, 1, MP))
            links.append(Link(v, u, 1, MP))
            resid[u, v] /= 2
            resid[v, u] /= 2
        if trace is not None:
            trace.append(sorted(m))
    return Topology(n, d_MP, tuple(_merge(links)))


def _merge(links: Iterable[Link]) -> list[Link]:
    acc: dict = {}
    for l in links:
        key = (l.u, l.v, l.tag, l.group, l.stride)
        acc[key] = acc.get(key, 0) + l.mult
    return [Link(u, v, m, t, g, s) for (u, v, t, g, s), m in sorted(
        acc.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2],
                                     -1 if kv[0][3] is None else kv[0][3],
                                     -1 if kv[0][4] is None else kv[0][4]))]


def demand_pairs(ts: TransferSet, ring_assignment: dict) -> set[tuple[int, int]]:
    """(src, dst) pairs that carry traffic under the ring assignment."""
    pairs = {(t.src, t.dst) for t in ts.mp_transfers if t.bytes > 0}
    for g in ts.allreduce_groups:
        for p in ring_assignment.get(g.group_id, [1]):
            pairs |= set(ring_from_stride(ts.n, g.k, p, g.members).successor.items())
    return pairs


def topology_finder(n: int, d: int, ts: TransferSet, k_paths: int = 2,
                    prime_only: bool = False) -> tuple[Topology, RoutingTable]:
    """Topology and routes for one iteration's demand on ``n`` servers."""
    if n < 2:
        return Topology(n, d), RoutingTable(n=n)
    t_mp = ts.mp_matrix()
    t_ar = ts.allreduce_total
    if t_ar + t_mp.sum() <= 0:
        # no demand: a single canonical ring keeps the graph usable
        topo = Topology.from_rings(n, [1], d=d)
        return topo, RoutingTable(n=n)
    split = split_degree(d, t_ar, float(t_mp.sum()))
    d_A, d_MP = split.d_A, split.d_MP
    if not ts.allreduce_groups:
        # all interfaces go to MP links, but one ring keeps the graph connected
        d_A, d_MP = 1, d - 1
    if ts.allreduce_groups:
        g_ar, assign = build_allreduce_subtopo(n, d_A, ts.allreduce_groups, prime_only)
    else:
        g_ar = Topology.from_rings(n, [1], d=1)
        assign = {}
    g_mp = build_mp_subtopo(n, d_MP, t_mp)
    topo = Topology(n, d, tuple(_merge(g_ar.links + g_mp.links)))
    topo.check_degree()

    table = RoutingTable(n=n)
    for g in ts.allreduce_groups:
        if g.group_id in assign:
            table.group_strides[g.group_id] = list(assign[g.group_id])
            table.group_members[g.group_id] = tuple(g.members)
            table.group_routes[g.group_id] = coin_change_routes(g.k, assign[g.group_id])
    shortest_paths(topo, demand_pairs(ts, assign), k=k_paths, table=table)
    return topo, table


def diameter(t: Topology) -> int:
    dist = hop_matrix(t.n, t.edge_pairs())
    if not np.all(np.isfinite(dist)):
        u, v = map(int, np.argwhere(~np.isfinite(dist))[0])
        raise TopologyError(f"topology disconnected: no path {u} -> {v}")
    return int(dist.max())


def path_lengths(t: Topology) -> np.ndarray:
    """Hop counts over all ordered pairs ``u != v``."""
    dist = hop_matrix(t.n, t.edge_pairs())
    if not np.all(np.isfinite(dist)):
        u, v = map(int, np.argwhere(~np.isfinite(dist))[0])
        raise TopologyError(f"topology disconnected: no path {u} -> {v}")
    off = ~np.eye(t.n, dtype=bool)
    return dist[off].astype(int)


def mean_path_length(t: Topology) -> float:
    return float(path_lengths(t).mean())


def is_strongly_connected(t: Topology) -> bool:
    if t.n <= 1:
        return True
    return bool(np.all(np.isfinite(hop_matrix(t.n, t.edge_pairs()))))
