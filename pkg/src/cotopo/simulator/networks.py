"""Link-level views of the simulated fabrics.

Every network exposes ``num_links``, a ``capacity`` array in bytes/us, a
``route(src, dst) -> (link ids | None, host hops, delay_us)`` method and
``link_key(i)`` naming link ``i`` for reports.
"""

from __future__ import annotations

import numpy as np

from ..routing import RoutingTable, _min_hop_paths, hop_matrix
from ..topology import ALLREDUCE, Link, Topology, is_strongly_connected
from .engine import gbps_to_bytes_per_us


class DirectNetwork:
    """Server-to-server links; multi-hop flows are relayed by hosts."""

    def __init__(self, topology: Topology, link_gbps: float,
                 routes: RoutingTable | None = None, prop_delay_us: float = 1.0,
                 forwarding: bool = True):
        self.topology = topology
        self.n = topology.n
        self.prop_delay_us = prop_delay_us
        self.forwarding = forwarding
        self.allow_stall = not forwarding
        mult = topology.multiplicity()
        u, v = np.nonzero(mult)
        self.keys = list(zip(u.tolist(), v.tolist()))
        self.index = {k: i for i, k in enumerate(self.keys)}
        self.capacity = mult[u, v].astype(float) * gbps_to_bytes_per_us(link_gbps)
        self.routes = routes
        self._succ = None
        self._dist = None
        self._cache: dict = {}

    @property
    def num_links(self) -> int:
        return len(self.keys)

    def link_key(self, i):
        return self.keys[i]

    def node_path(self, src: int, dst: int) -> list[int] | None:
        if (src, dst) in self._cache:
            return self._cache[(src, dst)]
        path = None
        if not self.forwarding:
            path = [src, dst] if (src, dst) in self.index else None
        else:
            if self.routes is not None and (src, dst) in self.routes.paths:
                cand = self.routes.paths[(src, dst)][0]
                if all((a, b) in self.index for a, b in zip(cand, cand[1:])):
                    path = cand
            if path is None:
                if self._dist is None:
                    self._succ = self.topology.successors()
                    self._dist = hop_matrix(self.n, self.keys)
                if np.isfinite(self._dist[src, dst]):
                    path = _min_hop_paths(src, dst, self._succ, self._dist[:, dst], 1)[0]
        self._cache[(src, dst)] = path
        return path

    def route(self, src, dst):
        path = self.node_path(src, dst)
        if path is None:
            return None, 0, 0.0
        links = [self.index[(a, b)] for a, b in zip(path, path[1:])]
        return links, len(links), len(links) * self.prop_delay_us


class SwitchNetwork:
    """Servers hanging off a non-blocking switch, optionally oversubscribed.

    Each server has one uplink and one downlink of ``server_gbps``.  With
    ``oversub > 1`` servers are grouped into racks of ``rack_size`` whose
    core links carry ``rack_size * server_gbps / oversub``.
    """

    allow_stall = False

    def __init__(self, n: int, server_gbps: float, oversub: float = 1.0,
                 rack_size: int = 16, prop_delay_us: float = 1.0):
        self.n = n
        self.prop_delay_us = prop_delay_us
        per = gbps_to_bytes_per_us(server_gbps)
        self.keys = [("up", s) for s in range(n)] + [("down", s) for s in range(n)]
        caps = [per] * (2 * n)
        self.oversub = oversub
        self.rack_size = rack_size
        if oversub > 1:
            racks = (n + rack_size - 1) // rack_size
            core = rack_size * per / oversub
            self.keys += [("rack_up", r) for r in range(racks)]
            self.keys += [("rack_down", r) for r in range(racks)]
            caps += [core] * (2 * racks)
            self.racks = racks
        self.capacity = np.array(caps, dtype=float)

    @property
    def num_links(self) -> int:
        return len(self.keys)

    def link_key(self, i):
        return self.keys[i]

    def route(self, src, dst):
        links = [src, self.n + dst]
        if self.oversub > 1:
            rs, rd = src // self.rack_size, dst // self.rack_size
            if rs != rd:
                links = [src, 2 * self.n + rs, 2 * self.n + self.racks + rd, self.n + dst]
        # half the propagation delay on the way up, half on the way down
        return links, 1, self.prop_delay_us


def random_expander(n: int, d: int, seed: int = 0, max_tries: int = 100) -> Topology:
    """Union of ``d`` seeded random permutations without fixed points."""
    if n < 2:
        return Topology(n, d)
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        links = []
        for _ in range(d):
            while True:
                perm = rng.permutation(n)
                if not np.any(perm == np.arange(n)):
                    break
            links += [Link(int(u), int(v), 1, "expander") for u, v in enumerate(perm)]
        t = Topology(n, d, tuple(links))
        if is_strongly_connected(t):
            return t
    raise RuntimeError(f"no strongly connected {d}-regular expander found for n={n}")
