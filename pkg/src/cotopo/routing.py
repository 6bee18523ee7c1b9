"""Routes over ring sub-topologies (modular coin change) and general graphs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path


class RoutingError(ValueError):
    pass


def coin_change_routes(n: int, coins: Iterable[int]) -> dict[int, list[int]]:
    """Fewest-hop stride sequence for every ring distance ``1..n-1``.

    Hops add modulo ``n``, so a distance may be reached by wrapping around
    (e.g. 7 + 7 = 2 mod 12).  Relaxation runs until no distance improves.
    Each returned sequence is sorted ascending.
    """
    coins = sorted({int(c) % n for c in coins} - {0})
    if not coins:
        raise RoutingError("need at least one non-zero stride")
    inf = n + 1
    dist = [inf] * n
    last = [0] * n
    dist[0] = 0
    changed = True
    while changed:
        changed = False
        for m in range(1, n):
            for c in coins:
                prev = (m - c) % n
                if dist[prev] + 1 < dist[m]:
                    dist[m] = dist[prev] + 1
                    last[m] = c
                    changed = True
    routes: dict[int, list[int]] = {}
    for m in range(1, n):
        if dist[m] >= inf:
            raise RoutingError(f"distance {m} unreachable with strides {coins} mod {n}")
        seq = []
        cur = m
        while cur != 0:
            seq.append(last[cur])
            cur = (cur - last[cur]) % n
        routes[m] = sorted(seq)
    return routes


def expand_route(src: int, dst: int, strides: Sequence[int], n: int) -> list[int]:
    """Node sequence visited when walking ``strides`` from ``src`` modulo ``n``."""
    if sum(strides) % n != (dst - src) % n:
        raise RoutingError(
            f"strides {list(strides)} sum to {sum(strides) % n}, need {(dst - src) % n} mod {n}")
    path = [src]
    cur = src
    for s in strides:
        cur = (cur + s) % n
        path.append(cur)
    return path


def hop_matrix(n: int, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    """All-pairs directed hop distances (inf where unreachable)."""
    edges = list(edges)
    if not edges:
        m = np.full((n, n), np.inf)
        np.fill_diagonal(m, 0)
        return m
    u, v = zip(*edges)
    a = csr_matrix((np.ones(len(u)), (u, v)), shape=(n, n))
    return shortest_path(a, method="D", unweighted=True)


def _min_hop_paths(src, dst, succ, dist_to, k):
    """Up to ``k`` min-hop paths in lexicographic node order."""
    out = []
    path = [src]
    stack = [iter(succ[src])]
    while stack and len(out) < k:
        cur = path[-1]
        if cur == dst:
            out.append(list(path))
            path.pop()
            stack.pop()
            continue
        need = dist_to[cur] - 1
        nb = next((x for x in stack[-1] if dist_to[x] == need), None)
        if nb is None:
            path.pop()
            stack.pop()
        else:
            path.append(nb)
            stack.append(iter(succ[nb]))
    return out


@dataclass
class RoutingTable:
    """Explicit node paths per pair plus per-group stride tables."""

    n: int
    paths: dict = field(default_factory=dict)
    group_strides: dict = field(default_factory=dict)
    group_members: dict = field(default_factory=dict)
    group_routes: dict = field(default_factory=dict)

    def path(self, src: int, dst: int) -> list[int]:
        try:
            return self.paths[(src, dst)][0]
        except KeyError:
            raise RoutingError(f"no route for ({src}, {dst})") from None

    def allreduce_path(self, group_id: int, src: int, dst: int) -> list[int]:
        """Path between two members of a group along its own ring links."""
        members = list(self.group_members[group_id])
        k = len(members)
        rank = {m: i for i, m in enumerate(members)}
        dist = (rank[dst] - rank[src]) % k
        ranks = expand_route(rank[src], rank[dst], self.group_routes[group_id][dist], k)
        return [members[r] for r in ranks]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "paths": [{"src": s, "dst": d, "paths": p}
                      for (s, d), p in sorted(self.paths.items())],
            "groups": [{"group": g, "members": list(self.group_members[g]),
                        "strides": list(self.group_strides[g]),
                        "routes": {str(m): r for m, r in sorted(self.group_routes[g].items())}}
                       for g in sorted(self.group_strides)],
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)


def shortest_paths(topology, pairs: Iterable[tuple[int, int]], k: int = 2,
                   table: RoutingTable | None = None) -> RoutingTable:
    """Up to ``k`` loop-free min-hop paths per pair, lexicographic order."""
    n = topology.n
    table = table if table is not None else RoutingTable(n=n)
    succ = topology.successors()
    pairs = sorted(set(pairs))
    if not pairs:
        return table
    dist = hop_matrix(n, topology.edge_pairs())
    for s, d in pairs:
        if s == d:
            raise RoutingError("pair with src == dst")
        if not np.isfinite(dist[s, d]):
            raise RoutingError(f"no path from {s} to {d}")
        table.paths[(s, d)] = _min_hop_paths(s, d, succ, dist[:, d], k)
    return table
