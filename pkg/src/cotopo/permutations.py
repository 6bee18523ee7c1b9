"""Ring-AllReduce permutations built from modular strides.

A ring over ``k`` members with stride ``p`` connects member ``i`` to member
``(i + p) % k``.  The ring visits every member exactly once iff ``p`` is a
generator of the additive group Z_k, i.e. ``gcd(p, k) == 1``.  Every such
stride yields a distinct set of directed edges, so the co-prime strides of
``k`` enumerate all regular ring orderings of the group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence


class PermutationError(ValueError):
    """Raised for invalid group sizes, strides, or selection budgets."""


def _is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    r = math.isqrt(p)
    f = 3
    while f <= r:
        if p % f == 0:
            return False
        f += 2
    return True


@dataclass(frozen=True)
class PermSet:
    """Candidate ring strides for one AllReduce group.

    ``strides`` are ascending and each is co-prime with ``k``.
    """

    k: int
    n: int
    strides: tuple[int, ...]
    prime_only: bool = False

    def __len__(self):
        return len(self.strides)

    def __iter__(self):
        return iter(self.strides)

    def embedded(self, p: int) -> "Permutation":
        """Block-wise embedding of stride ``p`` over all ``n`` nodes.

        Node block ``b`` holds members ``b*k .. b*k + k - 1``; each block gets
        its own ring.  Requires ``k`` to divide ``n``.
        """
        if self.n % self.k:
            raise PermutationError(
                f"group size {self.k} does not divide n={self.n}; pass explicit members")
        if p not in self.strides:
            raise PermutationError(f"stride {p} is not a candidate for k={self.k}")
        succ = {}
        for b in range(self.n // self.k):
            members = [b * self.k + j for j in range(self.k)]
            succ.update(ring_from_stride(self.n, self.k, p, members).successor)
        return Permutation(successor=succ, stride=p, k=self.k)


@dataclass(frozen=True)
class Permutation:
    """Explicit successor map of one (or several block-wise) rings."""

    successor: dict
    stride: int
    k: int

    def edges(self) -> list[tuple[int, int]]:
        return sorted(self.successor.items())

    def cycles(self) -> list[list[int]]:
        seen = set()
        out = []
        for start in sorted(self.successor):
            if start in seen:
                continue
            cyc = [start]
            seen.add(start)
            v = self.successor[start]
            while v != start:
                if v in seen:
                    raise PermutationError("successor map is not a permutation")
                cyc.append(v)
                seen.add(v)
                v = self.successor[v]
            out.append(cyc)
        return out


def totient_perms(n: int, k: int, prime_only: bool = False) -> PermSet:
    """All ring strides for a group of ``k`` members within ``n`` nodes.

    Full mode returns every ``p < k`` with ``gcd(p, k) == 1`` (``phi(k)``
    strides).  ``prime_only`` keeps ``p == 1`` plus the primes, which shrinks
    the candidate list to ``O(k / ln k)``.
    """
    if k < 2:
        raise PermutationError(f"group size must be >= 2, got {k}")
    if n < k:
        raise PermutationError(f"group size {k} exceeds cluster size {n}")
    strides = []
    for p in range(1, k):
        if math.gcd(p, k) != 1:
            continue
        if prime_only and p != 1 and not _is_prime(p):
            continue
        strides.append(p)
    return PermSet(k=k, n=n, strides=tuple(strides), prime_only=prime_only)


def ring_from_stride(n: int, k: int, p: int,
                     members: Sequence[int] | None = None) -> Permutation:
    """Ring over ``members`` where member rank ``i`` sends to rank ``i + p``."""
    if members is None:
        members = list(range(k))
    members = list(members)
    if len(members) != k:
        raise PermutationError(f"expected {k} members, got {len(members)}")
    if len(set(members)) != k:
        raise PermutationError("members must be distinct")
    if any(m < 0 or m >= n for m in members):
        raise PermutationError(f"member ids must lie in [0, {n})")
    if not 1 <= p < k:
        raise PermutationError(f"stride {p} outside [1, {k})")
    if math.gcd(p, k) != 1:
        raise PermutationError(
            f"stride {p} is not a generator of Z_{k} (gcd={math.gcd(p, k)})")
    succ = {members[i]: members[(i + p) % k] for i in range(k)}
    return Permutation(successor=succ, stride=p, k=k)


def geometric_ratio(n: int, d_k: int) -> float:
    # Ratios below 2 waste degree on near-duplicate strides.
    return max(2.0, n ** (1.0 / d_k))


def select_permutations(n: int, d_k: int, P_k: PermSet | Sequence[int],
                        trace: list | None = None) -> list[int]:
    """Pick ``d_k`` strides that track a geometric sequence of ratio n^(1/d_k).

    Starts from the smallest candidate and repeatedly projects ``x * q`` onto
    the nearest unused candidate (ties go to the smaller stride).  If
    ``trace`` is a list, one ``(target, chosen)`` tuple per step is appended.
    """
    cands = sorted(P_k.strides if isinstance(P_k, PermSet) else P_k)
    if d_k < 1:
        raise PermutationError("degree budget d_k must be >= 1")
    if len(cands) < d_k:
        raise PermutationError(
            f"only {len(cands)} candidate strides for a budget of {d_k}")
    x = geometric_ratio(n, d_k)
    q = cands[0]
    chosen = [q]
    if trace is not None:
        trace.append((float(q), q))
    used = {q}
    for _ in range(1, d_k):
        target = x * q
        q = min((r for r in cands if r not in used),
                key=lambda r: (abs(r - target), r))
        chosen.append(q)
        used.add(q)
        if trace is not None:
            trace.append((target, q))
    return chosen


# --- double binary trees ---------------------------------------------------

def _inorder_parents(k: int) -> dict[int, int | None]:
    """Parent map of the balanced in-order tree over positions 1..k."""
    root = 1 << (k.bit_length() - 1)
    parent: dict[int, int | None] = {root: None}
    for x in range(1, k + 1):
        if x == root:
            continue
        y = x
        while True:
            b = y & -y
            up = y + b if ((y + b) // (2 * b)) % 2 == 1 else y - b
            if 1 <= up <= k:
                parent[x] = up
                break
            y = up
    return parent


@dataclass(frozen=True)
class DbtPair:
    """Two spanning trees over ranks ``0..k-1`` given as parent maps."""

    k: int
    tree1: dict = field(hash=False)
    tree2: dict = field(hash=False)

    @staticmethod
    def _root(tree):
        return next(v for v, p in tree.items() if p is None)

    @staticmethod
    def _leaves(tree):
        parents = {p for p in tree.values() if p is not None}
        return {v for v in tree if v not in parents}

    @property
    def roots(self) -> tuple[int, int]:
        return self._root(self.tree1), self._root(self.tree2)

    def leaves(self, which: int) -> set[int]:
        return self._leaves(self.tree1 if which == 1 else self.tree2)

    def edges(self, which: int) -> set[tuple[int, int]]:
        tree = self.tree1 if which == 1 else self.tree2
        return {(v, p) for v, p in tree.items() if p is not None}


def dbt_permutations(k: int, relabel: int | None = None) -> DbtPair:
    """Double binary tree over ``k`` ranks.

    In ``tree1`` interior nodes carry even ranks and leaves odd ranks;
    ``tree2`` swaps the two roles.  ``relabel`` applies ``i -> i*p mod k`` to
    both trees, giving an isomorphic pair with a different traffic pattern.
    """
    if k < 2:
        raise PermutationError(f"need at least 2 ranks, got {k}")
    if relabel is not None and math.gcd(relabel, k) != 1:
        raise PermutationError(f"relabel stride {relabel} not co-prime with {k}")
    pos = _inorder_parents(k)

    def build(rank_of_pos):
        return {rank_of_pos(x): (None if p is None else rank_of_pos(p))
                for x, p in pos.items()}

    # tree1: rank r sits at position r (rank 0 at position k) -> odd ranks are leaves
    t1 = build(lambda x: x % k)
    # tree2: rank r sits at position r + 1 -> even ranks are leaves
    t2 = build(lambda x: x - 1)
    if relabel is not None:
        def f(v):
            return None if v is None else (v * relabel) % k
        t1 = {f(v): f(p) for v, p in t1.items()}
        t2 = {f(v): f(p) for v, p in t2.items()}
    return DbtPair(k=k, tree1=t1, tree2=t2)
