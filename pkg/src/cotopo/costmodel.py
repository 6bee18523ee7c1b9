"""Component-level interconnect cost accounting.

Prices are per component at a link-rate tier.  Rates above the largest tier
are built from several largest-tier units (NIC, transceiver, switch port and
fiber each scale with the unit count); rates between tiers round up to the
next tier.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

TIERS = (10, 25, 40, 100, 200)
FIBER_PRICE_PER_M = 0.30
FIBER_MAX_M = 1000.0

# (transceiver, NIC, electrical switch port, patch-panel port, OCS port, 1x2 switch)
DEFAULT_PRICES = {
    10: (20, 185, 94, 100, 520, 25),
    25: (39, 185, 144, 100, 520, 25),
    40: (39, 354, 144, 100, 520, 25),
    100: (99, 678, 187, 100, 520, 25),
    200: (198, 815, 374, 100, 520, 25),
}
_FIELDS = ("transceiver", "nic", "switch_port", "patch_panel_port", "ocs_port", "one_by_two")

ARCHITECTURES = ("direct_connect", "direct_connect_ocs", "ocs_reconfig", "ideal_switch",
                 "fat_tree", "oversub_fat_tree", "expander", "sip_ml")


class CostError(ValueError):
    pass


@dataclass(frozen=True)
class TierPrice:
    transceiver: float
    nic: float
    switch_port: float
    patch_panel_port: float
    ocs_port: float
    one_by_two: float


@dataclass(frozen=True)
class PriceTable:
    tiers: dict
    fiber_per_m: float = FIBER_PRICE_PER_M
    fiber_max_m: float = FIBER_MAX_M

    def __post_init__(self):
        for t, p in self.tiers.items():
            if any(getattr(p, f) < 0 for f in _FIELDS):
                raise CostError(f"negative price at tier {t}")
        if self.fiber_per_m < 0:
            raise CostError("negative fiber price")

    @classmethod
    def default(cls) -> "PriceTable":
        return cls({t: TierPrice(*v) for t, v in DEFAULT_PRICES.items()})

    @classmethod
    def zero(cls) -> "PriceTable":
        return cls({t: TierPrice(0, 0, 0, 0, 0, 0) for t in TIERS}, fiber_per_m=0.0)

    @classmethod
    def from_dict(cls, d: dict) -> "PriceTable":
        tiers = {int(k): TierPrice(**v) for k, v in d["tiers"].items()}
        return cls(tiers, float(d.get("fiber_per_m", FIBER_PRICE_PER_M)),
                   float(d.get("fiber_max_m", FIBER_MAX_M)))

    @classmethod
    def load(cls, path) -> "PriceTable":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"tiers": {str(t): {f: getattr(p, f) for f in _FIELDS}
                          for t, p in sorted(self.tiers.items())},
                "fiber_per_m": self.fiber_per_m, "fiber_max_m": self.fiber_max_m}

    def at(self, gbps: float) -> tuple[TierPrice, int]:
        """Price of the component tier serving ``gbps`` and the unit count."""
        tiers = sorted(self.tiers)
        for t in tiers:
            if gbps <= t:
                return self.tiers[t], 1
        top = tiers[-1]
        return self.tiers[top], math.ceil(gbps / top - 1e-9)

    def exact(self, gbps: float) -> TierPrice:
        if gbps not in self.tiers:
            raise CostError(f"no price tier for {gbps} Gbps; tiers are {sorted(self.tiers)}")
        return self.tiers[gbps]


@dataclass
class CostBreakdown:
    architecture: str
    items: dict = field(default_factory=dict)   # name -> (count, unit price)

    def add(self, name: str, count: float, unit: float):
        c0, _ = self.items.get(name, (0, unit))
        self.items[name] = (c0 + count, unit)

    @property
    def total(self) -> float:
        return float(sum(c * u for c, u in self.items.values()))

    def count(self, name: str) -> float:
        return self.items.get(name, (0, 0))[0]

    def to_dict(self) -> dict:
        return {"architecture": self.architecture, "total": self.total,
                "items": {k: {"count": c, "unit": u} for k, (c, u) in self.items.items()}}


def fattree_k(n: int) -> int:
    """Smallest even switch radix whose full three-tier tree hosts ``n`` servers."""
    k = 2
    while k ** 3 // 4 < n:
        k += 2
    return k


def fattree_switch_ports(k: int) -> int:
    # k^2/4 core + k^2 aggregation/edge switches, k ports each
    return 5 * k ** 3 // 4


def fattree_inter_switch_links(k: int) -> int:
    return k ** 3 // 2


def fiber_cost(count: int, prices: PriceTable, seed: int) -> float:
    """Total cost of ``count`` fibers with uniformly drawn lengths."""
    if count <= 0:
        return 0.0
    rng = np.random.default_rng(seed)
    return float(rng.uniform(0.0, prices.fiber_max_m, size=int(count)).sum()
                 * prices.fiber_per_m)


def _add_fibers(cb: CostBreakdown, count: int, prices: PriceTable, seed: int):
    if count > 0:
        total = fiber_cost(count, prices, seed)
        cb.add("fiber", count, total / count)


def _fattree(arch, n, server_gbps, prices, seed, oversub=1.0):
    tier, units = prices.at(server_gbps)
    k = fattree_k(n)
    ports = fattree_switch_ports(k)
    inter = fattree_inter_switch_links(k)
    if oversub > 1:
        # thin the aggregation/core layers; edge ports facing servers stay
        edge_down = k ** 3 // 4
        ports = edge_down + math.ceil((ports - edge_down) / oversub)
        inter = math.ceil(inter / oversub)
    cb = CostBreakdown(arch)
    cb.add("nic", n * units, tier.nic)
    cb.add("switch_port", ports * units, tier.switch_port)
    cb.add("transceiver", (n + ports) * units, tier.transceiver)
    _add_fibers(cb, (n + inter) * units, prices, seed)
    return cb


def architecture_cost(arch: str, n: int, d: int, B: float,
                      prices: PriceTable | None = None, fiber_seed: int = 0,
                      B_prime: float | None = None) -> CostBreakdown:
    """Itemized interconnect cost of ``n`` servers with ``d`` links of ``B`` Gbps.

    ``fat_tree`` is priced at ``d * B_prime`` per server (``B_prime`` defaults
    to the cost-equivalent tier); ``ideal_switch`` at ``d * B``.
    """
    prices = prices or PriceTable.default()
    if arch not in ARCHITECTURES:
        raise CostError(f"unknown architecture {arch!r}")
    if n < 1 or d < 1:
        raise CostError("need n >= 1 and d >= 1")
    if arch == "ideal_switch":
        prices.exact(B)
        return _fattree(arch, n, d * B, prices, fiber_seed)
    if arch == "oversub_fat_tree":
        prices.exact(B)
        return _fattree(arch, n, d * B, prices, fiber_seed, oversub=2.0)
    if arch == "fat_tree":
        bp = B_prime if B_prime is not None else cost_equivalent_fattree_bandwidth(
            n, d, B, prices, fiber_seed)
        return _fattree(arch, n, d * bp, prices, fiber_seed)

    p = prices.exact(B)
    links = n * d
    cb = CostBreakdown(arch)
    if arch == "sip_ml":
        # silicon-photonic ports priced like OCS ports, one per interface
        cb.add("nic", links, p.nic)
        cb.add("transceiver", links, p.transceiver)
        cb.add("ocs_port", 2 * links, p.ocs_port)
        _add_fibers(cb, links, prices, fiber_seed)
        return cb
    cb.add("nic", links, p.nic)
    cb.add("transceiver", links, p.transceiver)
    if arch == "direct_connect":
        cb.add("patch_panel_port", 2 * links, p.patch_panel_port)
        cb.add("one_by_two", links, p.one_by_two)
    elif arch in ("direct_connect_ocs", "ocs_reconfig"):
        cb.add("ocs_port", links, p.ocs_port)
    # expander: fixed cabling, nothing beyond NICs, optics and fibers
    _add_fibers(cb, links, prices, fiber_seed)
    return cb


def cost_equivalent_fattree_bandwidth(n: int, d: int, B: float,
                                      prices: PriceTable | None = None,
                                      fiber_seed: int = 0) -> float:
    """Largest tier ``B'`` whose full-bisection tree at ``d * B'`` is no dearer."""
    prices = prices or PriceTable.default()
    budget = architecture_cost("direct_connect", n, d, B, prices, fiber_seed).total
    best = None
    for t in sorted(prices.tiers):
        c = _fattree("fat_tree", n, d * t, prices, fiber_seed).total
        if c <= budget + 1e-9:
            best = t
    if best is None:
        raise CostError(f"no tier makes the fat-tree as cheap as {budget:.0f}")
    return float(best)


def cost_sweep(ns: Iterable[int], d: int, B: float, prices: PriceTable | None = None,
               fiber_seed: int = 0, architectures=ARCHITECTURES) -> list[dict]:
    """One row per ``n`` with the total of every architecture."""
    prices = prices or PriceTable.default()
    rows = []
    for n in ns:
        row = {"n": n, "d": d, "B": B}
        for a in architectures:
            try:
                row[a] = architecture_cost(a, n, d, B, prices, fiber_seed).total
            except CostError:
                row[a] = float("nan")
        pp = row.get("direct_connect", 0.0)
        row["ocs_over_patch_panel"] = row.get("direct_connect_ocs", 0.0) / pp if pp else float("nan")
        row["ideal_over_patch_panel"] = row.get("ideal_switch", 0.0) / pp if pp else float("nan")
        rows.append(row)
    return rows
