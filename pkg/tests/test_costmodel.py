import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotopo.costmodel import (ARCHITECTURES, DEFAULT_PRICES, TIERS, CostError, PriceTable,
                              architecture_cost, cost_equivalent_fattree_bandwidth, cost_sweep,
                              fattree_k, fattree_switch_ports, fiber_cost)

P = PriceTable.default()


def _no_fiber(cb):
    return cb.total - cb.count("fiber") * cb.items.get("fiber", (0, 0))[1]


def test_fattree_k8_ports():
    assert fattree_k(128) == 8
    assert fattree_switch_ports(8) == 640
    cb = architecture_cost("ideal_switch", 128, 1, 100)
    assert cb.count("switch_port") == 640


def test_fattree_radix_grows():
    assert fattree_k(16) == 4 and fattree_k(17) == 6 and fattree_k(432) == 12


def test_patch_panel_ports():
    cb = architecture_cost("direct_connect", 128, 4, 100)
    assert cb.count("patch_panel_port") == 1024
    assert cb.count("one_by_two") == 512
    assert cb.count("fiber") == 512


def test_direct_connect_itemized():
    cb = architecture_cost("direct_connect", 128, 4, 100)
    # 512 links: NIC 678, transceiver 99, two panel ports at 100, one 1x2 at 25
    assert _no_fiber(cb) == 512 * (678 + 99) + 1024 * 100 + 512 * 25 == 513024
    fibers = cb.total - 513024
    # 512 fibers, lengths uniform on [0, 1000] m at 0.30 per metre: mean 150 each
    sd = 0.30 * 1000 / math.sqrt(12) * math.sqrt(512)
    assert abs(fibers - 512 * 150) < 5 * sd
    assert cb.total == pytest.approx(594674.087, abs=0.01)


def test_ocs_itemized():
    cb = architecture_cost("direct_connect_ocs", 128, 4, 100)
    assert _no_fiber(cb) == 512 * (678 + 99 + 520)
    assert architecture_cost("ocs_reconfig", 128, 4, 100).total == cb.total


def test_fiber_seed():
    assert fiber_cost(100, P, 1) == fiber_cost(100, P, 1) != fiber_cost(100, P, 2)
    assert fiber_cost(0, P, 1) == 0.0


def _tree_oracle(n, per_server_gbps):
    """Hand count of a full three-tier tree built from the default table."""
    tiers = sorted(DEFAULT_PRICES)
    t = next((x for x in tiers if per_server_gbps <= x), None)
    units = 1 if t is not None else math.ceil(per_server_gbps / tiers[-1])
    tr, nic, sp = DEFAULT_PRICES[t or tiers[-1]][:3]
    k = 2
    while k ** 3 // 4 < n:
        k += 2
    ports = 5 * k ** 3 // 4
    cables = (n + k ** 3 // 2) * units
    return units * (n * nic + ports * sp + (n + ports) * tr) + fiber_cost(cables, P, 0)


@pytest.mark.parametrize("n,d,B", [(128, 4, 100), (64, 2, 25), (432, 8, 10), (128, 4, 200)])
def test_cost_equivalent_tier(n, d, B):
    budget = architecture_cost("direct_connect", n, d, B).total
    fits = [t for t in TIERS if _tree_oracle(n, d * t) <= budget]
    if not fits:
        with pytest.raises(CostError):
            cost_equivalent_fattree_bandwidth(n, d, B)
        return
    bp = cost_equivalent_fattree_bandwidth(n, d, B)
    assert bp == max(fits)
    assert architecture_cost("fat_tree", n, d, B).total == pytest.approx(
        _tree_oracle(n, d * bp))


def test_fat_tree_explicit_bprime():
    cb = architecture_cost("fat_tree", 128, 4, 100, B_prime=25)
    assert cb.total == pytest.approx(_tree_oracle(128, 100))


def test_rate_above_top_tier_uses_units():
    tier, units = P.at(450)
    assert units == 3 and tier == P.tiers[200]
    assert P.at(200)[1] == 1
    assert P.at(11)[0] == P.tiers[25]
    assert P.at(10)[0] == P.tiers[10]


def test_unknown_tier_rejected():
    with pytest.raises(CostError):
        architecture_cost("direct_connect", 16, 4, 50)
    with pytest.raises(CostError):
        architecture_cost("ideal_switch", 16, 4, 50)


def test_unknown_architecture():
    with pytest.raises(CostError):
        architecture_cost("torus", 16, 4, 100)
    with pytest.raises(CostError):
        architecture_cost("direct_connect", 0, 4, 100)


def test_negative_price_rejected():
    d = PriceTable.default().to_dict()
    d["tiers"]["100"]["nic"] = -1
    with pytest.raises(CostError):
        PriceTable.from_dict(d)


def test_zero_prices():
    z = PriceTable.zero()
    for a in ARCHITECTURES:
        if a == "fat_tree":
            continue
        assert architecture_cost(a, 64, 4, 100, z).total == 0.0
    assert architecture_cost("fat_tree", 64, 4, 100, z, B_prime=100).total == 0.0


def test_table_roundtrip(tmp_path):
    import json
    (tmp_path / "p.json").write_text(json.dumps(P.to_dict()))
    assert PriceTable.load(tmp_path / "p.json") == P


def test_direct_cost_per_server_flat():
    # without fibers, every server pays for exactly d ports of optics
    per = {n: _no_fiber(architecture_cost("direct_connect", n, 4, 100)) / n
           for n in (16, 128, 1024)}
    assert all(v == pytest.approx(4 * (678 + 99 + 2 * 100 + 25)) for v in per.values())


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 600), st.integers(1, 8), st.sampled_from(TIERS),
       st.sampled_from(["direct_connect", "direct_connect_ocs", "ideal_switch", "expander"]))
def test_monotone_in_n_and_d(n, d, B, arch):
    base = architecture_cost(arch, n, d, B, fiber_seed=0)
    assert architecture_cost(arch, n + 1, d, B).total >= _no_fiber(base)
    assert _no_fiber(architecture_cost(arch, n, d + 1, B)) >= _no_fiber(base)


def test_cost_sweep_rows():
    rows = cost_sweep([16, 128], 4, 100)
    assert [r["n"] for r in rows] == [16, 128]
    r = rows[1]
    assert r["ocs_over_patch_panel"] == pytest.approx(r["direct_connect_ocs"] / r["direct_connect"])
    z = cost_sweep([16], 4, 100, PriceTable.zero())[0]
    assert math.isnan(z["ocs_over_patch_panel"])


def test_optics_flat_in_bandwidth():
    for arch, item in (("direct_connect", "patch_panel_port"), ("direct_connect", "one_by_two"),
                       ("direct_connect_ocs", "ocs_port")):
        terms = set()
        for B in TIERS:
            c, u = architecture_cost(arch, 128, 4, B).items[item]
            terms.add(c * u)
        assert len(terms) == 1


def _table(tiers, fiber=0.0):
    from cotopo.costmodel import TierPrice
    return PriceTable({t: TierPrice(*v) for t, v in tiers.items()}, fiber_per_m=fiber)


def test_single_tier_table():
    # switch ports are free, so the tree always wins; the only tier is the answer
    p = _table({100: (1, 1, 0, 50, 50, 50)})
    assert cost_equivalent_fattree_bandwidth(32, 1, 100, p) == 100


def test_boundary_tie_counts_as_feasible():
    # d = 1: both networks cost exactly one NIC per server at tier 100
    p = _table({100: (0, 1, 0, 0, 0, 0), 200: (0, 2, 0, 0, 0, 0)})
    assert architecture_cost("direct_connect", 16, 1, 100, p).total == 16
    assert cost_equivalent_fattree_bandwidth(16, 1, 100, p) == 100


def test_no_feasible_tier():
    p = _table({100: (0, 1, 1000, 0, 0, 0)})
    with pytest.raises(CostError):
        cost_equivalent_fattree_bandwidth(16, 1, 100, p)
