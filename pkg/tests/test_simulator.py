import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotopo.simulator import (DirectNetwork, SimulationError, SwitchNetwork, Task,
                              allreduce_only_tasks, build_tasks, cdf_points,
                              gbps_to_bytes_per_us, max_min_rates, metrics, random_expander,
                              simulate)
from cotopo.topology import Link, Topology
from cotopo.workload import AllReduceGroup, data_parallel, load_preset

B = gbps_to_bytes_per_us(100)   # 12500 bytes per microsecond
GB = 1e9


def line(n, d=1):
    """0 -> 1 -> ... -> n-1."""
    return Topology(n, d, tuple(Link(i, i + 1) for i in range(n - 1)))


def test_unit_conversion():
    assert B == 12500.0


def test_single_flow():
    res = simulate([Task.comm(0, 0, 1, GB)], DirectNetwork(line(2), 100))
    assert res.iteration_time_us == pytest.approx(GB / B + 1)
    assert res.iteration_time_us == pytest.approx(80_001)


def test_two_flows_share():
    net = DirectNetwork(line(2), 100)
    solo = simulate([Task.comm(0, 0, 1, GB)], net).iteration_time_us - 1
    res = simulate([Task.comm(0, 0, 1, GB), Task.comm(1, 0, 1, GB)], net)
    assert res.completion_us[0] == res.completion_us[1] == pytest.approx(2 * solo + 1)


def test_crossing_flows():
    # 0->1->2->3 and 1->2 meet on link (1,2); both get B/2 there
    net = DirectNetwork(line(4), 100)
    res = simulate([Task.comm(0, 0, 3, GB), Task.comm(1, 1, 2, GB)], net)
    assert res.completion_us[0] == pytest.approx(2 * GB / B + 3)
    assert res.completion_us[1] == pytest.approx(2 * GB / B + 1)
    assert res.bandwidth_tax == pytest.approx(2.0)


def test_compute_chain():
    tasks = [Task.compute(0, 5.0), Task.compute(1, 7.0, deps=[0]), Task.compute(2, 3.0)]
    res = simulate(tasks, DirectNetwork(line(2), 100))
    assert res.iteration_time_us == 12.0
    assert res.bandwidth_tax == 1.0


def test_cycle_rejected():
    tasks = [Task.compute(0, 1.0, deps=[1]), Task.compute(1, 1.0, deps=[0])]
    with pytest.raises(SimulationError, match="cycle"):
        simulate(tasks, DirectNetwork(line(2), 100))


def test_unroutable():
    with pytest.raises(SimulationError, match="no route"):
        simulate([Task.comm(0, 1, 0, 10.0)], DirectNetwork(line(2), 100))


def test_unknown_dep():
    with pytest.raises(SimulationError):
        simulate([Task.compute(0, 1.0, deps=[9])], DirectNetwork(line(2), 100))


def test_parallel_links_add_capacity():
    t = Topology(2, 2, (Link(0, 1, 2),))
    res = simulate([Task.comm(0, 0, 1, GB)], DirectNetwork(t, 100))
    assert res.iteration_time_us == pytest.approx(GB / (2 * B) + 1)


@pytest.mark.parametrize("k", [2, 3, 4, 8, 16, 32])
def test_ring_allreduce_analytic(k):
    S = 2 * GB
    g = AllReduceGroup(0, tuple(range(k)), S, (0,))
    res = simulate(allreduce_only_tasks([g], k), DirectNetwork(Topology.from_rings(k, [1]), 100))
    assert res.iteration_time_us == pytest.approx(2 * (k - 1) / k * S / B, rel=0.01)


def test_all_single_hop_tax():
    k = 8
    g = AllReduceGroup(0, tuple(range(k)), GB, (0,))
    res = simulate(allreduce_only_tasks([g], k), DirectNetwork(Topology.from_rings(k, [1]), 100))
    assert res.bandwidth_tax == 1.0
    assert metrics(res)["flow_path_length_mean"] == 1.0


def test_all_two_hop_tax():
    # every flow i -> i+2 on a +1 ring takes exactly two hops
    n = 8
    tasks = [Task.comm(i, i, (i + 2) % n, 1e6 * (i + 1)) for i in range(n)]
    res = simulate(tasks, DirectNetwork(Topology.from_rings(n, [1]), 100))
    assert res.bandwidth_tax == 2.0
    assert res.path_length_histogram == {2: n}


def test_switch_tax_is_one():
    tasks = [Task.comm(i, i, (i + 3) % 16, 1e8) for i in range(16)]
    res = simulate(tasks, SwitchNetwork(16, 400))
    assert res.bandwidth_tax == 1.0


def test_switch_port_rate():
    res = simulate([Task.comm(0, 0, 5, GB)], SwitchNetwork(16, 400))
    assert res.iteration_time_us == pytest.approx(GB / (4 * B) + 1)


def test_oversubscribed_core():
    # 16 flows leave rack 0 for rack 1: core carries 16 * per / 2
    tasks = [Task.comm(i, i, 16 + i, GB) for i in range(16)]
    full = simulate(tasks, SwitchNetwork(32, 100)).iteration_time_us
    half = simulate(tasks, SwitchNetwork(32, 100, oversub=2.0)).iteration_time_us
    assert half - 1 == pytest.approx(2 * (full - 1))
    # traffic inside a rack is unaffected
    local = [Task.comm(i, (i + 1) % 16, i, GB) for i in range(16)]
    assert simulate(local, SwitchNetwork(32, 100, oversub=2.0)).iteration_time_us \
        == pytest.approx(simulate(local, SwitchNetwork(32, 100)).iteration_time_us)


def test_idle_ring_changes_nothing():
    job = load_preset("candle_shared")
    s = data_parallel(job)
    one = DirectNetwork(Topology.from_rings(16, [1], 2), 100)
    two = DirectNetwork(Topology.from_rings(16, [1, 3], 2), 100)
    tasks = build_tasks(job, s)        # traffic only on the +1 ring
    assert simulate(tasks, one).iteration_time_us == simulate(tasks, two).iteration_time_us


def _max_min_ok(flow_links, cap, rates):
    """Oracle for the max-min fixpoint: no link over capacity, and every
    flow crosses a saturated link on which no other flow is faster."""
    load = np.zeros(len(cap))
    for ls, r in zip(flow_links, rates):
        for l in ls:
            load[l] += r
    assert np.all(load <= cap * (1 + 1e-9) + 1e-9)
    for ls, r in zip(flow_links, rates):
        assert any(load[l] >= cap[l] * (1 - 1e-9) and
                   all(rates[j] <= r * (1 + 1e-9) for j, lj in enumerate(flow_links) if l in lj)
                   for l in ls)


def test_max_min_textbook():
    # links of capacity 1; flow 0 uses both, flows 1 and 2 one each
    rates = max_min_rates([[0, 1], [0], [1]], np.array([1.0, 1.0]))
    assert rates.tolist() == pytest.approx([0.5, 0.5, 0.5])
    rates = max_min_rates([[0, 1], [0], [0], [1]], np.array([1.0, 1.0]))
    assert rates.tolist() == pytest.approx([1 / 3, 1 / 3, 1 / 3, 2 / 3])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.data())
def test_max_min_fixpoint(nl, data):
    cap = np.array(data.draw(st.lists(st.integers(1, 20), min_size=nl, max_size=nl)), float)
    nf = data.draw(st.integers(1, 8))
    flows = [sorted(data.draw(st.sets(st.integers(0, nl - 1), min_size=1))) for _ in range(nf)]
    _max_min_ok(flows, cap, max_min_rates(flows, cap))


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 12), st.data())
def test_byte_conservation(n, data):
    t = Topology.circulant(n, [1, 2], 2)
    nf = data.draw(st.integers(1, 10))
    tasks = []
    for i in range(nf):
        u = data.draw(st.integers(0, n - 1))
        v = data.draw(st.integers(0, n - 1).filter(lambda x: x != u))
        tasks.append(Task.comm(i, u, v, float(data.draw(st.integers(1, 10 ** 7)))))
    net = DirectNetwork(t, 100)
    res = simulate(tasks, net)
    expect = sum((len(net.node_path(x.src, x.dst)) - 1) * x.bytes for x in tasks)
    assert sum(res.link_bytes.values()) == pytest.approx(expect)
    assert res.wire_bytes == pytest.approx(expect)
    assert res.bandwidth_tax >= 1.0
    assert sum(res.link_bytes.values()) >= res.logical_bytes * (1 - 1e-12)


def test_deterministic():
    job = load_preset("bert_shared")
    net = DirectNetwork(random_expander(16, 4, seed=3), 100)
    a = simulate(build_tasks(job, data_parallel(job)), net)
    b = simulate(build_tasks(job, data_parallel(job)), DirectNetwork(random_expander(16, 4, 3), 100))
    assert a.to_dict() == b.to_dict()
    assert a.completion_us == b.completion_us


def test_expander_regular():
    t = random_expander(32, 4, seed=1)
    assert np.all(t.out_degree() == 4) and np.all(t.in_degree() == 4)
    assert random_expander(32, 4, seed=1) == t
    assert random_expander(32, 4, seed=2) != t


def test_compute_only_job():
    job = load_preset("vgg_shared", num_servers=1)
    res = simulate(build_tasks(job, data_parallel(job)), SwitchNetwork(1, 100))
    expect = sum(l.fwd_compute_us + l.bwd_compute_us for l in job.layers)
    assert res.iteration_time_us == pytest.approx(expect)


def _all_to_all(n, S):
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    return [Task.comm(i, u, v, S) for i, (u, v) in enumerate(pairs)]


@settings(max_examples=15, deadline=None)
@given(st.integers(5, 20), st.data())
def test_alltoall_lower_bound(n, data):
    # the hop-weighted volume over total capacity bounds any all-to-all from below
    from cotopo.altopt import analytic_iteration_time
    from cotopo.topology import mean_path_length
    strides = sorted(set(data.draw(st.lists(st.integers(2, n - 1), max_size=3))) | {1})
    t = Topology.circulant(n, strides)
    S = 1e7
    sim = simulate(_all_to_all(n, S), DirectNetwork(t, 100)).iteration_time_us
    lower = analytic_iteration_time(0, S * n * (n - 1), n, len(strides) * B,
                                    mean_path_length(t), 0)
    assert sim >= lower


@pytest.mark.parametrize("n", [8, 16, 32])
def test_alltoall_alpha_fit(n):
    # on a ring every link carries the same load, so alpha = mean path length is exact
    from cotopo.altopt import analytic_iteration_time
    S = 1e7
    res = simulate(_all_to_all(n, S), DirectNetwork(Topology.from_rings(n, [1]), 100))
    alpha = res.bandwidth_tax
    assert alpha == pytest.approx(n / 2)
    model = analytic_iteration_time(0, S * n * (n - 1), n, B, alpha, 0)
    assert res.iteration_time_us == pytest.approx(model, rel=0.10)


def test_metrics_fields(tmp_path):
    from cotopo.simulator.metrics import write_cdf_csv
    t = Topology.from_rings(8, [1, 3], 2)
    tasks = [Task.comm(i, 0, i + 1, 1e6) for i in range(7)]
    res = simulate(tasks, DirectNetwork(t, 100))
    m = metrics(res, t)
    assert m["link_load_cdf"][-1][1] == 1.0
    assert m["all_pairs_path_length_mean"] > 1
    write_cdf_csv(m["link_load_cdf"], tmp_path / "c.csv", ("bytes", "cdf"))
    assert (tmp_path / "c.csv").read_text().startswith("bytes,cdf")


def test_cdf_points():
    assert cdf_points([3, 1, 1, 2]) == [(1.0, 0.5), (2.0, 0.75), (3.0, 1.0)]
    assert cdf_points([]) == []
