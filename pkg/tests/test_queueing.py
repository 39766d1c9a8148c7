import pytest

from swarmcompose.composition import CompositionPlan, Strategy, compose
from swarmcompose.queueing import (
    NodeDelay,
    NodeQueueInput,
    PlanEvaluator,
    QueueConfig,
    UnstablePath,
    composition_latency,
    delay_table_csv,
    derive_node_arrivals,
    evaluate_plan,
    node_delay,
    node_flows,
    path_latency,
    stability_check,
)
from conftest import build, drone

FIXTURE = NodeQueueInput(lambda_c=0.1, lambda_d=0.4, xbar_c=0.5, xbar_d=1.0, x2_c=0.25, x2_d=1.0)


def test_paper_mode_hand_values():
    nd = node_delay(FIXTURE, "paper")
    assert nd.stable
    assert nd.rho == pytest.approx(0.45)
    assert nd.rho_c == pytest.approx(0.05)
    assert nd.R == pytest.approx(0.425 / 1.1)
    assert nd.W_c == pytest.approx(0.406699, abs=1e-6)
    assert nd.W_d == pytest.approx(0.739452, abs=1e-6)
    assert nd.D_d == pytest.approx(1.739452, abs=1e-6)
    assert nd.D_c == pytest.approx(nd.W_c + 0.5)


def test_standard_mode_drops_one_factor():
    paper, std = node_delay(FIXTURE, "paper"), node_delay(FIXTURE, "standard")
    assert std.R == pytest.approx(paper.R * (1 - 0.45))


def test_empty_system():
    nd = node_delay(NodeQueueInput(0, 0, 0.5, 1.0, 0.25, 1.0))
    assert nd.R == nd.W_c == nd.W_d == 0
    assert nd.D_d == 1.0 and nd.D_c == 0.5


def test_overload_is_reported_not_raised():
    nd = node_delay(NodeQueueInput(0, 1.2, 0, 1.0, 0, 1.0))
    assert not nd.stable and nd.rho == pytest.approx(1.2)
    assert nd.W_d is None and nd.D_d is None


def test_mm1_reduction():
    nd = node_delay(NodeQueueInput(0, 0.5, 0, 1.0, 0, 2.0), "standard")
    assert nd.W_d == pytest.approx(1.0, abs=1e-12)
    assert node_delay(NodeQueueInput(0, 0.5, 0, 1.0, 0, 2.0), "paper").W_d == pytest.approx(2.0)


def test_input_validation():
    with pytest.raises(ValueError):
        NodeQueueInput(-1, 0, 0, 1, 0, 1)
    with pytest.raises(ValueError):
        NodeQueueInput(0, 1, 0, 1.0, 0, 0.5)
    with pytest.raises(ValueError):
        node_delay(FIXTURE, "bogus")
    with pytest.raises(ValueError):
        QueueConfig(distribution="pareto")


def test_path_latency():
    nd = node_delay(FIXTURE)
    assert path_latency([7], {7: nd}) == pytest.approx(1.739452, abs=1e-6)
    assert path_latency([7, 8], {7: nd, 8: nd}) == pytest.approx(3.478904, abs=1e-6)
    bad = NodeDelay(rho=1.1, rho_c=0.0, stable=False)
    with pytest.raises(UnstablePath):
        path_latency([7, 8], {7: nd, 8: bad})


def _fixed(d):
    return NodeDelay(rho=0.1, rho_c=0.0, stable=True, R=0.0, W_c=0.0, W_d=0.0, D_c=d, D_d=d)


def test_weighted_mean_and_max():
    plan = CompositionPlan(Strategy.DIRECT, {0: 2, 1: 3, 2: None, 3: None})
    lat = composition_latency(plan, {0: _fixed(0.5), 1: _fixed(1.5), 2: _fixed(0.5), 3: _fixed(1.5)},
                              {0: 5.0, 1: 5.0})
    assert lat.L_avg == pytest.approx(2.0) and lat.L_max == pytest.approx(3.0)
    assert sum(lat.omega.values()) == pytest.approx(1.0)


def test_single_path_avg_equals_max():
    plan = CompositionPlan(Strategy.DIRECT, {0: 1, 1: None})
    lat = composition_latency(plan, {0: _fixed(1.0), 1: _fixed(2.0)}, {0: 3.0})
    assert lat.L_avg == lat.L_max == pytest.approx(3.0)


def test_stability_check_boundary():
    assert stability_check({0: _fixed(1.0)}, 0.95) == (True, [])
    hot = NodeDelay(rho=0.99, rho_c=0.0, stable=True, R=0, W_c=0, W_d=0, D_c=1, D_d=1)
    assert stability_check({0: _fixed(1.0), 4: hot}, 0.95) == (False, [4])
    edge = NodeDelay(rho=0.95, rho_c=0.0, stable=True, R=0, W_c=0, W_d=0, D_c=1, D_d=1)
    assert stability_check({0: edge}, 0.95)[0]


def test_chain_flow():
    topo, alloc = build([drone(0), drone(1), drone(2, "gateway")], {0: 10})
    plan = CompositionPlan(Strategy.PARALLEL, {0: 1, 1: 2, 2: None}, chains=((0, 1, 2),), k=1)
    arr = derive_node_arrivals(plan, topo, alloc)
    assert [arr[i].lambda_d for i in range(3)] == [10, 10, 10]
    assert arr[0].lambda_c == pytest.approx(0.5)


def test_cluster_head_aggregates():
    own = {0: 5.0, 1: 5.0, 2: 5.0, 3: 5.0, 9: 0.0}
    plan = CompositionPlan(Strategy.CLUSTERED, {1: 0, 2: 0, 3: 0, 0: 9, 9: None})
    assert node_flows(plan, own)[0] == 20.0


def test_direct_gateway_sums():
    topo, alloc = build([drone(0), drone(1), drone(2), drone(8, "gateway"), drone(9, "gateway")],
                        {0: 3, 1: 4, 2: 5})
    plan = CompositionPlan(Strategy.DIRECT, {0: 8, 1: 8, 2: 9, 8: None, 9: None})
    arr = derive_node_arrivals(plan, topo, alloc)
    assert arr[8].lambda_d == 7 and arr[9].lambda_d == 5


def test_flow_conservation(small_world):
    topo, alloc = small_world
    total = sum(u.arrival_rate_lambda for u in topo.devices)
    for s in Strategy:
        plan = compose(s, topo, alloc)
        arr = derive_node_arrivals(plan, topo, alloc)
        assert sum(arr[g.id].lambda_d for g in topo.gateways) == pytest.approx(total)


def test_evaluator_memoises(small_world):
    topo, alloc = small_world
    ev = PlanEvaluator(topo, alloc)
    plan = compose("direct", topo, alloc)
    first = ev(plan)
    again = CompositionPlan.from_dict(plan.to_dict())
    second = ev(again)
    assert ev.calls == 1 and second.plan is again
    assert second.latency == first.latency
    assert evaluate_plan(plan, topo, alloc).latency == first.latency


def test_delay_csv_marks_unstable():
    text = delay_table_csv({1: node_delay(FIXTURE), 2: NodeDelay(rho=1.5, rho_c=0.0, stable=False)})
    lines = text.splitlines()
    assert lines[0] == "drone_id,rho,rho_c,R,W_c,W_d,D_c,D_d,stable"
    assert lines[2].endswith("inf,inf,inf,inf,inf,False")
