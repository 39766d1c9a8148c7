import itertools
import math

import numpy as np
import pytest

from swarmcompose.composition import CompositionPlan, Strategy
from swarmcompose.core import (
    Allocation,
    AtomicService,
    CompositeService,
    InsufficientCapacity,
    Position,
    Role,
    ServiceRegistry,
    Topology,
    UnknownDrone,
    allocate_devices,
    discover,
    publish,
    validate_composite,
)
from swarmcompose.workload import generate_topology
from conftest import device, drone


def test_single_device_single_drone():
    topo = Topology((drone(0, x=10, y=10, cap=5), drone(1, "gateway")), (device(0, 10, 10),))
    assert dict(allocate_devices(topo).assignment) == {0: 0}


def test_capacity_forces_spill():
    topo = Topology((drone(0, x=0, cap=1), drone(1, x=50, cap=1), drone(2, "gateway", x=99)),
                    (device(0, 1, 0), device(1, 2, 0)))
    assert dict(allocate_devices(topo).assignment) == {0: 0, 1: 1}


def test_insufficient_capacity():
    topo = Topology((drone(0, cap=1), drone(1, "gateway")), (device(0), device(1)))
    with pytest.raises(InsufficientCapacity):
        allocate_devices(topo)


def test_radius_limits_placement():
    topo = Topology((drone(0, x=0), drone(1, "gateway")), (device(0, 30, 40),))
    with pytest.raises(InsufficientCapacity):
        allocate_devices(topo, radius=49.0)
    assert allocate_devices(topo, radius=50.0).assignment[0] == 0


def test_ties_go_to_lowest_id():
    topo = Topology((drone(3, x=-5), drone(1, x=5), drone(9, "gateway")), (device(0, 0, 0),))
    assert allocate_devices(topo).assignment[0] == 1


def _oracle(topo):
    """Independent nearest-feasible replay: for each device scan every drone."""
    free = {d.id: d.capacity_Cd for d in topo.drones if d.role is Role.ENTRY}
    pos = {d.id: (d.position.x, d.position.y) for d in topo.drones}
    out = {}
    for u in topo.devices:
        cands = sorted((math.dist((u.position.x, u.position.y), pos[d]), d) for d in free if free[d] > 0)
        out[u.id] = cands[0][1]
        free[cands[0][1]] -= 1
    return out


def test_hundred_devices_match_oracle():
    rng = np.random.default_rng(5)
    drones = [drone(i, x=x, y=y, cap=20) for i, (x, y) in enumerate(rng.uniform(0, 100, (10, 2)))]
    drones.append(drone(10, "gateway", 50, 50))
    devices = [device(i, x, y) for i, (x, y) in enumerate(rng.uniform(0, 100, (100, 2)))]
    topo = Topology(tuple(drones), tuple(devices))
    alloc = allocate_devices(topo)
    assert len(alloc.assignment) == 100
    assert max(alloc.counts().values()) <= 20
    assert dict(alloc.assignment) == _oracle(topo)


def test_topology_needs_gateway_and_entry():
    with pytest.raises(ValueError):
        Topology((drone(0),))
    with pytest.raises(ValueError):
        Topology((drone(0, "gateway"),))
    with pytest.raises(ValueError):
        Topology((drone(0), drone(0, "gateway")))


def test_drone_rates_lists_every_drone():
    topo = Topology((drone(0), drone(1), drone(2, "gateway")), (device(0, lam=2.0), device(1, lam=3.0)))
    alloc = Allocation({0: 0, 1: 0})
    assert alloc.drone_rates(topo) == {0: 5.0, 1: 0.0, 2: 0.0}
    assert alloc.respects_capacity(topo)


def _direct_topo():
    drones = (drone(0), drone(1), drone(2, "gateway"))
    return Topology(drones, (device(0), device(1)))


def test_direct_plan_is_valid():
    topo = _direct_topo()
    plan = CompositionPlan(Strategy.DIRECT, {0: 2, 1: 2, 2: None})
    rep = validate_composite(CompositeService.from_plan(plan, Allocation({0: 0, 1: 1})), topo)
    assert rep.valid and rep.hops(0) == 1


def test_disconnected_drone_is_invalid():
    topo = _direct_topo()
    services = (AtomicService(0, {(0, 0)}, {(0, 2)}), AtomicService(1, {(1, 1)}), AtomicService(2))
    rep = validate_composite(CompositeService(services), topo)
    assert not rep.valid and rep.unreachable == (1,)


def test_three_hop_chain():
    topo = Topology((drone(0), drone(1, "relay"), drone(2, "relay"), drone(3, "gateway")), (device(0),))
    plan = CompositionPlan(Strategy.PARALLEL, {0: 1, 1: 2, 2: 3, 3: None})
    rep = validate_composite(CompositeService.from_plan(plan, Allocation({0: 0})), topo)
    assert rep.valid and rep.paths[0] == (0, 1, 2, 3) and rep.hops(0) == 3


def test_extra_relay_link_keeps_validity():
    topo = _direct_topo()
    base = (AtomicService(0, {(0, 0)}, {(0, 2)}), AtomicService(1, {(1, 1)}, {(1, 2)}), AtomicService(2))
    more = (AtomicService(0, {(0, 0)}, {(0, 2), (0, 1)}),) + base[1:]
    assert validate_composite(CompositeService(base), topo).valid
    assert validate_composite(CompositeService(more), topo).valid


def test_atomic_service_link_ownership():
    with pytest.raises(ValueError):
        AtomicService(0, {(0, 1)})
    with pytest.raises(ValueError):
        AtomicService(0, relay_links={(1, 2)})


def test_publish_and_discover():
    topo = generate_topology("small", seed=1)
    reg = ServiceRegistry(topo)
    assert discover(reg) == []
    for d in topo.drones:
        reg = publish(reg, AtomicService(d.id))
    assert len(reg) == 13
    assert len(discover(reg, role=Role.GATEWAY)) == 3
    assert [s.drone_id for s in discover(reg)] == sorted(d.id for d in topo.drones)


def test_publish_overwrites():
    topo = _direct_topo()
    reg = publish(ServiceRegistry(topo), AtomicService(0))
    svc = AtomicService(0, relay_links={(0, 2)})
    reg = publish(reg, svc, load=0.3)
    assert len(reg) == 1
    assert discover(reg) == [svc]
    assert reg.catalog[0].gateway_reachable and reg.catalog[0].load == 0.3


def test_publish_unknown_drone():
    with pytest.raises(UnknownDrone):
        publish(ServiceRegistry(_direct_topo()), AtomicService(42))


def test_distance_3d():
    a, b = Position(0, 0, 40), Position(3, 4, 0)
    assert a.distance(b) == 5.0
    assert a.distance(b, use_3d=True) == pytest.approx(math.sqrt(25 + 1600))
