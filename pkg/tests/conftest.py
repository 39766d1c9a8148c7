import pytest

from swarmcompose.core import Allocation, Device, Drone, Position, Role, Topology


def drone(i, role="entry", x=0.0, y=0.0, mu=100.0, cap=50):
    return Drone(i, Role(role), Position(float(x), float(y)), mu, cap)


def device(i, x=0.0, y=0.0, lam=1.0):
    return Device(i, Position(float(x), float(y), 0.0), lam)


def build(drones, loads, lam=1.0):
    """Topology plus allocation where ``loads[drone_id]`` devices sit on that drone."""
    devices, assignment = [], {}
    for d_id, n in sorted(loads.items()):
        for _ in range(n):
            u = len(devices)
            devices.append(device(u, lam=lam))
            assignment[u] = d_id
    topo = Topology(tuple(drones), tuple(devices))
    return topo, Allocation(assignment)


@pytest.fixture
def small_world():
    from swarmcompose.workload import generate_requests, materialize
    req = generate_requests(110, "device_count", count=1, perturbation=0.0, seed=11).requests[0]
    return materialize(req, "small")


# acceptance criteria append (label, passed, detail) here; printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
