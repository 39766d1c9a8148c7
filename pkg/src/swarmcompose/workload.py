"""Scenario scales, random topologies and perturbed request bins."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from swarmcompose.core import Allocation, Device, Drone, Position, Role, Topology, allocate_devices
from swarmcompose.linkbudget import LinkBudget, device_capacity
from swarmcompose.selection import SlaSpec

# About 110 devices at this rate put the small swarm's gateways near rho = 0.5
# under direct composition with the default link budget (mu ~ 3651 pkt/s).
DEFAULT_DEVICE_LAMBDA = 50.0
DEFAULT_AREA = (100.0, 100.0)


@dataclass(frozen=True)
class ScenarioScale:
    name: str
    entry_drones: int
    gateways: int


SCALES = {
    "small": ScenarioScale("small", 10, 3),
    "medium": ScenarioScale("medium", 25, 5),
    "large": ScenarioScale("large", 100, 10),
}


def get_scale(name_or_scale) -> ScenarioScale:
    if isinstance(name_or_scale, ScenarioScale):
        return name_or_scale
    try:
        return SCALES[name_or_scale]
    except KeyError:
        raise ValueError(f"unknown scale {name_or_scale!r}; choose from {sorted(SCALES)}") from None


def generate_topology(scale, area=DEFAULT_AREA, seed: int = 0, link: LinkBudget = LinkBudget(),
                      altitude: float = 40.0, per_device_lambda: float = DEFAULT_DEVICE_LAMBDA) -> Topology:
    """Drop entry drones (ids ``0..n-1``) then gateways uniformly over ``area``."""
    scale = get_scale(scale)
    w, h = area
    if not (w > 0 and h > 0):
        raise ValueError("area must be positive")
    rng = np.random.default_rng(seed)
    mu = link.data_rate(altitude)
    cap = max(1, device_capacity(mu, per_device_lambda))
    n = scale.entry_drones + scale.gateways
    xy = rng.uniform((0.0, 0.0), (w, h), size=(n, 2))
    drones = []
    for i in range(n):
        role = Role.ENTRY if i < scale.entry_drones else Role.GATEWAY
        drones.append(Drone(i, role, Position(float(xy[i, 0]), float(xy[i, 1]), altitude), mu, cap))
    return Topology(tuple(drones), (), (float(w), float(h)))


def place_devices(topology: Topology, count: int, per_device_lambda: float, seed: int) -> Topology:
    rng = np.random.default_rng(seed)
    w, h = topology.area
    xy = rng.uniform((0.0, 0.0), (w, h), size=(count, 2))
    devices = tuple(Device(i, Position(float(x), float(y), 0.0), per_device_lambda) for i, (x, y) in enumerate(xy))
    return topology.with_devices(devices)


@dataclass(frozen=True)
class Request:
    index: int
    value: float
    device_count: int
    per_device_lambda: float
    sla: SlaSpec
    seed: int


@dataclass(frozen=True)
class RequestBin:
    nominal_value: float
    axis: str
    requests: tuple[Request, ...]
    seed: int = 0


AXES = ("sla_latency", "device_count")


def generate_requests(nominal: float, axis: str, count: int = 100, perturbation: float = 0.1,
                      seed: int = 0, base_devices: int = 110,
                      base_sla: SlaSpec = SlaSpec(latency_bound=2e-3),
                      per_device_lambda: float = DEFAULT_DEVICE_LAMBDA) -> RequestBin:
    """Draw ``count`` requests whose axis value is uniform in ``nominal * [1 - p, 1 + p]``.

    Device counts are rounded to the nearest integer. Each request gets its
    own seed for drone and device placement, derived from ``seed``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    ss = np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss)
    child_seeds = [int(c.generate_state(1, dtype=np.uint64)[0] >> 1) for c in ss.spawn(count)]
    requests = []
    for i in range(count):
        factor = rng.uniform(1.0 - perturbation, 1.0 + perturbation) if perturbation > 0 else 1.0
        value = nominal * factor
        if axis == "device_count":
            devices = max(1, int(round(value)))
            sla = base_sla
        else:
            devices = base_devices
            sla = replace(base_sla, latency_bound=value)
        requests.append(Request(i, value, devices, per_device_lambda, sla, child_seeds[i]))
    return RequestBin(nominal, axis, tuple(requests), seed)


def materialize(request: Request, scale, area=DEFAULT_AREA, link: LinkBudget = LinkBudget(),
                altitude: float = 40.0) -> tuple[Topology, Allocation]:
    """Random drones and devices for one request, plus the nearest-feasible allocation."""
    topo_seed, dev_seed = np.random.SeedSequence(request.seed).generate_state(2)
    topology = generate_topology(scale, area, int(topo_seed), link, altitude, request.per_device_lambda)
    topology = place_devices(topology, request.device_count, request.per_device_lambda, int(dev_seed))
    return topology, allocate_devices(topology)
