"""Scenario files: JSON description of a swarm, its devices and run settings.

Two forms are accepted. An explicit scenario lists ``drones`` and ``devices``::

    {
      "area": [100, 100],
      "seed": 7,
      "link_budget": {"bandwidth_hz": 5e6},
      "drones": [{"id": 0, "role": "entry", "x": 10, "y": 20, "altitude": 40}, ...],
      "devices": [{"id": 0, "x": 12, "y": 18, "lambda": 50}, ...],
      "sla": {"latency_bound": 0.002, "metric": "avg", "rho_max": 0.95},
      "alpha": 0.5,
      "mode": "paper"
    }

A generated scenario names a scale and a device count instead::

    {"scale": "small", "device_count": 110, "seed": 3}

Drones without ``mu`` get the link-budget rate at their altitude; drones
without ``capacity`` get floor(mu / lambda) for the scenario's device rate.
An optional ``allocation`` object maps device ids to drone ids; otherwise
devices go to the nearest entry drone with room.

Settings resolve as command-line flag, then file, then built-in default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

from swarmcompose.core import Allocation, Device, Drone, Position, Role, Topology, allocate_devices
from swarmcompose.linkbudget import LinkBudget, device_capacity
from swarmcompose.selection import SlaSpec
from swarmcompose.workload import DEFAULT_AREA, DEFAULT_DEVICE_LAMBDA, generate_topology, place_devices

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "alpha": 0.5,
    "mode": "paper",
    "latency_bound": 2e-3,
    "metric": "avg",
    "rho_max": 0.95,
}


class ScenarioError(ValueError):
    """The scenario file is missing, unreadable or malformed."""


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    allocation: Allocation
    settings: Mapping[str, Any]
    link: LinkBudget

    def setting(self, name: str, override=None):
        """Flag value if given, else the file's, else the default."""
        if override is not None:
            return override
        return self.settings.get(name, DEFAULTS.get(name))

    def sla(self, latency_bound=None, metric=None, rho_max=None) -> SlaSpec:
        return SlaSpec(float(self.setting("latency_bound", latency_bound)),
                       self.setting("metric", metric),
                       float(self.setting("rho_max", rho_max)))

    def to_dict(self) -> dict:
        return {
            "area": list(self.topology.area),
            "link_budget": self.link.to_dict(),
            "drones": [{"id": d.id, "role": d.role.value, "x": d.position.x, "y": d.position.y,
                        "altitude": d.position.altitude, "mu": d.service_rate_mu,
                        "capacity": d.capacity_Cd} for d in self.topology.drones],
            "devices": [{"id": u.id, "x": u.position.x, "y": u.position.y,
                         "lambda": u.arrival_rate_lambda} for u in self.topology.devices],
            "allocation": {str(k): v for k, v in self.allocation.assignment.items()},
            **{k: v for k, v in self.settings.items()},
        }


def _settings(data: Mapping) -> dict:
    out = {k: data[k] for k in ("seed", "alpha", "mode") if k in data}
    sla = data.get("sla") or {}
    for key in ("latency_bound", "metric", "rho_max"):
        if key in sla:
            out[key] = sla[key]
    return out


def scenario_from_dict(data: Mapping) -> Scenario:
    if not isinstance(data, Mapping):
        raise ScenarioError("scenario must be a JSON object")
    link = LinkBudget.from_dict(dict(data.get("link_budget") or {}))
    area = tuple(float(v) for v in data.get("area", DEFAULT_AREA))
    lam = float(data.get("per_device_lambda", DEFAULT_DEVICE_LAMBDA))
    seed = int(data.get("seed", DEFAULTS["seed"]))
    try:
        if "drones" in data:
            topology = _explicit(data, link, area, lam)
        elif "scale" in data:
            topology = generate_topology(data["scale"], area, seed, link,
                                         float(data.get("altitude", 40.0)), lam)
            topology = place_devices(topology, int(data.get("device_count", 0)), lam, seed + 1)
        else:
            raise ScenarioError("scenario needs either 'drones' or 'scale'")
        if "allocation" in data:
            allocation = Allocation({int(k): int(v) for k, v in data["allocation"].items()})
        else:
            allocation = allocate_devices(topology)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc!r}") from exc
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from exc
    return Scenario(topology, allocation, _settings(data), link)


def _explicit(data: Mapping, link: LinkBudget, area, lam: float) -> Topology:
    devices = []
    for u in data.get("devices", ()):
        devices.append(Device(int(u["id"]), Position(float(u["x"]), float(u["y"]), 0.0),
                              float(u.get("lambda", lam))))
    typical = max((u.arrival_rate_lambda for u in devices), default=lam)
    drones = []
    for d in data["drones"]:
        alt = float(d.get("altitude", 40.0))
        mu = float(d["mu"]) if "mu" in d else link.data_rate(alt)
        cap = int(d["capacity"]) if "capacity" in d else max(1, device_capacity(mu, typical))
        drones.append(Drone(int(d["id"]), Role(d.get("role", "entry")),
                            Position(float(d["x"]), float(d["y"]), alt), mu, cap))
    return Topology(tuple(drones), tuple(devices), area)


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {p}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p} is not valid JSON: {exc}") from exc
    return scenario_from_dict(data)


def with_overrides(scenario: Scenario, **overrides) -> Scenario:
    settings = dict(scenario.settings)
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return replace(scenario, settings=settings)
