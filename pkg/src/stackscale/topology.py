"""Static application topology: what runs where, before any policy is applied."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cluster import CONTAINER_TYPES, FLAVORS, ContainerType, VmFlavor


@dataclass(frozen=True)
class ServiceSpec:
    service_id: str
    pool: str
    container_type: str
    initial_replicas: int = 1
    contribution_delay: float = 0.0


@dataclass(frozen=True)
class PoolSpec:
    pool_id: str
    flavor: str
    initial_vms: int = 1


@dataclass
class TopologySpec:
    services: dict = field(default_factory=dict)
    pools: dict = field(default_factory=dict)
    flavors: dict = field(default_factory=lambda: dict(FLAVORS))
    container_types: dict = field(default_factory=lambda: dict(CONTAINER_TYPES))

    def services_in(self, pool_id: str) -> list:
        return [s for s in self.services.values() if s.pool == pool_id]


class TopologyError(ValueError):
    pass


def parse_topology(data: dict) -> TopologySpec:
    """Build a TopologySpec from an already-decoded TOML table."""
    spec = TopologySpec()
    try:
        for name, t in data.get("flavors", {}).items():
            spec.flavors[name] = VmFlavor(name, float(t["cpu"]), float(t["mem_mb"]), float(t["net"]))
        for name, t in data.get("container_types", {}).items():
            spec.container_types[name] = ContainerType(
                name, float(t["mem_mb"]), float(t["cpu_quota"]), str(t.get("network", "overlay"))
            )
        for pid, t in data.get("pools", {}).items():
            spec.pools[pid] = PoolSpec(pid, str(t["flavor"]), int(t.get("initial_vms", 1)))
        for sid, t in data.get("services", {}).items():
            spec.services[sid] = ServiceSpec(
                sid,
                str(t["pool"]),
                str(t["container_type"]),
                int(t.get("initial_replicas", 1)),
                float(t.get("contribution_delay_s", 0.0)),
            )
    except KeyError as e:
        raise TopologyError(f"missing topology key {e}") from None
    except (TypeError, ValueError) as e:
        raise TopologyError(str(e)) from None

    for p in spec.pools.values():
        if p.flavor not in spec.flavors:
            raise TopologyError(f"pool {p.pool_id}: unknown flavor {p.flavor}")
        if p.initial_vms < 0:
            raise TopologyError(f"pool {p.pool_id}: initial_vms must be >= 0")
    for s in spec.services.values():
        if s.pool not in spec.pools:
            raise TopologyError(f"service {s.service_id}: unknown pool {s.pool}")
        if s.container_type not in spec.container_types:
            raise TopologyError(f"service {s.service_id}: unknown container type {s.container_type}")
        if s.initial_replicas < 0 or s.contribution_delay < 0:
            raise TopologyError(f"service {s.service_id}: negative replicas or delay")
    return spec


def load_topology(path) -> TopologySpec:
    with open(Path(path), "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise TopologyError(f"{path}: {e}") from None
    return parse_topology(data)
