"""Scenario files: the topology, the two policy files, workload and failures.

A scenario is a TOML file::

    name = "iot-baseline"
    seed = 42
    duration_s = 9000
    topology = "topology.toml"          # paths relative to this file
    micro_config = "microservice.ini"
    macro_config = "macroservice.ini"

    [timing]
    beat_interval_s = 15
    control_interval_s = 60
    window_s = 60
    metric_mode = "windowed"            # or "instantaneous"
    container_delay_s = [0.05, 0.5]

    [load]
    driver = "sensors"                  # service whose replicas are the sensors
    noise = 0.02
    saturation = 1.0
    [load.demand]
    kafka = [0.08, 0.015, 0.01]         # cpu, mem, net per sensor per replica

    [[phases]]
    start_s = 540
    end_s = 6000
    mode = "ArrivalsOnly"               # ArrivalsOnly | Hold | DeparturesOnly
    rate_per_min = 14

    [[failures]]
    at_s = 1800
    instance = "kafka-1"                # or service = "kafka" for its newest replica

A bare name such as ``iot-baseline`` resolves to a bundled scenario.
"""

from __future__ import annotations

import math
import sys
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import config
from .cluster import (
    ClusterSim,
    NoCapacity,
    SimTiming,
    initial_placement,
    initial_vms,
)
from .engine import INSTANTANEOUS, WINDOWED, Engine
from .model import (
    CyclicDependency,
    InvalidPolicy,
    MacroPool,
    MacroPolicy,
    MicroService,
    ServicePolicy,
    UnknownReference,
    ValidationError,
    topological_order,
    validate_topology,
)
from .topology import TopologyError, TopologySpec, load_topology
from .workload import LoadModel, PhaseMode, WorkloadPhase, check_phases, generate_arrivals


class ScenarioError(ValueError):
    """The scenario cannot be loaded or fails validation."""

    def __init__(self, problems):
        if isinstance(problems, (str, Exception)):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(describe(p) for p in self.problems))


def describe(problem) -> str:
    if isinstance(problem, Exception):
        return f"{type(problem).__name__}: {problem}"
    return str(problem)


@dataclass(frozen=True)
class Failure:
    at: float
    instance: Optional[str] = None
    service: Optional[str] = None


@dataclass
class Scenario:
    name: str
    path: Path
    seed: int
    duration: float
    topology: TopologySpec
    micro: list
    macro: list
    load_model: Optional[LoadModel]
    phases: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    timing: SimTiming = SimTiming()
    window: float = 60.0
    metric_mode: str = WINDOWED

    def micro_policy(self, service_id: str) -> ServicePolicy:
        for p in self.micro:
            if p.service_id == service_id:
                return p
        return ServicePolicy(service_id)

    def macro_policy(self, pool_id: str) -> Optional[MacroPolicy]:
        for p in self.macro:
            if p.pool_id == pool_id:
                return p
        return None

    @property
    def initial_replicas(self) -> dict:
        return {s.service_id: s.initial_replicas for s in self.topology.services.values()}


BUNDLED = "scenarios"


def bundled_names() -> list:
    root = resources.files(__package__) / BUNDLED
    return sorted(p.name for p in root.iterdir() if (p / "scenario.toml").is_file())


def resolve(path_or_name) -> Path:
    p = Path(path_or_name)
    if p.is_dir():
        p = p / "scenario.toml"
    if p.exists():
        return p
    root = resources.files(__package__) / BUNDLED / str(path_or_name) / "scenario.toml"
    if root.is_file():
        return Path(str(root))
    raise ScenarioError(f"no scenario file or bundled scenario named {path_or_name!r}")


def _read_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"{path}: {e}") from None
    except OSError as e:
        raise ScenarioError(f"{path}: {e.strerror}") from None


def read(path_or_name, collect: Optional[list] = None) -> Scenario:
    """Load a scenario. Policy problems go to ``collect`` if given, else raise."""
    path = resolve(path_or_name)
    data = _read_toml(path)
    base = path.parent
    problems = [] if collect is None else collect

    def rel(key):
        if key not in data:
            raise ScenarioError(f"{path}: missing required key {key!r}")
        return base / str(data[key])

    try:
        topo = load_topology(rel("topology"))
    except (TopologyError, OSError) as e:
        raise ScenarioError(e) from None

    try:
        micro, mp = config.load_collecting(rel("micro_config"), "micro")
        macro, ap = config.load_collecting(rel("macro_config"), "macro")
    except config.ParseError as e:
        raise ScenarioError(e) from None
    except OSError as e:
        raise ScenarioError(f"{e.filename}: {e.strerror}") from None
    problems.extend(mp + ap)

    try:
        timing_t = data.get("timing", {})
        timing = SimTiming(
            beat_interval=float(timing_t.get("beat_interval_s", 15.0)),
            control_interval=float(timing_t.get("control_interval_s", 60.0)),
            container_delay=tuple(float(x) for x in timing_t.get("container_delay_s", (0.05, 0.5))),
        )
        window = float(timing_t.get("window_s", 60.0))
        mode = str(timing_t.get("metric_mode", WINDOWED))
        if mode not in (WINDOWED, INSTANTANEOUS):
            raise ValueError(f"unknown metric_mode {mode!r}")

        load_t = data.get("load")
        load_model = None
        if load_t is not None:
            load_model = LoadModel(
                driver=str(load_t["driver"]),
                demand={k: tuple(float(x) for x in v) for k, v in load_t.get("demand", {}).items()},
                noise=float(load_t.get("noise", 0.02)),
                saturation=float(load_t.get("saturation", 1.0)),
            )

        phases = [
            WorkloadPhase(float(p["start_s"]), float(p["end_s"]), PhaseMode(p["mode"]),
                          float(p.get("rate_per_min", 0.0)))
            for p in data.get("phases", [])
        ]
        check_phases(phases)
        failures = [
            Failure(float(f["at_s"]), f.get("instance"), f.get("service"))
            for f in data.get("failures", [])
        ]
        seed = int(data.get("seed", 0))
        duration = float(data.get("duration_s", 0.0))
        if duration < 0 or not math.isfinite(duration):
            raise ValueError("duration_s must be a finite number >= 0")
    except KeyError as e:
        raise ScenarioError(f"{path}: missing key {e}") from None
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{path}: {e}") from None

    scn = Scenario(
        name=str(data.get("name", path.parent.name)),
        path=path,
        seed=seed,
        duration=duration,
        topology=topo,
        micro=micro,
        macro=macro,
        load_model=load_model,
        phases=phases,
        failures=failures,
        timing=timing,
        window=window,
        metric_mode=mode,
    )
    # a section that failed to load is already reported; don't also call it missing
    problems.extend(cross_check(scn, warn_missing=not problems))
    if collect is None and problems:
        raise ScenarioError(problems)
    return scn


def cross_check(scn: Scenario, warn_missing: bool = True) -> list:
    """Problems that need the topology and both policy files together."""
    topo = scn.topology
    problems: list = []
    for p in scn.micro:
        if p.service_id not in topo.services:
            problems.append(UnknownReference(f"microservice.ini section [{p.service_id}] is not a service"))
        rep = p.replication
        if rep is not None and rep.upstream_service not in topo.services:
            problems.append(UnknownReference(
                f"[{p.service_id}] is pegged to unknown service {rep.upstream_service}"))
    for p in scn.macro:
        if p.pool_id not in topo.pools:
            problems.append(UnknownReference(f"macroservice.ini section [{p.pool_id}] is not a pool"))
        if p.vm_flavor not in topo.flavors:
            problems.append(UnknownReference(f"[{p.pool_id}] uses unknown flavor {p.vm_flavor}"))
        for sid in p.containers_per_vm:
            if sid not in topo.services or topo.services[sid].pool != p.pool_id:
                problems.append(UnknownReference(f"[{p.pool_id}] sets containers_per_vm for {sid}, "
                                                 "which it does not host"))
    for pid in topo.pools:
        pol = scn.macro_policy(pid)
        if pol is None:
            problems.append(InvalidPolicy(f"pool {pid} has no macroservice.ini section"))
            continue
        for s in topo.services_in(pid):
            if s.service_id not in pol.containers_per_vm:
                problems.append(UnknownReference(
                    f"[{pid}] has no containers_per_vm entry for {s.service_id}"))
    for sid in topo.services if warn_missing else ():
        if not any(p.service_id == sid for p in scn.micro):
            warnings.warn(f"service {sid} has no microservice.ini section; defaults apply",
                          config.ConfigWarning, stacklevel=3)
    try:
        topological_order(
            [MicroService(sid, s.pool, scn.micro_policy(sid)) for sid, s in topo.services.items()]
        )
    except CyclicDependency as e:
        problems.append(e)
    lm = scn.load_model
    if lm is not None:
        if lm.driver not in topo.services:
            problems.append(UnknownReference(f"load driver {lm.driver} is not a service"))
        for sid in lm.demand:
            if sid not in topo.services:
                problems.append(UnknownReference(f"load demand for unknown service {sid}"))
    for f in scn.failures:
        if (f.instance is None) == (f.service is None):
            problems.append(InvalidPolicy("each failure needs exactly one of instance/service"))
        elif f.service is not None and f.service not in topo.services:
            problems.append(UnknownReference(f"failure targets unknown service {f.service}"))
        if f.at < 0:
            problems.append(InvalidPolicy("failure time must be >= 0"))
    return problems


def build(scn: Scenario, seed: Optional[int] = None) -> tuple:
    """Fresh ``(sim, engine)`` for one run of ``scn``."""
    seed = scn.seed if seed is None else seed
    topo = scn.topology
    pools = {}
    for pid, ps in topo.pools.items():
        pol = scn.macro_policy(pid)
        pools[pid] = MacroPool(pid, pol, vms=initial_vms(pid, ps.flavor, ps.initial_vms))
    services = [
        MicroService(sid, s.pool, scn.micro_policy(sid), container_type=s.container_type,
                     contribution_delay=s.contribution_delay)
        for sid, s in topo.services.items()
    ]
    driver = scn.load_model.driver if scn.load_model else None
    try:
        initial_placement(services, pools, scn.initial_replicas, flavors=topo.flavors,
                          container_types=topo.container_types,
                          pinned=frozenset([driver]) if driver else frozenset())
    except NoCapacity as e:
        raise ScenarioError(InvalidPolicy(f"initial replicas do not fit: {e}")) from None
    try:
        validated = validate_topology(services, pools.values())
    except ValidationError as e:
        raise ScenarioError(e) from None

    engine = Engine(window_len=scn.window, mode=scn.metric_mode)
    sim = ClusterSim(validated, seed=seed, load_model=scn.load_model, timing=scn.timing,
                     container_types=topo.container_types, flavors=topo.flavors,
                     controller=engine)
    for phase in scn.phases:
        sim.schedule(generate_arrivals(phase, sim.rng_workload))
    for f in scn.failures:
        try:
            if f.instance is not None:
                sim.inject_failure(f.instance, f.at)
            else:
                sim.inject_service_failure(f.service, f.at)
        except KeyError as e:
            raise ScenarioError(UnknownReference(f"failure targets unknown instance {e}")) from None
    return sim, engine


def validate(path_or_name) -> list:
    """Every problem found in the scenario, without running it."""
    problems: list = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", config.ConfigWarning)
        try:
            scn = read(path_or_name, collect=problems)
        except ScenarioError as e:
            return problems + e.problems
    if not problems:
        try:
            build(scn)
        except ScenarioError as e:
            problems.extend(e.problems)
    return problems
