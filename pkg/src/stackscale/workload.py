"""Sensor workload: Poisson arrivals/departures and the load-to-utilization model.

Each live sensor presents a fixed demand vector to every service listed in
the load model. Demand is expressed in units of one replica's capacity, so
a service with ``n`` absorbing replicas sees ``sensors * demand / n`` per
dimension, clamped to [0, 1], plus bounded uniform jitter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

import numpy as np

from .events import EventKind, SimEvent
from .model import MetricSample, MicroService, State, UtilizationVector, clamp01


class PhaseMode(Enum):
    ARRIVALS_ONLY = "ArrivalsOnly"
    HOLD = "Hold"
    DEPARTURES_ONLY = "DeparturesOnly"


@dataclass(frozen=True)
class WorkloadPhase:
    start: float
    end: float
    mode: PhaseMode
    rate: float = 0.0  # events per minute

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"phase start {self.start} must precede end {self.end}")
        if self.rate < 0 or not math.isfinite(self.rate):
            raise ValueError(f"phase rate must be >= 0, got {self.rate}")


def check_phases(phases) -> None:
    prev_end = -math.inf
    for p in phases:
        if p.start < prev_end:
            raise ValueError("workload phases must be ordered and non-overlapping")
        prev_end = p.end


@dataclass(frozen=True)
class LoadModel:
    """Per-sensor demand on each service.

    ``demand`` maps service id to a (cpu, mem, net) triple. ``driver`` is the
    service whose live replicas are the sensors. Arrivals are refused once a
    service that can no longer grow would exceed ``saturation`` on any
    dimension.
    """

    driver: str
    demand: Mapping[str, tuple] = field(default_factory=dict)
    noise: float = 0.02
    saturation: float = 1.0

    def __post_init__(self):
        for sid, vec in self.demand.items():
            if len(vec) != 3 or any(d < 0 or not math.isfinite(d) for d in vec):
                raise ValueError(f"demand for {sid} must be three non-negative numbers")
        if self.noise < 0:
            raise ValueError("noise amplitude must be >= 0")

    def __hash__(self):
        return hash((self.driver, tuple(sorted(self.demand.items())), self.noise, self.saturation))


def generate_arrivals(phase: WorkloadPhase, rng: np.random.Generator) -> list:
    """Poisson event times in ``[start, end)`` for one phase.

    Gaps are exponential with mean ``60 / rate`` seconds. Hold phases and
    zero rates yield nothing.
    """
    if phase.mode is PhaseMode.HOLD or phase.rate == 0:
        return []
    kind = (
        EventKind.SENSOR_ARRIVAL
        if phase.mode is PhaseMode.ARRIVALS_ONLY
        else EventKind.SENSOR_DEPARTURE
    )
    mean_gap = 60.0 / phase.rate
    events = []
    t = phase.start
    while True:
        t += rng.exponential(mean_gap)
        if t >= phase.end:
            break
        events.append(SimEvent(float(t), kind))
    return events


def absorbing_replicas(service: MicroService, now: float = math.inf) -> int:
    return sum(
        1
        for r in service.replicas
        if r.state is State.RUNNING and r.absorbs_from is not None and r.absorbs_from <= now
    )


def clean_utilization(
    service: MicroService, live_sensors: int, model: LoadModel, now: float = math.inf
) -> tuple:
    """Pre-noise per-replica utilization; zeros without absorbing replicas."""
    d = model.demand.get(service.service_id)
    n = absorbing_replicas(service, now)
    if d is None or n == 0:
        return (0.0, 0.0, 0.0)
    return tuple(clamp01(live_sensors * x / n) for x in d)


def _jitter(rng: np.random.Generator, amplitude: float, size) -> np.ndarray:
    if amplitude == 0:
        return np.zeros(size)
    return rng.uniform(-amplitude, amplitude, size=size)


def utilization(
    service: MicroService,
    live_sensors: int,
    model: LoadModel,
    rng: np.random.Generator,
    now: float = math.inf,
) -> UtilizationVector:
    base = clean_utilization(service, live_sensors, model, now)
    eps = _jitter(rng, model.noise, 3)
    return UtilizationVector(*(b + e for b, e in zip(base, eps)))


def beat_samples(
    services, live_sensors: int, model: LoadModel, at: float, rng: np.random.Generator
) -> list:
    """One MetricSample per Running instance of each service.

    Running instances still inside their contribution delay carry no load
    and report jitter only.
    """
    out = []
    for svc in services:
        running = svc.running()
        if not running:
            continue
        base = np.array(clean_utilization(svc, live_sensors, model, at))
        eps = _jitter(rng, model.noise, (len(running), 3))
        sid = svc.service_id
        for r, e in zip(running, eps):
            absorbing = r.absorbs_from is not None and r.absorbs_from <= at
            v = np.clip((base if absorbing else 0.0) + e, 0.0, 1.0)
            out.append(MetricSample(r.id, sid, at, UtilizationVector(v[0], v[1], v[2])))
    return out


def admits(services: Mapping[str, MicroService], live_sensors: int, model: LoadModel) -> bool:
    """Whether one more sensor fits the application's capacity.

    Only services that cannot add replicas (scaling disabled, or already at
    max_replicas) can refuse; they refuse when the extra sensor would push
    their per-replica demand past ``saturation``.
    """
    for sid, d in model.demand.items():
        svc: Optional[MicroService] = services.get(sid)
        if svc is None:
            continue
        pol = svc.policy
        if pol.auto_scale and svc.live_count < pol.max_replicas:
            continue
        n = svc.live_count
        if n == 0:
            return False
        if any((live_sensors + 1) * x / n > model.saturation for x in d):
            return False
    return True
