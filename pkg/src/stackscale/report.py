"""Run a scenario end to end and write its result files.

Artifacts written to the output directory:

``counts.csv``
    one row per (tick, service): running containers and running VMs of the
    hosting pool, observed at the start of the tick.
``provisioning.csv``
    one row per completed VM or container provisioning.
``decisions.csv``
    the engine's full decision history.
``summary.txt``
    peak counts against configured caps, and time back to the initial state.
``trace.tsv``
    the simulator trace, one record per line.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .cluster import RuntimeFault
from .config import atomic_write
from .engine import DECISION_FIELDS, decision_row
from .scenario import Scenario, ScenarioError, build, read

log = logging.getLogger(__name__)

COUNTS_FIELDS = ("tick", "time_s", "service", "pool", "containers", "vms")
PROVISIONING_FIELDS = ("kind", "entity_id", "target", "requested_s", "ready_s", "duration_s")

EXIT_OK = 0
EXIT_SCENARIO = 2
EXIT_RUNTIME = 3


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def counts_csv(sim) -> str:
    return _csv(COUNTS_FIELDS, (
        (s.tick, f"{s.time_s:.3f}", s.service_id, s.pool_id, s.containers, s.vms)
        for s in sim.snapshots
    ))


def provisioning_csv(sim) -> str:
    return _csv(PROVISIONING_FIELDS, (
        (p.kind, p.entity_id, p.target, f"{p.requested_s:.6f}", f"{p.ready_s:.6f}",
         f"{p.duration_s:.6f}")
        for p in sim.provisioning
    ))


def decisions_csv(engine) -> str:
    return _csv(DECISION_FIELDS, (decision_row(d) for d in engine.decisions))


def trace_text(sim) -> str:
    return "".join(r.line() + "\n" for r in sim.trace)


@dataclass
class RunResult:
    scenario: Scenario
    sim: object
    engine: object
    seed: int
    peaks: dict = field(default_factory=dict)
    last_departure_tick: Optional[int] = None
    baseline_tick: Optional[int] = None

    @property
    def time_to_baseline(self) -> Optional[int]:
        if self.last_departure_tick is None or self.baseline_tick is None:
            return None
        return self.baseline_tick - self.last_departure_tick


def peaks(sim) -> dict:
    """Per service: (peak running containers, peak running VMs of its pool)."""
    out: dict = {}
    for s in sim.snapshots:
        c, v = out.get(s.service_id, (0, 0))
        out[s.service_id] = (max(c, s.containers), max(v, s.vms))
    return out


def baseline_tick(sim, scn: Scenario, after_tick: int) -> Optional[int]:
    """First tick >= ``after_tick`` from which every auto-scaled service stays at its initial count."""
    initial = scn.initial_replicas
    tracked = {sid for sid, svc in sim.services.items() if svc.policy.auto_scale}
    by_tick: dict = {}
    for s in sim.snapshots:
        if s.service_id in tracked:
            by_tick.setdefault(s.tick, []).append(s.containers == initial[s.service_id])
    candidate = None
    for tick in sorted(by_tick):
        if tick < after_tick:
            continue
        if all(by_tick[tick]):
            if candidate is None:
                candidate = tick
        else:
            candidate = None
    return candidate


def summarize(result: RunResult) -> str:
    scn, sim = result.scenario, result.sim
    lines = [
        f"scenario: {scn.name}",
        f"seed: {result.seed}",
        f"duration_s: {scn.duration:g}",
        f"ticks: {sim.tick_index}",
        f"rejected_sensors: {sim.rejected_sensors}",
    ]
    for sid in sim.topology.order:
        svc = sim.services[sid]
        pool = sim.pools[svc.pool_id]
        c, v = result.peaks.get(sid, (0, 0))
        lines.append(
            f"service {sid}: auto_scale={str(svc.policy.auto_scale).lower()} "
            f"peak_containers={c} max_replicas={svc.policy.max_replicas} "
            f"peak_vms={v} max_vms={pool.policy.max_vms} pool={pool.pool_id}"
        )
    ltd = result.last_departure_tick
    lines.append(f"last_departure_tick: {ltd if ltd is not None else 'none'}")
    bt = result.baseline_tick
    lines.append(f"baseline_tick: {bt if bt is not None else 'never'}")
    ttb = result.time_to_baseline
    lines.append(f"time_to_baseline_ticks: {ttb if ttb is not None else 'n/a'}")
    return "\n".join(lines) + "\n"


def simulate(scenario_path, seed: Optional[int] = None) -> RunResult:
    """Run a scenario in memory. Raises ScenarioError or RuntimeFault."""
    scn = read(scenario_path)
    seed = scn.seed if seed is None else seed
    sim, engine = build(scn, seed)
    sim.run(scn.duration)
    result = RunResult(scn, sim, engine, seed, peaks=peaks(sim))
    if sim.last_departure_s is not None:
        ctl = scn.timing.control_interval
        result.last_departure_tick = math.ceil(sim.last_departure_s / ctl)
        result.baseline_tick = baseline_tick(sim, scn, result.last_departure_tick)
    return result


def write_artifacts(result: RunResult, out_dir) -> dict:
    out = Path(out_dir)
    files = {
        "counts.csv": counts_csv(result.sim),
        "provisioning.csv": provisioning_csv(result.sim),
        "decisions.csv": decisions_csv(result.engine),
        "summary.txt": summarize(result),
        "trace.tsv": trace_text(result.sim),
    }
    paths = {}
    for name, text in files.items():
        atomic_write(out / name, text)
        paths[name] = out / name
    return paths


def run_scenario(scenario_path, seed: Optional[int], out_dir) -> int:
    """Run and write artifacts; returns the process exit status."""
    try:
        result = simulate(scenario_path, seed)
    except ScenarioError as e:
        log.error("scenario error: %s", e)
        return EXIT_SCENARIO
    except RuntimeFault as e:
        log.error("runtime fault: %s", e)
        return EXIT_RUNTIME
    write_artifacts(result, out_dir)
    return EXIT_OK
