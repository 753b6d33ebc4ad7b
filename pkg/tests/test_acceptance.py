"""The ten acceptance criteria, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict (see ``conftest.record``),
shown in the terminal summary.
"""

import csv
import io
import itertools
import tempfile
import time
from pathlib import Path


from stackscale import report, scenario
from stackscale.model import Direction, Reason, ReplicationSpec, Tier, UtilizationVector, Weights
from stackscale.policy import ScoreInputs, decide_micro, score

import test_cluster
import test_config
import test_engine
import test_model
from conftest import make_service, record
from oracles import exact_score, micro_oracle


def test_01_scoring_fidelity():
    w = Weights(0.5, 0.1, 0.1, 0.3)
    got = score(w, ScoreInputs(UtilizationVector(0.8, 0.2, 0.1), 1, 0))
    want = exact_score(w.as_tuple(), (0.8, 0.2, 0.1), 1)
    err = abs(got - float(want))
    ok = float(want) == 0.73 and err <= 1e-12
    assert record(1, "scoring fidelity f=0.73", ok, f"f={got!r}, |err|={err:.1e}")


def test_02_capacity_caps():
    t0 = time.perf_counter()
    res = report.simulate("iot-baseline")
    took = time.perf_counter() - t0
    p = res.peaks
    ok = p["kafka"] == (48, 12) and p["edge-processor"] == (24, 8) and took < 10
    assert record(2, "capacity caps Kafka 48/12, Edge 24/8", ok,
                  f"kafka={p['kafka']}, edge={p['edge-processor']}, {took:.1f}s")


def test_03_cascade_order(baseline):
    decs = baseline.engine.decisions

    def first_out(target, tier):
        return min((d.tick for d in decs if d.service_or_pool == target and d.tier is tier
                    and d.direction is Direction.OUT), default=None)

    k = first_out("kafka", Tier.MICRO)
    e = first_out("edge-processor", Tier.MICRO)
    m = first_out("kafka-vms", Tier.MACRO)
    ok = None not in (k, e, m) and k < e < m
    assert record(3, "cascade Kafka micro < Edge micro < Kafka-pool macro", ok,
                  f"ticks {k} < {e} < {m}")


def _provisioning_rows(result):
    return list(csv.DictReader(io.StringIO(report.provisioning_csv(result.sim))))


def test_04_provisioning_regimes(baseline):
    runs = [baseline] + [report.simulate(n) for n in scenario.bundled_names() if n != "iot-baseline"]
    vm = [float(r["duration_s"]) for res in runs for r in _provisioning_rows(res) if r["kind"] == "vm"]
    ct = [float(r["duration_s"]) for res in runs for r in _provisioning_rows(res)
          if r["kind"] == "container"]
    bad = sum(not 50.0 <= d <= 150.0 for d in vm) + sum(not d < 1.0 for d in ct)
    ok = bad == 0 and vm and ct
    assert record(4, "provisioning regimes VM in [50,150] s, container < 1 s", ok,
                  f"{len(vm)} VMs {min(vm):.1f}-{max(vm):.1f} s, {len(ct)} containers "
                  f"max {max(ct):.3f} s, {bad} violations")


def test_05_scale_in_to_baseline(baseline):
    ttb = baseline.time_to_baseline
    initial = baseline.scenario.initial_replicas
    sim = baseline.sim
    tracked = [s for s, svc in sim.services.items() if svc.policy.auto_scale]
    # from the baseline tick on every tracked service sits at its initial count
    held = all(s.containers == initial[s.service_id] for s in sim.snapshots
               if s.service_id in tracked and baseline.baseline_tick is not None
               and s.tick >= baseline.baseline_tick)
    ok = ttb is not None and 0 <= ttb <= 40 and held
    assert record(5, "scale-in to initial state within 40 ticks of last departure", ok,
                  f"last departure tick {baseline.last_departure_tick}, "
                  f"baseline tick {baseline.baseline_tick}")


def test_06_self_healing():
    scn = scenario.read("iot-failure")
    (failure,) = scn.failures
    fail_tick = int(-(-failure.at // scn.timing.control_interval))
    passed, notes = 0, []
    for seed in range(50):
        sim, eng = scenario.build(scn, seed)
        sim.run(failure.at - 1e-6)
        before = sim.services["kafka"].live_count
        window = [m for m in sim.metrics if m.service_id == "kafka"]
        # the engine already folded older beats into its window
        window += list(eng.window("kafka").samples)
        quiet = window and all(max(m.util.as_tuple()) < 0.4 for m in window
                               if m.at > failure.at - 60)
        sim.run(scn.duration)
        repair = [d for d in eng.history(service="kafka", reason=Reason.REPLICATION_REPAIR)
                  if d.direction is Direction.OUT and fail_tick <= d.tick <= fail_tick + 1]
        if before == 3 and quiet and repair:
            passed += 1
        else:
            notes.append(seed)
    ok = passed == 50
    assert record(6, "self-healing ReplicationRepair within 1 tick", ok,
                  f"{passed}/50 seeded runs" + (f", failing seeds {notes}" if notes else ""))


def test_07_determinism(baseline, baseline_rerun):
    same = {
        "counts.csv": report.counts_csv(baseline.sim) == report.counts_csv(baseline_rerun.sim),
        "decisions.csv": report.decisions_csv(baseline.engine)
        == report.decisions_csv(baseline_rerun.engine),
        "provisioning.csv": report.provisioning_csv(baseline.sim)
        == report.provisioning_csv(baseline_rerun.sim),
    }
    with tempfile.TemporaryDirectory() as d:
        a = report.write_artifacts(baseline, Path(d) / "a")
        b = report.write_artifacts(baseline_rerun, Path(d) / "b")
        for name in same:
            same[name] = same[name] and a[name].read_bytes() == b[name].read_bytes()
    ok = all(same.values())
    assert record(7, "determinism byte-identical CSVs", ok,
                  ", ".join(f"{k} {'same' if v else 'DIFFERENT'}" for k, v in same.items()))


SCORES = [i / 100 for i in range(101)]
LIVE = range(6)
HEADROOM = (0, 1, 2, 5)
BOUNDS = [(lo, hi) for lo in (0, 1) for hi in (3, 5)]
STEPS = [(1, 1), (2, 3)]
LAST = (None, 9, 7)        # tick 10, cooldown 3: idle, cooling, just free
UPSTREAM = (None, 0, 3, 8)  # None: no replication spec; else target 0.5
TICK, COOLDOWN, TARGET = 10, 3, 0.5


def test_08_branch_table_equivalence():
    cases = mismatches = 0
    first_bad = None
    for auto, (lo, hi), (so, si), last, upstream, live in itertools.product(
            (True, False), BOUNDS, STEPS, LAST, UPSTREAM, LIVE):
        if live > hi:
            continue
        rep = ReplicationSpec("up", TARGET) if upstream is not None else None
        svc = make_service(live=live, auto=auto, lo=lo, hi=hi, step_out=so, step_in=si,
                           cooldown=COOLDOWN, last=last, replication=rep)
        for s, headroom in itertools.product(SCORES, HEADROOM):
            d = decide_micro(svc, s, TICK, headroom, upstream)
            got = (d.direction.value, d.magnitude, d.reason.value)
            want = micro_oracle(dict(auto=auto, lo=lo, hi=hi, step_out=so, step_in=si,
                                     cooldown=COOLDOWN, last=last, tick=TICK, live=live,
                                     score=s, up=0.7, down=0.4, headroom=headroom,
                                     target=TARGET if rep else None, upstream=upstream))
            cases += 1
            if got != want:
                mismatches += 1
                first_bad = first_bad or (auto, lo, hi, so, si, last, upstream, live, s,
                                          headroom, got, want)
    ok = cases >= 50_000 and mismatches == 0
    assert record(8, "decide_micro matches brute-force branch table", ok,
                  f"{cases} cases, {mismatches} mismatches"
                  + (f", first {first_bad}" if first_bad else ""))


def test_09_disabled_services(baseline):
    seen = 0
    bad = 0
    for name in scenario.bundled_names():
        res = baseline if name == "iot-baseline" else report.simulate(name)
        for row in csv.DictReader(io.StringIO(report.decisions_csv(res.engine))):
            if row["id"] == "cassandra":
                seen += 1
                bad += row["direction"] != "None"
    ok = seen > 0 and bad == 0
    assert record(9, "Cassandra never scales in any bundled scenario", ok,
                  f"{seen} records across {len(scenario.bundled_names())} scenarios, {bad} non-None")


INVARIANTS = {
    "weight-sum": [test_model.test_weight_sum_off_by_more_than_tolerance_fails],
    "threshold ordering": [test_model.test_threshold_ordering_property],
    "cooldown spacing": [test_engine.test_cooldown_spacing_property,
                         test_engine.test_no_out_then_in_inside_cooldown],
    "packing conservation": [test_cluster.test_packing_conservation],
    "config round-trip": [test_config.test_micro_round_trip, test_config.test_macro_round_trip],
}


def _max_examples(fn):
    return fn._hypothesis_internal_use_settings.max_examples


def test_10_invariant_suite(tmp_path):
    results = {}
    for name, fns in INVARIANTS.items():
        ok = True
        for fn in fns:
            ok = ok and _max_examples(fn) >= 1000
            try:
                if "tmp_path" in fn.hypothesis.inner_test.__code__.co_varnames:
                    fn(tmp_path)
                else:
                    fn()
            except Exception as e:  # noqa: BLE001 - reported below
                ok = False
                results[name + " error"] = repr(e)[:200]
        results[name] = ok
    ok = all(v is True for k, v in results.items() if not k.endswith("error"))
    assert record(10, "invariant suite (>= 1000 cases each)", ok,
                  ", ".join(f"{k} {'ok' if v is True else v}" for k, v in results.items()))
