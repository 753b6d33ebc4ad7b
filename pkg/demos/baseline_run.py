"""
Scaling out to the capacity limit and back
==========================================

Runs the bundled ``iot-baseline`` scenario: sensors arrive for about 90
minutes, then leave. We print a coarse timeline of container and VM
counts for the two auto-scaled services.
"""

from stackscale import simulate

result = simulate("iot-baseline")
sim = result.sim

# counts are recorded once per tick, for every service
rows = {}
for s in sim.snapshots:
    rows.setdefault(s.tick, {})[s.service_id] = (s.containers, s.vms)

print("tick  sensors  kafka(ctr/vm)  edge(ctr/vm)")
for tick in sorted(rows)[::10]:
    r = rows[tick]
    print(f"{tick:4d}  {r['sensors'][0]:7d}  {r['kafka'][0]:6d}/{r['kafka'][1]:<6d}"
          f"  {r['edge-processor'][0]:5d}/{r['edge-processor'][1]}")

print()
print("peaks:", {k: v for k, v in result.peaks.items() if k in ("kafka", "edge-processor")})
print("ticks from last departure back to the initial state:", result.time_to_baseline)

# VM provisioning takes minutes, containers well under a second
vm = [p.duration_s for p in sim.provisioning if p.kind == "vm"]
ct = [p.duration_s for p in sim.provisioning if p.kind == "container"]
print(f"VM provisioning {min(vm):.0f}-{max(vm):.0f} s over {len(vm)} VMs")
print(f"container provisioning up to {max(ct) * 1000:.0f} ms over {len(ct)} containers")
