"""
Discovering a topology and writing its policy files
===================================================

Discovery writes one section per service and per pool, with scaling
turned off. The files are meant to be edited by hand afterwards; here we
switch one service on and write the file back.
"""

import dataclasses
import tempfile
from pathlib import Path

from stackscale import config
from stackscale.scenario import resolve
from stackscale.topology import load_topology

topo = load_topology(resolve("iot-baseline").parent / "topology.toml")
out = Path(tempfile.mkdtemp())
micro_path, macro_path = config.write_discovered(topo, out)
print(macro_path.read_text())

policies = config.load(micro_path)
policies = [dataclasses.replace(p, auto_scale=True) if p.service_id == "kafka" else p
            for p in policies]
config.write(micro_path, policies)
print([(p.service_id, p.auto_scale) for p in config.load(micro_path)])
