"""Discovery and the two INI policy files (``microservice.ini``, ``macroservice.ini``).

Grammar::

    # comment
    [section-id]
    key = value

Sections are service ids in the micro file and pool ids in the macro file.
Booleans accept true/false, yes/no, on/off, 1/0 in any case.
``containers_per_vm`` is a comma-separated list of ``service:count`` pairs.
Files are written as UTF-8 with LF line endings, via a temp file and rename.
"""

from __future__ import annotations

import math
import os
import tempfile
import warnings
from pathlib import Path
from typing import Iterable, Optional

from .cluster import EPS
from .model import (
    InvalidPolicy,
    MacroPolicy,
    ReplicationSpec,
    ServicePolicy,
    ValidationError,
    Weights,
)
from .topology import TopologySpec

MICRO_HEADER = "# microservice.ini: per-service scaling policy\n"
MACRO_HEADER = "# macroservice.ini: per-pool VM scaling policy\n"

MICRO_KEYS = (
    "auto_scale", "alpha", "beta", "gamma", "lambda", "threshold_up", "threshold_down",
    "step_out", "step_in", "cooldown", "min_replicas", "max_replicas",
    "rep_upstream", "rep_target_ratio",
)
MACRO_KEYS = (
    "auto_scale", "vm_flavor", "containers_per_vm", "min_vms", "max_vms", "cooldown",
    "prov_delay_lo_s", "prov_delay_hi_s",
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, path: Optional[str] = None):
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{where}: {message}")
        self.line = line
        self.path = path


class ConfigWarning(UserWarning):
    pass


# -- reading ----------------------------------------------------------------


def parse_ini(text: str, path: Optional[str] = None) -> list:
    """Split INI text into ``(section, lineno, {key: (value, lineno)})`` triples."""
    sections: list = []
    seen: set = set()
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ParseError(f"malformed section header {raw!r}", lineno, path)
            name = line[1:-1].strip()
            if not name:
                raise ParseError("empty section name", lineno, path)
            if name in seen:
                raise ParseError(f"duplicate section [{name}]", lineno, path)
            seen.add(name)
            current = (name, lineno, {})
            sections.append(current)
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", lineno, path)
        if current is None:
            raise ParseError("key outside of any section", lineno, path)
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ParseError("empty key", lineno, path)
        if key in current[2]:
            raise ParseError(f"duplicate key {key!r} in [{current[0]}]", lineno, path)
        current[2][key] = (value.strip(), lineno)
    return sections


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


class _Section:
    """Typed accessors over one parsed section, reporting the offending line."""

    def __init__(self, name, lineno, items, path, known):
        self.name = name
        self.lineno = lineno
        self.items = items
        self.path = path
        for key, (_, ln) in items.items():
            if key not in known:
                warnings.warn(f"{path or '<ini>'}:{ln}: unknown key {key!r} in [{name}] ignored",
                              ConfigWarning, stacklevel=4)

    def has(self, key):
        return key in self.items and self.items[key][0] != ""

    def _get(self, key, conv, default, what):
        if not self.has(key):
            return default
        value, ln = self.items[key]
        try:
            return conv(value)
        except ValueError:
            raise ParseError(f"{key} = {value!r} is not {what}", ln, self.path) from None

    def float(self, key, default):
        def conv(v):
            x = float(v)
            if not math.isfinite(x):
                raise ValueError
            return x
        return self._get(key, conv, default, "a finite number")

    def int(self, key, default):
        return self._get(key, int, default, "an integer")

    def str(self, key, default):
        return self._get(key, str, default, "a string")

    def bool(self, key, default):
        def conv(v):
            v = v.lower()
            if v in _TRUE:
                return True
            if v in _FALSE:
                return False
            raise ValueError
        return self._get(key, conv, default, "a boolean")

    def capmap(self, key):
        def conv(v):
            out = {}
            for part in v.split(","):
                sid, sep, n = part.partition(":")
                if not sep or not sid.strip():
                    raise ValueError
                out[sid.strip()] = int(n)
            return out
        return self._get(key, conv, {}, "a list of service:count pairs")


def _micro_from(sec: _Section) -> ServicePolicy:
    d = ServicePolicy(sec.name)
    w = d.weights
    weights = Weights.normalized(
        sec.float("alpha", w.alpha),
        sec.float("beta", w.beta),
        sec.float("gamma", w.gamma),
        sec.float("lambda", w.lambda_),
    )
    upstream = sec.str("rep_upstream", None)
    ratio = sec.float("rep_target_ratio", None)
    if (upstream is None) != (ratio is None):
        raise InvalidPolicy(f"[{sec.name}] rep_upstream and rep_target_ratio go together")
    replication = ReplicationSpec(upstream, ratio) if upstream is not None else None
    return ServicePolicy(
        service_id=sec.name,
        auto_scale=sec.bool("auto_scale", d.auto_scale),
        weights=weights,
        threshold_up=sec.float("threshold_up", d.threshold_up),
        threshold_down=sec.float("threshold_down", d.threshold_down),
        step_out=sec.int("step_out", d.step_out),
        step_in=sec.int("step_in", d.step_in),
        cooldown=sec.int("cooldown", d.cooldown),
        min_replicas=sec.int("min_replicas", d.min_replicas),
        max_replicas=sec.int("max_replicas", d.max_replicas),
        replication=replication,
    )


def _macro_from(sec: _Section) -> MacroPolicy:
    if not sec.has("vm_flavor"):
        raise InvalidPolicy(f"[{sec.name}] vm_flavor is required")
    d = MacroPolicy(sec.name, "")
    return MacroPolicy(
        pool_id=sec.name,
        vm_flavor=sec.str("vm_flavor", ""),
        auto_scale=sec.bool("auto_scale", d.auto_scale),
        containers_per_vm=sec.capmap("containers_per_vm"),
        min_vms=sec.int("min_vms", d.min_vms),
        max_vms=sec.int("max_vms", d.max_vms),
        cooldown=sec.int("cooldown", d.cooldown),
        provisioning_delay=(
            sec.float("prov_delay_lo_s", d.provisioning_delay[0]),
            sec.float("prov_delay_hi_s", d.provisioning_delay[1]),
        ),
    )


def guess_kind(sections) -> str:
    macro_only = set(MACRO_KEYS) - set(MICRO_KEYS)
    for _, _, items in sections:
        if macro_only & set(items):
            return "macro"
    return "micro"


def load_collecting(path, kind: Optional[str] = None) -> tuple:
    """Parse a policy file, gathering per-section problems instead of raising.

    Returns ``(policies, problems)``. Malformed lines still raise ParseError
    since nothing after them can be trusted.
    """
    path = str(path)
    text = Path(path).read_text(encoding="utf-8")
    sections = parse_ini(text, path)
    kind = kind or ("macro" if "macro" in Path(path).name else guess_kind(sections))
    if kind not in ("micro", "macro"):
        raise ValueError(f"unknown policy file kind {kind!r}")
    known, build = (MICRO_KEYS, _micro_from) if kind == "micro" else (MACRO_KEYS, _macro_from)
    policies, problems = [], []
    for name, lineno, items in sections:
        try:
            policies.append(build(_Section(name, lineno, items, path, known)))
        except ValidationError as e:
            problems.append(e)
    return policies, problems


def load(path, kind: Optional[str] = None) -> list:
    """Load ServicePolicy (micro) or MacroPolicy (macro) objects from ``path``.

    ``kind`` is inferred from the file name or its keys when omitted.
    """
    policies, problems = load_collecting(path, kind)
    if problems:
        raise problems[0]
    return policies


# -- writing -------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def render_micro(policies: Iterable[ServicePolicy]) -> str:
    out = [MICRO_HEADER]
    for p in policies:
        w = p.weights
        rows = [
            ("auto_scale", p.auto_scale), ("alpha", w.alpha), ("beta", w.beta),
            ("gamma", w.gamma), ("lambda", w.lambda_), ("threshold_up", p.threshold_up),
            ("threshold_down", p.threshold_down), ("step_out", p.step_out),
            ("step_in", p.step_in), ("cooldown", p.cooldown),
            ("min_replicas", p.min_replicas), ("max_replicas", p.max_replicas),
        ]
        if p.replication is not None:
            rows += [("rep_upstream", p.replication.upstream_service),
                     ("rep_target_ratio", float(p.replication.target_ratio))]
        out.append(f"\n[{p.service_id}]\n")
        out.extend(f"{k} = {_fmt(v)}\n" for k, v in rows)
    return "".join(out)


def render_macro(policies: Iterable[MacroPolicy]) -> str:
    out = [MACRO_HEADER]
    for p in policies:
        caps = ", ".join(f"{s}:{n}" for s, n in p.containers_per_vm.items())
        rows = [
            ("auto_scale", p.auto_scale), ("vm_flavor", p.vm_flavor),
            ("containers_per_vm", caps), ("min_vms", p.min_vms), ("max_vms", p.max_vms),
            ("cooldown", p.cooldown),
            ("prov_delay_lo_s", float(p.provisioning_delay[0])),
            ("prov_delay_hi_s", float(p.provisioning_delay[1])),
        ]
        out.append(f"\n[{p.pool_id}]\n")
        out.extend(f"{k} = {_fmt(v)}\n" for k, v in rows)
    return "".join(out)


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write(path, policies, kind: Optional[str] = None) -> None:
    """Write policies to ``path``.

    The kind follows the policy type; for an empty list it falls back to the
    file name, as in :func:`load`.
    """
    policies = list(policies)
    if kind is None:
        if any(isinstance(p, MacroPolicy) for p in policies):
            kind = "macro"
        elif policies:
            kind = "micro"
        else:
            kind = "macro" if "macro" in Path(path).name else "micro"
    render = render_macro if kind == "macro" else render_micro
    want = MacroPolicy if kind == "macro" else ServicePolicy
    if not all(isinstance(p, want) for p in policies):
        raise TypeError("cannot mix service and pool policies in one file")
    atomic_write(path, render(policies))


# -- discovery --------------------------------------------------------------------


def default_containers_per_vm(flavor, ctype) -> int:
    """How many containers of ``ctype`` one VM of ``flavor`` holds by CPU quota and memory."""
    by_cpu = math.floor(1.0 / ctype.cpu_quota + EPS)
    by_mem = math.floor(flavor.mem_capacity / ctype.mem + EPS)
    return max(1, min(by_cpu, by_mem))


def discover(topology: TopologySpec) -> tuple:
    """Default policies for every service and pool, scaling disabled throughout."""
    micro = [ServicePolicy(s.service_id) for s in topology.services.values()]
    macro = []
    for p in topology.pools.values():
        flavor = topology.flavors[p.flavor]
        caps = {
            s.service_id: default_containers_per_vm(flavor, topology.container_types[s.container_type])
            for s in topology.services_in(p.pool_id)
        }
        macro.append(MacroPolicy(p.pool_id, p.flavor, containers_per_vm=caps))
    return micro, macro


def write_discovered(topology: TopologySpec, out_dir) -> tuple:
    micro, macro = discover(topology)
    out_dir = Path(out_dir)
    micro_path, macro_path = out_dir / "microservice.ini", out_dir / "macroservice.ini"
    atomic_write(micro_path, render_micro(micro))
    atomic_write(macro_path, render_macro(macro))
    return micro_path, macro_path
