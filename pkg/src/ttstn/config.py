"""Cluster config files: parsing, validation, and cluster assembly.

The format is line oriented so diffs and error messages stay readable:

    [cluster]
    baud = 9600
    cycle = 30ms
    sequence = 0,ms            # round ids in cycle order; 'ms' = one
                               # address+data maintenance pair
    registry = ../registry     # datasheet directory, relative to this file

    [node IR1]
    alias = 2                  # omit to start the node unbaptized
    series = 0x0201
    serial = 1
    drift = -0.0005            # clock rate deviation, here -0.05%
    file = 3 records=2 section=rs
    init = 3:0 00000000
    task = measure measure trigger=0:1 file=3 record=0 seed=7
    bind = 3:1 measure         # execute record -> task name

    [rodl 0]
    slots = 9
    entry = send 1 actor=IR1 addr=3:0
    entry = recv 1 actor=M addr=3:0
    entry = exec 6 actor=C addr=3:1

    [faults]
    fault = bitflip at=2:0:4 bit=3
    fault = spurious at=120000ns byte=0x55

Exactly one node carries `role = master`; its descriptor entries may name
it directly, they are folded onto the master actor label during loading.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import bus, schedule as sched, tasks as tasks_mod
from .errors import ConfigError, RangeError, ScheduleError, SlotConflictError, ValidationError
from .gateway import Gateway
from .ifs import (
    CONFIG_FILE, DOC_FILE, STATUS_FILE,
    FIRST_ASSIGNABLE_ALIAS, LAST_ASSIGNABLE_ALIAS,
    InterfaceFileSystem, Section,
)
from .nodes import (
    ManualTrigger, MasterMachine, OwnEntry, PeriodTrigger, ProtocolNode,
    SlaveMachine, SlotTrigger, Task,
)
from .pnp import PhysicalName
from .timing import NS_PER_SEC

_SYSTEM_FILE_RECORDS = {CONFIG_FILE: 64, DOC_FILE: 4, STATUS_FILE: 133}

_DURATION_UNITS = {"ns": 1, "us": 10 ** 3, "ms": 10 ** 6, "s": NS_PER_SEC}


def parse_duration(text: str) -> int:
    """'30ms' / '1.5s' / '500us' / '125000' (bare = ns) -> integer ns."""
    raw = text.strip().lower()
    unit = "ns"
    for suffix in ("ns", "us", "ms", "s"):
        if raw.endswith(suffix):
            unit = suffix
            raw = raw[: -len(suffix)]
            break
    try:
        value = Decimal(raw)
    except InvalidOperation as exc:
        raise ValueError(f"bad duration {text!r}") from exc
    scaled = value * _DURATION_UNITS[unit]
    if scaled != int(scaled):
        raise ValueError(f"duration {text!r} is finer than a nanosecond")
    if scaled < 0:
        raise ValueError(f"duration {text!r} is negative")
    return int(scaled)


def parse_drift(text: str) -> int:
    """Rate deviation as a fraction ('-0.001' = -0.1%) -> parts per billion."""
    try:
        value = Decimal(text.strip())
    except InvalidOperation as exc:
        raise ValueError(f"bad drift {text!r}") from exc
    ppb = value * NS_PER_SEC
    return int(ppb.to_integral_value(rounding="ROUND_HALF_UP"))


@dataclass
class TaskSpec:
    name: str
    builtin: str
    trigger: object
    meta: Dict[str, str] = field(default_factory=dict)


@dataclass
class NodeSpec:
    name: str
    role: str = "slave"
    alias: Optional[int] = None
    series: int = 0
    serial: int = 0
    drift_ppb: int = 0
    files: List[Tuple[int, int, Section]] = field(default_factory=list)
    inits: List[Tuple[int, int, bytes]] = field(default_factory=list)
    tasks: List[TaskSpec] = field(default_factory=list)
    binds: List[Tuple[int, int, str]] = field(default_factory=list)

    @property
    def physical_name(self) -> PhysicalName:
        return PhysicalName(self.series, self.serial)


@dataclass
class ClusterSpec:
    path: str
    baud: int = 0
    cycle_ns: int = 0
    sequence: List[int] = field(default_factory=list)
    registry: Optional[Path] = None
    nodes: List[NodeSpec] = field(default_factory=list)
    rodl_slots: Dict[int, Optional[int]] = field(default_factory=dict)
    rodl_entries: Dict[int, List[sched.RodlEntry]] = field(default_factory=dict)
    faults: List[bus.FaultSpec] = field(default_factory=list)

    @property
    def master(self) -> NodeSpec:
        for node in self.nodes:
            if node.role == "master":
                return node
        raise ValidationError(f"{self.path}: no node has role = master")

    def node(self, name: str) -> NodeSpec:
        for n in self.nodes:
            if n.name == name:
                return n
        raise ValidationError(f"{self.path}: no node named {name!r}")


def _split_kv(parts: List[str], path: str, line: int) -> Dict[str, str]:
    out = {}
    for part in parts:
        key, eq, value = part.partition("=")
        if not eq:
            raise ConfigError(path, line, f"expected key=value, got {part!r}")
        out[key] = value
    return out


def _parse_addr(text: str, path: str, line: int) -> Tuple[int, int]:
    f, sep, r = text.partition(":")
    if not sep:
        raise ConfigError(path, line, f"expected file:record, got {text!r}")
    try:
        return int(f, 0), int(r, 0)
    except ValueError:
        raise ConfigError(path, line, f"bad record address {text!r}") from None


def _parse_int(text: str, path: str, line: int, what: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise ConfigError(path, line, f"bad {what}: {text!r}") from None


def _parse_trigger(text: str, path: str, line: int):
    if text == "manual":
        return ManualTrigger()
    if text.startswith("every:"):
        try:
            return PeriodTrigger(parse_duration(text[len("every:"):]))
        except ValueError as exc:
            raise ConfigError(path, line, str(exc)) from None
    rnd, sep, slot = text.partition(":")
    if not sep:
        raise ConfigError(path, line,
                          f"trigger must be round:slot, every:duration or manual, got {text!r}")
    return SlotTrigger(_parse_int(rnd, path, line, "trigger round"),
                       _parse_int(slot, path, line, "trigger slot"))


_ACTION_KINDS = {
    "send": sched.ActionKind.SEND,
    "recv": sched.ActionKind.RECEIVE,
    "exec": sched.ActionKind.EXECUTE,
}

_FAULT_KINDS = {
    "bitflip": bus.FaultKind.BIT_FLIP,
    "drop": bus.FaultKind.DROP_BYTE,
    "spurious": bus.FaultKind.SPURIOUS_BYTE,
}


def load_spec(path) -> ClusterSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), 0, f"cannot read config: {exc}") from exc
    spec = ClusterSpec(path=str(path))
    section: Optional[str] = None
    node: Optional[NodeSpec] = None
    rodl_id: Optional[int] = None
    seen_nodes = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(spec.path, lineno, f"unterminated section header {stripped!r}")
            header = stripped[1:-1].strip()
            parts = header.split()
            if parts[0] == "cluster" and len(parts) == 1:
                section = "cluster"
            elif parts[0] == "node" and len(parts) == 2:
                section = "node"
                if parts[1] in seen_nodes:
                    raise ConfigError(spec.path, lineno, f"duplicate node {parts[1]!r}")
                seen_nodes.add(parts[1])
                node = NodeSpec(name=parts[1])
                spec.nodes.append(node)
            elif parts[0] == "rodl" and len(parts) == 2:
                section = "rodl"
                rodl_id = _parse_int(parts[1], spec.path, lineno, "round id")
                if rodl_id not in sched.MP_ROUND_IDS:
                    raise ConfigError(spec.path, lineno,
                                      f"round {rodl_id} not configurable; data rounds are 0..5")
                if rodl_id in spec.rodl_entries:
                    raise ConfigError(spec.path, lineno, f"duplicate [rodl {rodl_id}]")
                spec.rodl_entries[rodl_id] = []
                spec.rodl_slots[rodl_id] = None
            elif parts[0] == "faults" and len(parts) == 1:
                section = "faults"
            else:
                raise ConfigError(spec.path, lineno, f"unknown section {header!r}")
            continue

        key, eq, value = (p.strip() for p in stripped.partition("="))
        if not eq:
            raise ConfigError(spec.path, lineno, f"expected key = value, got {stripped!r}")
        if section == "cluster":
            _cluster_key(spec, key, value, lineno, path.parent)
        elif section == "node":
            _node_key(spec, node, key, value, lineno)
        elif section == "rodl":
            _rodl_key(spec, rodl_id, key, value, lineno)
        elif section == "faults":
            _fault_key(spec, key, value, lineno)
        else:
            raise ConfigError(spec.path, lineno, "line outside any section")

    _finalize(spec)
    return spec


def _cluster_key(spec: ClusterSpec, key: str, value: str, line: int, base: Path) -> None:
    if key == "baud":
        spec.baud = _parse_int(value, spec.path, line, "baud")
        if spec.baud <= 0:
            raise ConfigError(spec.path, line, "baud must be positive")
    elif key == "cycle":
        try:
            spec.cycle_ns = parse_duration(value)
        except ValueError as exc:
            raise ConfigError(spec.path, line, str(exc)) from None
        if spec.cycle_ns <= 0:
            raise ConfigError(spec.path, line, "cycle must be positive")
    elif key == "sequence":
        seq: List[int] = []
        for token in value.split(","):
            token = token.strip()
            if token == "ms":
                seq.extend((sched.MS_ADDRESS_ROUND, sched.MS_DATA_ROUND))
            else:
                seq.append(_parse_int(token, spec.path, line, "sequence round"))
        spec.sequence = seq
    elif key == "registry":
        spec.registry = (base / value).resolve()
    else:
        raise ConfigError(spec.path, line, f"unknown cluster key {key!r}")


def _node_key(spec: ClusterSpec, node: NodeSpec, key: str, value: str, line: int) -> None:
    if key == "role":
        if value not in ("master", "slave"):
            raise ConfigError(spec.path, line, f"role must be master or slave, got {value!r}")
        node.role = value
    elif key == "alias":
        alias = _parse_int(value, spec.path, line, "alias")
        if not FIRST_ASSIGNABLE_ALIAS <= alias <= LAST_ASSIGNABLE_ALIAS:
            raise ConfigError(spec.path, line, f"alias {alias} outside 1..250")
        node.alias = alias
    elif key == "series":
        node.series = _parse_int(value, spec.path, line, "series")
    elif key == "serial":
        node.serial = _parse_int(value, spec.path, line, "serial")
    elif key == "drift":
        try:
            node.drift_ppb = parse_drift(value)
        except ValueError as exc:
            raise ConfigError(spec.path, line, str(exc)) from None
    elif key == "file":
        parts = value.split()
        number = _parse_int(parts[0], spec.path, line, "file number")
        kv = _split_kv(parts[1:], spec.path, line)
        try:
            section = Section(kv.get("section", "rs"))
        except ValueError:
            raise ConfigError(spec.path, line,
                              f"section must be rs, dm or cp, got {kv.get('section')!r}") from None
        records = _parse_int(kv.get("records", "1"), spec.path, line, "record count")
        node.files.append((number, records, section))
    elif key == "init":
        parts = value.split()
        if len(parts) != 2:
            raise ConfigError(spec.path, line, "init wants: file:record hex8")
        file, record = _parse_addr(parts[0], spec.path, line)
        try:
            data = bytes.fromhex(parts[1])
        except ValueError:
            raise ConfigError(spec.path, line, f"bad hex payload {parts[1]!r}") from None
        if len(data) != 4:
            raise ConfigError(spec.path, line, "init payload must be exactly 4 bytes")
        node.inits.append((file, record, data))
    elif key == "task":
        parts = value.split()
        if len(parts) < 3:
            raise ConfigError(spec.path, line,
                              "task wants: name builtin trigger=... [key=value ...]")
        kv = _split_kv(parts[2:], spec.path, line)
        if "trigger" not in kv:
            raise ConfigError(spec.path, line, "task needs a trigger= argument")
        trigger = _parse_trigger(kv.pop("trigger"), spec.path, line)
        if parts[1] not in tasks_mod.BUILTINS:
            raise ConfigError(spec.path, line, f"unknown builtin task {parts[1]!r}")
        node.tasks.append(TaskSpec(parts[0], parts[1], trigger, kv))
    elif key == "bind":
        parts = value.split()
        if len(parts) != 2:
            raise ConfigError(spec.path, line, "bind wants: file:record taskname")
        file, record = _parse_addr(parts[0], spec.path, line)
        node.binds.append((file, record, parts[1]))
    else:
        raise ConfigError(spec.path, line, f"unknown node key {key!r}")


def _rodl_key(spec: ClusterSpec, rodl_id: int, key: str, value: str, line: int) -> None:
    if key == "slots":
        spec.rodl_slots[rodl_id] = _parse_int(value, spec.path, line, "slot count")
    elif key == "entry":
        parts = value.split()
        if len(parts) < 2 or parts[0] not in _ACTION_KINDS:
            raise ConfigError(spec.path, line,
                              "entry wants: send|recv|exec SLOT [len=N] actor=NAME addr=F:R")
        slot = _parse_int(parts[1], spec.path, line, "slot")
        kv = _split_kv(parts[2:], spec.path, line)
        missing = {"actor", "addr"} - kv.keys()
        if missing:
            raise ConfigError(spec.path, line, f"entry is missing {sorted(missing)}")
        file, record = _parse_addr(kv["addr"], spec.path, line)
        length = _parse_int(kv.get("len", "1"), spec.path, line, "entry length")
        try:
            action = sched.SlotAction(_ACTION_KINDS[parts[0]],
                                      sched.RecordRef(file, record), length)
            entry = sched.RodlEntry(slot, kv["actor"], action)
        except (RangeError, ScheduleError) as exc:
            raise ConfigError(spec.path, line, str(exc)) from None
        spec.rodl_entries[rodl_id].append(entry)
    else:
        raise ConfigError(spec.path, line, f"unknown rodl key {key!r}")


def _fault_key(spec: ClusterSpec, key: str, value: str, line: int) -> None:
    if key != "fault":
        raise ConfigError(spec.path, line, f"unknown faults key {key!r}")
    parts = value.split()
    if not parts or parts[0] not in _FAULT_KINDS:
        raise ConfigError(spec.path, line,
                          "fault wants: bitflip|drop|spurious at=... [bit=N] [byte=0xNN]")
    kv = _split_kv(parts[1:], spec.path, line)
    if "at" not in kv:
        raise ConfigError(spec.path, line, "fault needs an at= position")
    at_raw = kv["at"]
    if at_raw.count(":") == 2:
        c, r, s = at_raw.split(":")
        at: object = (_parse_int(c, spec.path, line, "fault cycle"),
                      _parse_int(r, spec.path, line, "fault round"),
                      _parse_int(s, spec.path, line, "fault slot"))
    else:
        try:
            at = parse_duration(at_raw)
        except ValueError as exc:
            raise ConfigError(spec.path, line, str(exc)) from None
    fault = bus.FaultSpec(
        kind=_FAULT_KINDS[parts[0]],
        at=at,
        bit=_parse_int(kv["bit"], spec.path, line, "bit index") if "bit" in kv else None,
        byte=_parse_int(kv["byte"], spec.path, line, "byte value") if "byte" in kv else None,
    )
    try:
        fault.validate()
    except RangeError as exc:
        raise ConfigError(spec.path, line, str(exc)) from None
    spec.faults.append(fault)


def _finalize(spec: ClusterSpec) -> None:
    if spec.baud <= 0:
        raise ConfigError(spec.path, 0, "cluster is missing a baud rate")
    if spec.cycle_ns <= 0:
        raise ConfigError(spec.path, 0, "cluster is missing a cycle duration")
    if not spec.sequence:
        raise ConfigError(spec.path, 0, "cluster is missing a round sequence")
    masters = [n for n in spec.nodes if n.role == "master"]
    if len(masters) != 1:
        raise ConfigError(spec.path, 0,
                          f"exactly one node must have role = master, found {len(masters)}")
    aliases = [n.alias for n in spec.nodes if n.alias is not None]
    if len(aliases) != len(set(aliases)):
        raise ConfigError(spec.path, 0, "duplicate aliases between nodes")
    names = {(n.series, n.serial) for n in spec.nodes if n.role == "slave"}
    if len(names) != len([n for n in spec.nodes if n.role == "slave"]):
        raise ConfigError(spec.path, 0, "two slaves share a physical name")
    # Fold the master's own entries onto its actor label.
    master_name = masters[0].name
    for rid, entries in spec.rodl_entries.items():
        spec.rodl_entries[rid] = [
            sched.RodlEntry(e.slot, sched.MASTER_ACTOR, e.action)
            if e.actor == master_name else e
            for e in entries]


# -- validation ------------------------------------------------------------

def build_rodls(spec: ClusterSpec) -> Dict[int, sched.Rodl]:
    rodls = {}
    for rid, entries in sorted(spec.rodl_entries.items()):
        rodls[rid] = sched.build_rodl(rid, entries, spec.rodl_slots.get(rid))
    return rodls


def _node_file_map(spec: ClusterSpec) -> Dict[str, Dict[int, int]]:
    out = {}
    for node in spec.nodes:
        files = dict(_SYSTEM_FILE_RECORDS)
        for number, records, _section in node.files:
            files[number] = records
        key = sched.MASTER_ACTOR if node.role == "master" else node.name
        out[key] = files
    return out


def validate_spec(spec: ClusterSpec) -> sched.ValidationReport:
    report = sched.ValidationReport()
    try:
        cluster_sched = sched.ClusterSchedule(spec.sequence, spec.cycle_ns)
    except ScheduleError as exc:
        report.add("error", "sequence", str(exc))
        return report
    try:
        rodls = build_rodls(spec)
    except (SlotConflictError, ScheduleError, RangeError) as exc:
        report.add("error", "round", str(exc))
        return report

    windows = {}
    for node in spec.nodes:
        for t in node.tasks:
            if isinstance(t.trigger, SlotTrigger) and "width" in t.meta:
                windows.setdefault(f"{node.name}.{t.name}", []).append(
                    (t.trigger.round_id, t.trigger.slot, int(t.meta["width"])))
    sub = sched.validate_schedule(
        rodls, cluster_sched, spec.baud, _node_file_map(spec),
        node_aliases={n.name: n.alias for n in spec.nodes},
        task_windows=windows or None)
    report.findings.extend(sub.findings)

    for node in spec.nodes:
        task_names = {t.name for t in node.tasks}
        if len(task_names) != len(node.tasks):
            report.add("error", "task", f"{node.name}: duplicate task names")
        for file, record, target in node.binds:
            if target not in task_names:
                report.add("error", "bind",
                           f"{node.name}: bind {file}:{record} references "
                           f"unknown task {target!r}")
        for t in node.tasks:
            if isinstance(t.trigger, SlotTrigger) and t.trigger.round_id not in rodls:
                report.add("error", "task",
                           f"{node.name}.{t.name}: trigger round {t.trigger.round_id} "
                           "has no descriptor")
    return report


# -- assembly ---------------------------------------------------------------

@dataclass
class Cluster:
    spec: ClusterSpec
    sim: bus.Simulator
    schedule: sched.ClusterSchedule
    rodls: Dict[int, sched.Rodl]
    master: MasterMachine
    slaves: Dict[str, SlaveMachine]
    gateway: Gateway

    def node(self, name: str) -> ProtocolNode:
        if name == self.spec.master.name:
            return self.master
        return self.slaves[name]

    def run_cycles(self, count: int):
        return self.sim.run_cycles(count)


def _node_ifs(node_spec: NodeSpec) -> InterfaceFileSystem:
    ifs = InterfaceFileSystem.standard()
    for number, records, section in node_spec.files:
        ifs.add_file(number, records, section)
    for file, record, data in node_spec.inits:
        ifs.push_record(file, record, data)
    return ifs


def _bind_node_behavior(node: ProtocolNode, node_spec: NodeSpec) -> None:
    by_name = {}
    for ts in node_spec.tasks:
        meta = dict(ts.meta)
        body = tasks_mod.make_task_body(ts.builtin, meta)
        task = node.bind_task(ts.name, ts.trigger, body, meta)
        by_name[ts.name] = task
    for file, record, target in node_spec.binds:
        node.bind_execute_task(file, record, by_name[target])


def build_cluster(spec: ClusterSpec) -> Cluster:
    report = validate_spec(spec)
    if not report.ok:
        raise ValidationError(
            f"{spec.path} failed validation:\n" +
            "\n".join(str(f) for f in report.errors()))

    cluster_sched = sched.ClusterSchedule(spec.sequence, spec.cycle_ns)
    rodls = build_rodls(spec)
    sim = bus.Simulator(spec.baud)

    master_spec = spec.master
    master = MasterMachine(master_spec.name, cluster_sched, rodls,
                           ifs=_node_ifs(master_spec))
    _bind_node_behavior(master, master_spec)
    sim.add_node(master)

    slaves: Dict[str, SlaveMachine] = {}
    for node_spec in spec.nodes:
        if node_spec.role == "master":
            continue
        slave = SlaveMachine(node_spec.name, node_spec.physical_name.value,
                             alias=node_spec.alias, drift_ppb=node_spec.drift_ppb,
                             ifs=_node_ifs(node_spec))
        _bind_node_behavior(slave, node_spec)
        if node_spec.alias is not None:
            master.register_alias(node_spec.alias, node_spec.name)
            # Preconfigured nodes know the whole schedule shape, not just
            # the rounds they act in, so they never have to gap-hunt.
            for rid, rodl in rodls.items():
                own = [OwnEntry(e.action.kind, e.slot, e.action.length_slots,
                                e.action.address.file, e.action.address.record)
                       for e in rodl.entries_for(node_spec.name)]
                slave.configure_round(rid, own, rodl.round_length_slots)
        slaves[node_spec.name] = slave
        sim.add_node(slave)

    for fault in spec.faults:
        sim.inject_fault(fault)

    sim.start()
    return Cluster(spec, sim, cluster_sched, rodls, master, slaves,
                   Gateway(master, sim))
