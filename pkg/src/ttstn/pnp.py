"""Plug-and-play: node enumeration, alias assignment, datasheets.

New nodes carry only a 64-bit physical name (series + serial). The
master finds them by binary search over the name space, one bit per
maintenance transaction: a broadcast probe at depth k asks "does any
unnamed node on my current path have bit k-1 equal to the trial value?".
A reply resolves the bit to the trial value, silence to its complement,
so every identification costs exactly 64 bit-probes regardless of the
name. Nodes never store their own datasheet; the master fetches it from
a registry directory keyed by the series number and downloads the
cluster configuration part over maintenance writes.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import schedule as sched, wire
from .errors import (
    AssignmentError,
    CapacityError,
    DatasheetError,
    PartialConfigError,
    TtstnError,
    UnknownSeriesError,
    ValidationError,
)
from .ifs import (
    BROADCAST_ALIAS,
    CONFIG_COMMIT_RECORD,
    CONFIG_FILE,
    CONFIG_RODL_BASE_RECORD,
    DOC_FILE,
    DOC_SERIES_RECORD,
    FIRST_ASSIGNABLE_ALIAS,
    LAST_ASSIGNABLE_ALIAS,
    MAX_FILES,
    MAX_RECORDS,
    RECORD_SIZE,
    STATUS_ASSIGN_RECORD,
    STATUS_FILE,
    STATUS_NAME_SERIAL_RECORD,
    STATUS_NAME_SERIES_RECORD,
    Section,
    ZERO_RECORD,
)
from .nodes import NAME_BITS, MS_STATUS_OK, probe_record
from .timing import NS_PER_SEC  # noqa: F401  (re-exported for CLI duration math)

MAX_DESCENTS = 1000  # safety bound; the alias pool alone caps useful descents at 250


@dataclass(frozen=True)
class PhysicalName:
    """Factory-assigned 64-bit identity: type series plus instance serial."""

    series: int
    serial: int

    def __post_init__(self):
        if not 0 <= self.series < (1 << 32):
            raise ValidationError(f"series {self.series:#x} does not fit 32 bits")
        if not 0 <= self.serial < (1 << 32):
            raise ValidationError(f"serial {self.serial:#x} does not fit 32 bits")

    @property
    def value(self) -> int:
        return (self.series << 32) | self.serial

    @classmethod
    def from_value(cls, value: int) -> "PhysicalName":
        return cls((value >> 32) & 0xFFFFFFFF, value & 0xFFFFFFFF)

    def bit(self, index: int) -> int:
        """Name bit by position, most significant first (0..63)."""
        return (self.value >> (NAME_BITS - 1 - index)) & 1

    def __str__(self) -> str:
        return f"{self.series:08x}:{self.serial:08x}"


def registry_filename(series: int) -> str:
    return f"{series:08x}.xml"


@dataclass(frozen=True)
class DeclaredFile:
    name: str
    number: int
    records: int
    section: Section


@dataclass(frozen=True)
class DatasheetEntry:
    round_id: int
    slot: int
    action: sched.ActionKind
    file: int
    record: int
    length: int = 1


@dataclass
class Datasheet:
    """Off-node self-description: what the node is and which slots it works."""

    series: int
    description: str
    files: List[DeclaredFile] = field(default_factory=list)
    entries: List[DatasheetEntry] = field(default_factory=list)

    def validate(self) -> None:
        declared: Dict[int, int] = {}
        for f in self.files:
            if not 0 <= f.number < MAX_FILES:
                raise ValidationError(f"declared file {f.number} outside 0..{MAX_FILES - 1}")
            if not 1 <= f.records <= MAX_RECORDS:
                raise ValidationError(f"file {f.number} declares {f.records} records")
            if f.number in declared:
                raise ValidationError(f"file {f.number} declared twice")
            declared[f.number] = f.records
        # System files are implicit on every node.
        declared.setdefault(CONFIG_FILE, 64)
        declared.setdefault(DOC_FILE, 4)
        declared.setdefault(STATUS_FILE, 133)
        for e in self.entries:
            if e.round_id not in sched.MP_ROUND_IDS:
                raise ValidationError(f"rodl fragment targets round {e.round_id}")
            if not 0 <= e.file < MAX_FILES:
                raise ValidationError(f"rodl fragment references file {e.file}")
            if e.file not in declared:
                raise ValidationError(f"rodl fragment references undeclared file {e.file}")
            if not 0 <= e.record < declared[e.file]:
                raise ValidationError(
                    f"rodl fragment references record {e.file}:{e.record} beyond file size")
            if e.slot < 1:
                raise ValidationError("payload slots start at 1")
            if not 1 <= e.length <= RECORD_SIZE:
                raise ValidationError(f"entry length {e.length} outside 1..{RECORD_SIZE}")


_ACTIONS = {
    "send": sched.ActionKind.SEND,
    "recv": sched.ActionKind.RECEIVE,
    "receive": sched.ActionKind.RECEIVE,
    "exec": sched.ActionKind.EXECUTE,
    "execute": sched.ActionKind.EXECUTE,
}


def _attr(elem: ET.Element, name: str, where: str) -> str:
    value = elem.get(name)
    if value is None:
        raise DatasheetError(f"{where}: <{elem.tag}> is missing attribute '{name}'")
    return value


def _int_attr(elem: ET.Element, name: str, where: str) -> int:
    raw = _attr(elem, name, where)
    try:
        return int(raw, 0)
    except ValueError as exc:
        raise DatasheetError(f"{where}: attribute {name}='{raw}' is not a number") from exc


def parse_datasheet(text: str, where: str = "<string>") -> Datasheet:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise DatasheetError(f"{where}:{line}:{col}: {exc.msg}") from exc
    if root.tag != "datasheet":
        raise DatasheetError(f"{where}: root element is <{root.tag}>, expected <datasheet>")
    series = _int_attr(root, "series", where)
    desc_elem = root.find("description")
    description = (desc_elem.text or "").strip() if desc_elem is not None else ""
    files = []
    files_elem = root.find("files")
    if files_elem is not None:
        for f in files_elem.findall("file"):
            section_raw = _attr(f, "section", where).lower()
            try:
                section = Section(section_raw)
            except ValueError as exc:
                raise DatasheetError(f"{where}: unknown section '{section_raw}'") from exc
            files.append(DeclaredFile(
                name=_attr(f, "name", where),
                number=_int_attr(f, "number", where),
                records=_int_attr(f, "records", where),
                section=section,
            ))
    entries = []
    config_elem = root.find("clusterConfig")
    if config_elem is not None:
        for r in config_elem.findall("rodl"):
            actor = r.get("actor", "self")
            if actor != "self":
                raise DatasheetError(
                    f"{where}: rodl fragment actor '{actor}' unsupported; only 'self'")
            action_raw = _attr(r, "action", where).lower()
            if action_raw not in _ACTIONS:
                raise DatasheetError(f"{where}: unknown rodl action '{action_raw}'")
            entries.append(DatasheetEntry(
                round_id=_int_attr(r, "round", where),
                slot=_int_attr(r, "slot", where),
                action=_ACTIONS[action_raw],
                file=_int_attr(r, "file", where),
                record=_int_attr(r, "record", where),
                length=int(r.get("len", "1"), 0),
            ))
    sheet = Datasheet(series, description, files, entries)
    sheet.validate()
    return sheet


def fetch_datasheet(registry: Path | str, series: int) -> Datasheet:
    path = Path(registry) / registry_filename(series)
    if not path.is_file():
        raise UnknownSeriesError(
            f"series {series:#010x}: no datasheet {path.name} in {registry}")
    sheet = parse_datasheet(path.read_text(encoding="utf-8"), where=str(path))
    if sheet.series != series:
        raise DatasheetError(
            f"{path}: datasheet declares series {sheet.series:#010x}, "
            f"filename implies {series:#010x}")
    return sheet


# -- driving maintenance transactions to completion ---------------------------

def drive(sim, completion, max_cycles: int = 32):
    """Advance whole cycles until the transaction completes."""
    for _ in range(max_cycles):
        if completion.done:
            return completion
        sim.run_cycles(1)
    if not completion.done:
        raise TtstnError("maintenance transaction never completed; "
                         "does the schedule include maintenance rounds?")
    return completion


def probe(master, sim, prefix_bits: int, trial_bit: int = 0) -> bool:
    """One enumeration probe; True when at least one candidate replied.

    The wire carries only the depth and the trial bit. The prefix value
    is implicit: candidates track membership of the master's search path
    locally, so probes are only meaningful as part of a descent that
    started with a depth-0 reset.
    """
    comp = master.enqueue_ms(wire.MsAction.EXECUTE, BROADCAST_ALIAS,
                             STATUS_FILE, probe_record(prefix_bits, trial_bit))
    drive(sim, comp)
    return bool(comp.probe_response)


def lowest_free_alias(master) -> int:
    for alias in range(FIRST_ASSIGNABLE_ALIAS, LAST_ASSIGNABLE_ALIAS + 1):
        if alias not in master.alias_table:
            return alias
    raise CapacityError("alias pool 1..250 exhausted")


def _write(master, sim, alias: int, file: int, record: int, data: bytes) -> None:
    comp = master.enqueue_ms(wire.MsAction.WRITE, alias, file, record, data=data)
    drive(sim, comp)


def _read(master, sim, alias: int, file: int, record: int):
    comp = master.enqueue_ms(wire.MsAction.READ, alias, file, record)
    drive(sim, comp)
    return comp


def assign_alias(master, sim, name: PhysicalName, alias: int) -> bool:
    """Bind an alias to a physical name and verify the node took it.

    The three staging writes are broadcast: every unnamed node receives
    them but only the one whose name matches the staged value applies
    the alias. Returns False when the read-back gets no answer (the
    named node disappeared); the alias registration is rolled back.
    """
    if alias == BROADCAST_ALIAS:
        raise ValidationError("alias 0 is the broadcast address and cannot be assigned")
    if not FIRST_ASSIGNABLE_ALIAS <= alias <= LAST_ASSIGNABLE_ALIAS:
        raise AssignmentError(f"alias {alias} outside the assignable pool 1..250")
    master.register_alias(alias, str(name))  # raises AssignmentError when taken
    _write(master, sim, BROADCAST_ALIAS, STATUS_FILE, STATUS_NAME_SERIES_RECORD,
           name.series.to_bytes(4, "big"))
    _write(master, sim, BROADCAST_ALIAS, STATUS_FILE, STATUS_NAME_SERIAL_RECORD,
           name.serial.to_bytes(4, "big"))
    _write(master, sim, BROADCAST_ALIAS, STATUS_FILE, STATUS_ASSIGN_RECORD,
           bytes([alias, 0, 0, 0]))
    check = _read(master, sim, alias, DOC_FILE, DOC_SERIES_RECORD)
    if check.status == MS_STATUS_OK and check.value == name.series.to_bytes(4, "big"):
        return True
    del master.alias_table[alias]
    return False


@dataclass
class Identification:
    name: PhysicalName
    alias: Optional[int]
    bit_probes: int
    aborted: bool = False
    note: str = ""


@dataclass
class BaptizeResult:
    identifications: List[Identification] = field(default_factory=list)
    presence_probes: int = 0

    @property
    def assignments(self) -> List[Tuple[PhysicalName, int]]:
        return [(i.name, i.alias) for i in self.identifications
                if not i.aborted and i.alias is not None]

    @property
    def aborted(self) -> List[Identification]:
        return [i for i in self.identifications if i.aborted]


def baptize(master, sim) -> BaptizeResult:
    """Find every unnamed node and hand each a free alias.

    One full descent per node: a presence probe resets all candidates,
    then 64 bit-probes resolve the lowest matching name (a reply pins
    the probed bit to the trial value, silence to its complement).
    Probes ride maintenance rounds only, so configured traffic is not
    disturbed. A node that dies mid-descent leaves a ghost name whose
    assignment read-back fails; that identification is reported as
    aborted and the search moves on.
    """
    result = BaptizeResult()
    for _ in range(MAX_DESCENTS):
        result.presence_probes += 1
        if not probe(master, sim, 0):
            return result
        value = 0
        bit_probes = 0
        for k in range(1, NAME_BITS + 1):
            responded = probe(master, sim, k, trial_bit=0)
            bit_probes += 1
            value = (value << 1) | (0 if responded else 1)
        name = PhysicalName.from_value(value)
        alias = lowest_free_alias(master)  # CapacityError after the name is known
        if assign_alias(master, sim, name, alias):
            result.identifications.append(Identification(name, alias, bit_probes))
        else:
            result.identifications.append(Identification(
                name, None, bit_probes, aborted=True,
                note="assignment read-back unanswered; node lost mid-search"))
    raise TtstnError(f"enumeration did not settle within {MAX_DESCENTS} descents")


# -- configuration download ----------------------------------------------------

def staging_records(datasheet: Datasheet, round_lengths: Dict[int, int]) -> List[bytes]:
    """Configuration-file staging image: length markers, entries, zero fill."""
    kind_map = {
        sched.ActionKind.SEND: wire.RODL_KIND_SEND,
        sched.ActionKind.RECEIVE: wire.RODL_KIND_RECEIVE,
        sched.ActionKind.EXECUTE: wire.RODL_KIND_EXECUTE,
    }
    rounds = sorted({e.round_id for e in datasheet.entries})
    records = []
    for rid in rounds:
        if rid not in round_lengths:
            raise ValidationError(f"datasheet round {rid} is not in the cluster schedule")
        records.append(wire.encode_rodl_record(
            rid, wire.RODL_KIND_ROUND_LEN, round_lengths[rid], 1, 0, 0))
    for e in sorted(datasheet.entries, key=lambda e: (e.round_id, e.slot)):
        records.append(wire.encode_rodl_record(
            e.round_id, kind_map[e.action], e.slot, e.length, e.file, e.record))
    capacity = CONFIG_COMMIT_RECORD - CONFIG_RODL_BASE_RECORD
    if len(records) > capacity:
        raise ValidationError(
            f"datasheet needs {len(records)} staging records, file holds {capacity}")
    records.extend([ZERO_RECORD] * (capacity - len(records)))
    return records


def apply_configuration(master, sim, datasheet: Datasheet, alias: int,
                        validate: bool = True) -> None:
    """Download the cluster configuration part and arm it with a commit.

    Every staged record is read back before the commit; any timeout or
    mismatch raises and leaves the node inert (it acts on nothing until
    the commit record is written). validate=False skips the declared-file
    cross-check for callers that assembled entries from an already
    validated schedule.
    """
    if validate:
        datasheet.validate()
    round_lengths = {rid: rodl.round_length_slots for rid, rodl in master.rodls.items()}
    image = staging_records(datasheet, round_lengths)
    master.unconfigured.add(alias)
    for offset, payload in enumerate(image):
        record = CONFIG_RODL_BASE_RECORD + offset
        _write(master, sim, alias, CONFIG_FILE, record, payload)
        check = _read(master, sim, alias, CONFIG_FILE, record)
        if check.status != MS_STATUS_OK or check.value != payload:
            raise PartialConfigError(
                f"alias {alias}: staging record {record} verified "
                f"{check.value!r} (status {check.status}), wanted {payload!r}")
    _write(master, sim, alias, CONFIG_FILE, CONFIG_COMMIT_RECORD, bytes([1, 0, 0, 0]))
    check = _read(master, sim, alias, CONFIG_FILE, CONFIG_COMMIT_RECORD)
    if check.status != MS_STATUS_OK or check.value is None or check.value[0] != 1:
        raise PartialConfigError(f"alias {alias}: commit record not confirmed")
    master.unconfigured.discard(alias)
