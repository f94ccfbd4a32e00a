"""Round descriptor lists, slot timing, and cluster round sequencing.

A cluster cycle is a fixed sequence of rounds. Every round opens with one
trigger byte from the master in slot 0; the descriptor list of the round
says who sends, receives, or executes in the remaining slots. A slot is
sized for one UART frame (8N1, ten bit times) plus a three bit-time gap.
Between rounds the master keeps the line silent for six bit times, which
is what lets a node that lost track of the schedule find the next round
boundary again.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import CycleOverflowError, RangeError, ScheduleError, SlotConflictError
from .ifs import BROADCAST_ALIAS, RECORD_SIZE
from .timing import bit_time_ns

FRAME_BITS = 10       # start bit, eight data bits, stop bit
SLOT_GAP_BITS = 3
SLOT_BITS = FRAME_BITS + SLOT_GAP_BITS
ROUND_GAP_BITS = 6    # master-enforced silence between rounds
GUARD_BITS = 3        # tolerated deviation from a nominal slot boundary

MP_ROUND_IDS = tuple(range(6))
MS_ADDRESS_ROUND = 6
MS_DATA_ROUND = 7
MS_PAYLOAD_SLOTS = 5
MS_ROUND_SLOTS = MS_PAYLOAD_SLOTS + 1

MAX_ROUND_SLOTS = 255

MASTER_ACTOR = "M"    # actor label for the cluster master in descriptors


def slot_duration_ns(baud: int) -> int:
    """Simulated time one slot occupies at the given bit rate."""
    return SLOT_BITS * bit_time_ns(baud)


def frame_duration_ns(baud: int) -> int:
    return FRAME_BITS * bit_time_ns(baud)


def round_gap_ns(baud: int) -> int:
    return ROUND_GAP_BITS * bit_time_ns(baud)


def guard_ns(baud: int) -> int:
    return GUARD_BITS * bit_time_ns(baud)


class ActionKind(Enum):
    SEND = "send"
    RECEIVE = "recv"
    EXECUTE = "exec"
    IDLE = "idle"


@dataclass(frozen=True)
class RecordRef:
    """Node-local record coordinates used by schedule entries."""

    file: int
    record: int

    def __str__(self) -> str:
        return f"{self.file}:{self.record}"


@dataclass(frozen=True)
class SlotAction:
    """What one actor does starting at a slot."""

    kind: ActionKind
    address: RecordRef
    length_slots: int = 1

    def __post_init__(self):
        if not 1 <= self.length_slots <= RECORD_SIZE:
            raise RangeError(f"length_slots {self.length_slots} outside 1..{RECORD_SIZE}")
        if self.kind is ActionKind.EXECUTE and self.length_slots != 1:
            raise ScheduleError("execute actions occupy exactly one slot")


@dataclass(frozen=True)
class RodlEntry:
    slot: int             # slot 0 is the round trigger, so payload slots start at 1
    actor: str            # node name; MASTER_ACTOR for the master
    action: SlotAction

    def __post_init__(self):
        if self.slot < 1:
            raise RangeError(f"slot {self.slot} invalid; payload slots start at 1")

    @property
    def end_slot(self) -> int:
        """First slot after this entry's span."""
        return self.slot + self.action.length_slots


@dataclass
class Rodl:
    """Descriptor list of one multi-partner round."""

    round_id: int
    entries: List[RodlEntry]
    round_length_slots: int

    def entries_for(self, actor: str) -> List[RodlEntry]:
        return [e for e in self.entries if e.actor == actor]

    def senders(self) -> List[RodlEntry]:
        return [e for e in self.entries if e.action.kind is ActionKind.SEND]


def build_rodl(round_id: int, entries: Iterable[RodlEntry],
               round_length_slots: Optional[int] = None) -> Rodl:
    """Validate and normalize a descriptor list.

    Entries are kept sorted by slot. Exactly one sender may occupy a slot;
    overlapping send spans are rejected, two entries at the same slot with
    the same sending role as well. Receives and executes may share slots
    freely since they produce no traffic of their own.
    """
    if round_id not in MP_ROUND_IDS:
        raise RangeError(f"round id {round_id} not a multi-partner round (0..5)")
    entry_list = sorted(entries, key=lambda e: (e.slot, e.actor))
    if not entry_list:
        raise ScheduleError(f"round {round_id} has no entries")
    length = round_length_slots
    if length is None:
        length = max(e.end_slot for e in entry_list)
    if not 1 <= length <= MAX_ROUND_SLOTS:
        raise RangeError(f"round length {length} outside 1..{MAX_ROUND_SLOTS}")

    occupied: Dict[int, RodlEntry] = {}
    for e in entry_list:
        if e.end_slot > length:
            raise ScheduleError(
                f"round {round_id}: entry at slot {e.slot} runs past length {length}")
        if e.action.kind is not ActionKind.SEND:
            continue
        for s in range(e.slot, e.end_slot):
            other = occupied.get(s)
            if other is not None:
                raise SlotConflictError(
                    f"round {round_id}: slot {s} claimed by both "
                    f"{other.actor} and {e.actor}")
            occupied[s] = e
    return Rodl(round_id, entry_list, length)


@dataclass
class ClusterSchedule:
    """Round sequence executed every cluster cycle.

    The sequence holds multi-partner round ids; the token pair (6, 7)
    stands for one maintenance transaction (address phase then data phase).
    """

    sequence: List[int]
    cycle_ns: int

    def __post_init__(self):
        if self.cycle_ns <= 0:
            raise RangeError("cycle duration must be positive")
        if not self.sequence:
            raise ScheduleError("schedule sequence is empty")
        i = 0
        while i < len(self.sequence):
            rid = self.sequence[i]
            if rid == MS_ADDRESS_ROUND:
                if i + 1 >= len(self.sequence) or self.sequence[i + 1] != MS_DATA_ROUND:
                    raise ScheduleError("maintenance address phase must be followed by data phase")
                i += 2
                continue
            if rid == MS_DATA_ROUND:
                raise ScheduleError("maintenance data phase without address phase")
            if rid not in MP_ROUND_IDS:
                raise RangeError(f"unknown round id {rid} in sequence")
            i += 1

    @property
    def ms_rounds_per_cycle(self) -> int:
        return self.sequence.count(MS_ADDRESS_ROUND)

    def round_slots(self, rodls: Mapping[int, Rodl]) -> List[Tuple[int, int]]:
        """(round_id, slot count) per sequence position."""
        out = []
        for rid in self.sequence:
            if rid in (MS_ADDRESS_ROUND, MS_DATA_ROUND):
                out.append((rid, MS_ROUND_SLOTS))
            else:
                try:
                    out.append((rid, rodls[rid].round_length_slots))
                except KeyError:
                    raise ScheduleError(f"sequence names round {rid} but no descriptor exists") from None
        return out

    def layout(self, rodls: Mapping[int, Rodl], baud: int) -> List[Tuple[int, int, int]]:
        """(round_id, start offset ns, slot count) for one cycle.

        Rounds are packed back to back with the inter-round gap; the round
        after the last one starts the next cycle. Raises when the packed
        rounds do not fit the cycle.
        """
        slot_ns = slot_duration_ns(baud)
        gap = round_gap_ns(baud)
        offset = 0
        placed = []
        for rid, slots in self.round_slots(rodls):
            placed.append((rid, offset, slots))
            offset += slots * slot_ns + gap
        span = offset - gap  # trailing gap is covered by the cycle's idle tail
        if span > self.cycle_ns:
            raise CycleOverflowError(
                f"rounds span {span} ns but the cycle is {self.cycle_ns} ns")
        return placed


def recommended_schedule(mp_round_ids: Sequence[int], ms_interleave: int,
                         cycle_ns: int) -> ClusterSchedule:
    """Interleave maintenance rounds into a data-round sequence.

    One maintenance transaction is inserted after every `ms_interleave`
    data rounds, and every cycle carries at least one so configuration and
    diagnostics always make progress.
    """
    if ms_interleave < 1:
        raise RangeError("ms_interleave must be at least 1")
    ids = list(mp_round_ids)
    if not ids:
        raise ScheduleError("a schedule needs at least one data round")
    seq: List[int] = []
    since_ms = 0
    for rid in ids:
        seq.append(rid)
        since_ms += 1
        if since_ms == ms_interleave:
            seq.extend((MS_ADDRESS_ROUND, MS_DATA_ROUND))
            since_ms = 0
    if MS_ADDRESS_ROUND not in seq:
        seq.extend((MS_ADDRESS_ROUND, MS_DATA_ROUND))
    return ClusterSchedule(seq, cycle_ns)


@dataclass(frozen=True)
class Finding:
    severity: str   # "error" or "warning"
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: [{self.code}] {self.message}"


@dataclass
class ValidationReport:
    findings: List[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(f.severity == "error" for f in self.findings)

    def add(self, severity: str, code: str, message: str) -> None:
        self.findings.append(Finding(severity, code, message))

    def errors(self) -> List[Finding]:
        return [f for f in self.findings if f.severity == "error"]


def validate_schedule(rodls: Mapping[int, Rodl], sched: ClusterSchedule, baud: int,
                      node_files: Mapping[str, Mapping[int, int]],
                      node_aliases: Optional[Mapping[str, Optional[int]]] = None,
                      task_windows: Optional[Mapping[str, List[Tuple[int, int, int]]]] = None,
                      ) -> ValidationReport:
    """Static conflict scan over a full cluster description.

    `node_files` maps actor name to {file: record count}; the master
    appears under its own name. `task_windows` optionally maps a label to
    (round, start slot, width) activity windows so reserved measurement
    intervals can be checked for overlap before anything runs.
    """
    report = ValidationReport()

    for rid, rodl in sorted(rodls.items()):
        try:
            build_rodl(rid, rodl.entries, rodl.round_length_slots)
        except (ScheduleError, SlotConflictError, RangeError) as exc:
            report.add("error", "round", str(exc))
        for e in rodl.entries:
            if e.actor not in node_files:
                report.add("error", "actor",
                           f"round {rid} slot {e.slot}: unknown actor {e.actor!r}")
                continue
            files = node_files[e.actor]
            ref = e.action.address
            if ref.file not in files or not 0 <= ref.record < files[ref.file]:
                report.add("error", "dangling",
                           f"round {rid} slot {e.slot}: {e.actor} has no record {ref}")
        if node_aliases:
            for e in rodl.senders():
                if node_aliases.get(e.actor, None) == BROADCAST_ALIAS:
                    report.add("error", "broadcast-send",
                               f"round {rid}: alias 0 cannot send (actor {e.actor})")

    try:
        sched.layout(rodls, baud)
    except CycleOverflowError as exc:
        report.add("error", "overflow", str(exc))
    except ScheduleError as exc:
        report.add("error", "sequence", str(exc))

    if task_windows:
        flat = [(label, rnd, start, start + width)
                for label, windows in sorted(task_windows.items())
                for rnd, start, width in windows]
        for i, (la, ra, sa, ea) in enumerate(flat):
            for lb, rb, sb, eb in flat[i + 1:]:
                if ra == rb and sa < eb and sb < ea:
                    report.add("warning", "window-overlap",
                               f"activity windows of {la} and {lb} overlap "
                               f"in round {ra} (slots {sa}..{ea - 1} vs {sb}..{eb - 1})")
    return report
