"""Master and slave protocol machines with drifting local clocks.

The master owns the timeline: it opens every round with a trigger byte at
a precomputed offset inside the cluster cycle and never waits for anyone.
Slaves own no timeline at all; each valid trigger byte re-anchors their
clock phase and everything they do inside the round (sending, storing
received bytes, firing local tasks) is scheduled from that anchor through
their own drifting clock. Node computation touches the outside world only
through the node's interface file system, so a slow, missing, or wrong
task result can never move a transmission.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from . import bus, ifs as ifs_mod, schedule as sched, wire
from .errors import (
    AddressError,
    AssignmentError,
    FireworksDecodeError,
    FrameChecksumError,
    FrameFormatError,
    NotExecutableError,
    RangeError,
    TtstnError,
    ValidationError,
)
from .ifs import (
    CONFIG_ALIAS_RECORD,
    CONFIG_COMMIT_RECORD,
    CONFIG_FILE,
    CONFIG_RODL_BASE_RECORD,
    DOC_SERIAL_RECORD,
    DOC_SERIES_RECORD,
    DOC_FILE,
    FIRST_ASSIGNABLE_ALIAS,
    LAST_ASSIGNABLE_ALIAS,
    RECORD_SIZE,
    STATUS_ASSIGN_RECORD,
    STATUS_FILE,
    STATUS_NAME_SERIAL_RECORD,
    STATUS_NAME_SERIES_RECORD,
    InterfaceFileSystem,
    ZERO_RECORD,
)
from .timing import NS_PER_SEC, div_round_half_up

log = logging.getLogger(__name__)

# Probe records in the status file: record 0 resets the search and asks
# for any unnamed node; records 1..64 probe bit k-1 against 0, records
# 65..128 against 1.
PROBE_RESET_RECORD = 0
PROBE_MAX_RECORD = 128
NAME_BITS = 64


def probe_record(prefix_bits: int, trial_bit: int) -> int:
    if not 0 <= prefix_bits <= NAME_BITS:
        raise RangeError(f"prefix length {prefix_bits} outside 0..{NAME_BITS}")
    if prefix_bits == 0:
        return PROBE_RESET_RECORD
    if trial_bit not in (0, 1):
        raise RangeError("trial bit must be 0 or 1")
    return prefix_bits + (NAME_BITS if trial_bit else 0)


def decode_probe_record(record: int) -> Tuple[int, int]:
    """(prefix_bits, trial_bit) encoded in a status-file probe record."""
    if record == PROBE_RESET_RECORD:
        return 0, 0
    if 1 <= record <= NAME_BITS:
        return record, 0
    if NAME_BITS < record <= PROBE_MAX_RECORD:
        return record - NAME_BITS, 1
    raise RangeError(f"record {record} is not a probe record")


@dataclass
class LocalClock:
    """Phase-resynchronized clock with a constant rate deviation.

    drift_ppb is the deviation in parts per billion: a clock at +1e-3
    relative rate carries drift_ppb = 1_000_000. Resynchronization adjusts
    phase only; the rate error stays, which is exactly why slots need a
    guard gap.
    """

    drift_ppb: int = 0
    anchor_ns: int = 0

    def resync(self, now_ns: int) -> None:
        self.anchor_ns = now_ns

    def after(self, local_offset_ns: int) -> int:
        """Global instant at which `local_offset_ns` of local time elapses."""
        return self.anchor_ns + div_round_half_up(
            local_offset_ns * NS_PER_SEC, NS_PER_SEC + self.drift_ppb)

    def local_elapsed(self, now_ns: int) -> int:
        """Local time elapsed since the anchor at global instant `now_ns`."""
        return div_round_half_up(
            (now_ns - self.anchor_ns) * (NS_PER_SEC + self.drift_ppb), NS_PER_SEC)

    def from_start(self, local_offset_ns: int) -> int:
        """Global instant for a local offset measured from simulation start."""
        return div_round_half_up(local_offset_ns * NS_PER_SEC, NS_PER_SEC + self.drift_ppb)


@dataclass(frozen=True)
class SlotTrigger:
    round_id: int
    slot: int


@dataclass(frozen=True)
class PeriodTrigger:
    period_ns: int


@dataclass(frozen=True)
class ManualTrigger:
    pass


@dataclass
class Task:
    """Local computation step bound to a trigger.

    The body receives (node, now_ns) and may only touch the node's own
    interface file system.
    """

    name: str
    trigger: object
    fn: Callable[["ProtocolNode", int], None]
    meta: Dict[str, object] = field(default_factory=dict)


@dataclass
class OwnEntry:
    """One node's view of a descriptor entry that concerns it."""

    kind: sched.ActionKind
    slot: int
    length: int
    file: int
    record: int


class _ActiveRound:
    __slots__ = ("round_id", "anchor", "length", "kind", "receives", "buf",
                 "write_target", "probe", "probe_seen", "probe_responded")

    def __init__(self, round_id: int, anchor: int, length: int, kind: str):
        self.round_id = round_id
        self.anchor = anchor
        self.length = length
        self.kind = kind                  # "mp", "ms_addr", "ms_data"
        self.receives: List[OwnEntry] = []
        self.buf: Dict[int, int] = {}
        self.write_target: Optional[Tuple[int, int]] = None
        self.probe: Optional[Tuple[int, int]] = None
        self.probe_seen = False
        self.probe_responded = False


class ProtocolNode:
    """State and helpers shared by the master and slave machines."""

    def __init__(self, name: str, ifs: InterfaceFileSystem, drift_ppb: int = 0):
        self.name = name
        self.ifs = ifs
        self.clock = LocalClock(drift_ppb=drift_ppb)
        self.tasks: List[Task] = []
        self.online = True
        self.sim: Optional[bus.Simulator] = None
        self.actor_key = -1
        self._started = False

    @property
    def label(self) -> str:
        return "-"

    def attach(self, sim: bus.Simulator, index: int) -> None:
        self.sim = sim
        self.actor_key = self._default_key(index)

    def _default_key(self, index: int) -> int:
        return 300 + index

    def start(self) -> None:
        self._started = True
        for task in self.tasks:
            if isinstance(task.trigger, PeriodTrigger):
                self._schedule_period_task(task, 1)

    def add_task(self, task: Task) -> None:
        if self._started:
            raise ValidationError(f"{self.name}: tasks must be bound before the node starts")
        self.tasks.append(task)

    def bind_task(self, name: str, trigger, fn, meta=None) -> Task:
        task = Task(name, trigger, fn, dict(meta or {}))
        self.add_task(task)
        return task

    def bind_execute_task(self, file: int, record: int, task: Task) -> None:
        """Expose a task as an execute action on one of this node's records."""
        self.ifs.bind_execute(file, record, task.name,
                              lambda: self._run_task(task, self.sim.now))

    def set_online(self, online: bool) -> None:
        self.online = online
        if not online:
            self._drop_round_state()

    def _drop_round_state(self) -> None:
        pass

    def _schedule_period_task(self, task: Task, n: int) -> None:
        when = self.clock.from_start(n * task.trigger.period_ns)
        def fire():
            if self.online:
                self._run_task(task, self.sim.now)
            self._schedule_period_task(task, n + 1)
        self.sim.post(when, self.actor_key, bus.RANK_TASK, fire)

    def _run_task(self, task: Task, now: int) -> object:
        self.sim.log_task(self, task.name, now)
        try:
            task.fn(self, now)
        except TtstnError as exc:
            self.sim.diag(self, now, f"task {task.name} failed: {exc}")
        return task.name

    def _slot_tasks(self, round_id: int) -> List[Task]:
        return [t for t in self.tasks
                if isinstance(t.trigger, SlotTrigger) and t.trigger.round_id == round_id]

    # Bus callbacks; stubs so partially-wired nodes stay safe.
    def on_byte(self, byte: int, arrival_ns: int, ambiguous: bool) -> None:
        raise NotImplementedError

    def on_collision(self, when_ns: int) -> None:
        pass


class SlaveMachine(ProtocolNode):
    """Trigger-synchronized transducer node."""

    def __init__(self, name: str, physical_name: int, alias: Optional[int] = None,
                 drift_ppb: int = 0, ifs: Optional[InterfaceFileSystem] = None):
        super().__init__(name, ifs or InterfaceFileSystem.standard(), drift_ppb)
        if not 0 <= physical_name < (1 << NAME_BITS):
            raise RangeError("physical name must fit 64 bits")
        if alias is not None and not FIRST_ASSIGNABLE_ALIAS <= alias <= LAST_ASSIGNABLE_ALIAS:
            raise AssignmentError(f"alias {alias} outside assignable pool")
        self.physical_name = physical_name
        self.alias = alias
        self.rodl_entries: Dict[int, List[OwnEntry]] = {}
        self.round_lengths: Dict[int, int] = {}
        self._round: Optional[_ActiveRound] = None
        self._expect_boundary = True      # simulation start counts as a boundary
        self._last_activity_end = -(10 ** 9)
        self._ms_pending: Optional[Tuple[wire.MsAction, int, int, int]] = None
        self._in_search = False
        self._search_pos = 0
        self._write_doc_records()

    @property
    def label(self) -> str:
        return str(self.alias) if self.alias is not None else "-"

    def _default_key(self, index: int) -> int:
        return self.alias if self.alias is not None else 300 + index

    def _write_doc_records(self) -> None:
        series = (self.physical_name >> 32) & 0xFFFFFFFF
        serial = self.physical_name & 0xFFFFFFFF
        self.ifs.push_record(DOC_FILE, DOC_SERIES_RECORD, series.to_bytes(4, "big"))
        self.ifs.push_record(DOC_FILE, DOC_SERIAL_RECORD, serial.to_bytes(4, "big"))
        if self.alias is not None:
            self.ifs.push_record(CONFIG_FILE, CONFIG_ALIAS_RECORD, bytes([self.alias, 0, 0, 0]))

    def _drop_round_state(self) -> None:
        self._round = None
        self._ms_pending = None
        self._expect_boundary = False

    def configure_round(self, round_id: int, entries: List[OwnEntry], length: int) -> None:
        """Install this node's slice of a round descriptor (build time)."""
        self.rodl_entries[round_id] = list(entries)
        self.round_lengths[round_id] = length

    def _name_bit(self, index: int) -> int:
        return (self.physical_name >> (NAME_BITS - 1 - index)) & 1

    def _hunt_gap_ns(self) -> int:
        # between the in-round slot gap (3 bits) and the round gap (6 bits)
        return (9 * self.sim.bit_ns) // 2

    # -- reception ---------------------------------------------------------

    def on_byte(self, byte: int, arrival_ns: int, ambiguous: bool) -> None:
        if not self.online:
            return
        byte_start = arrival_ns - self.sim.frame_ns
        silence = byte_start - self._last_activity_end
        self._last_activity_end = arrival_ns
        if self._round is None:
            if not (self._expect_boundary or silence >= self._hunt_gap_ns()):
                return
            try:
                round_id = wire.fireworks_decode(byte)
            except FireworksDecodeError:
                self.sim.diag(self, arrival_ns, f"trigger byte 0x{byte:02x} rejected")
                self._expect_boundary = False
                return
            self._enter_round(round_id, arrival_ns)
        else:
            self._round_byte(byte, arrival_ns)

    def on_collision(self, when_ns: int) -> None:
        self._last_activity_end = when_ns
        if self._round is None:
            self._expect_boundary = False

    # -- round state -------------------------------------------------------

    def _enter_round(self, round_id: int, arrival: int) -> None:
        self.clock.resync(arrival)  # phase only; rate error persists
        if round_id == sched.MS_ADDRESS_ROUND:
            self._round = _ActiveRound(round_id, arrival, sched.MS_ROUND_SLOTS, "ms_addr")
        elif round_id == sched.MS_DATA_ROUND:
            self._round = _ActiveRound(round_id, arrival, sched.MS_ROUND_SLOTS, "ms_data")
            self._begin_data_phase(self._round)
        else:
            entries = self.rodl_entries.get(round_id)
            length = self.round_lengths.get(round_id)
            if entries is None or length is None:
                # Round unknown to this node: sit it out and wait for a gap.
                self._round = None
                self._expect_boundary = False
                return
            self._round = _ActiveRound(round_id, arrival, length, "mp")
            self._setup_mp_round(self._round, entries)
        self._post_round_end(self._round)

    def _slot_offset_local(self, slot: int) -> int:
        # anchor sits at the end of the trigger frame, 10 bit times into slot 0
        return slot * self.sim.slot_ns - self.sim.frame_ns

    def _post_round_end(self, st: _ActiveRound) -> None:
        end = self.clock.after(self._slot_offset_local(st.length))
        self.sim.post(end, self.actor_key, bus.RANK_CHECK, lambda: self._end_round(st))

    def _setup_mp_round(self, st: _ActiveRound, entries: List[OwnEntry]) -> None:
        for e in entries:
            if e.kind is sched.ActionKind.SEND:
                if self.alias is None:
                    continue  # unnamed nodes never speak in data rounds
                self._post_send(e.slot, e.length, e.file, e.record)
            elif e.kind is sched.ActionKind.EXECUTE:
                self._post_execute(e)
            elif e.kind is sched.ActionKind.RECEIVE:
                st.receives.append(e)
        for task in self._slot_tasks(st.round_id):
            offset = max(0, self._slot_offset_local(task.trigger.slot))
            when = self.clock.after(offset)
            self.sim.post(when, self.actor_key, bus.RANK_TASK,
                          lambda t=task: self.online and self._run_task(t, self.sim.now))

    def _post_send(self, slot: int, length: int, file: int, record: int,
                   mode: bus.TransmitMode = bus.TransmitMode.NORMAL,
                   payload: Optional[bytes] = None) -> None:
        first = self.clock.after(self._slot_offset_local(slot))

        def fire():
            if not self.online:
                return
            data = payload if payload is not None else self.ifs.pull_record(file, record)
            for i in range(length):
                when = self.clock.after(self._slot_offset_local(slot + i))
                if i == 0:
                    self.sim.transmit(self, data[i], mode)
                else:
                    self.sim.post(when, self.actor_key, bus.RANK_SEND,
                                  lambda b=data[i]: self.online and self.sim.transmit(self, b, mode))

        self.sim.post(first, self.actor_key, bus.RANK_SEND, fire)

    def _post_execute(self, e: OwnEntry) -> None:
        when = self.clock.after(self._slot_offset_local(e.slot))

        def fire():
            if not self.online:
                return
            try:
                self.ifs.execute_record(e.file, e.record)
                self.sim.log_exec(self, self.sim.now)
            except (NotExecutableError, AddressError) as exc:
                self.sim.diag(self, self.sim.now, f"execute {e.file}:{e.record} failed: {exc}")

        self.sim.post(when, self.actor_key, bus.RANK_TASK, fire)

    def _local_slot(self, arrival: int) -> int:
        byte_start_local = self.clock.local_elapsed(arrival - self.sim.frame_ns)
        return (byte_start_local + self.sim.frame_ns + self.sim.slot_ns // 2) // self.sim.slot_ns

    def _round_byte(self, byte: int, arrival: int) -> None:
        st = self._round
        slot = self._local_slot(arrival)
        if st.kind == "mp":
            for e in st.receives:
                if e.slot <= slot < e.slot + e.length:
                    self.ifs.file(e.file).write_byte(e.record, slot - e.slot, byte)
            return
        if 1 <= slot <= sched.MS_PAYLOAD_SLOTS:
            st.buf[slot] = byte
            if st.probe is not None and slot == 1 and byte == wire.PROBE_RESPONSE:
                st.probe_seen = True

    def _end_round(self, st: _ActiveRound) -> None:
        if self._round is not st:
            return
        self._round = None
        self._expect_boundary = True
        if st.kind == "ms_addr":
            self._finish_address_phase(st)
        elif st.kind == "ms_data":
            self._finish_data_phase(st)

    # -- maintenance rounds --------------------------------------------------

    def _finish_address_phase(self, st: _ActiveRound) -> None:
        self._ms_pending = None
        if len(st.buf) != sched.MS_PAYLOAD_SLOTS:
            return
        frame = bytes(st.buf[s] for s in range(1, sched.MS_PAYLOAD_SLOTS + 1))
        try:
            action, alias, file, record = wire.decode_ms_address(frame)
        except (FrameChecksumError, FrameFormatError) as exc:
            self.sim.diag(self, self.sim.now, f"address frame rejected: {exc}")
            return
        if alias == ifs_mod.BROADCAST_ALIAS or (self.alias is not None and alias == self.alias):
            self._ms_pending = (action, alias, file, record)

    def _begin_data_phase(self, st: _ActiveRound) -> None:
        pending = self._ms_pending
        self._ms_pending = None
        if pending is None:
            return
        action, alias, file, record = pending
        broadcast = alias == ifs_mod.BROADCAST_ALIAS
        if (action is wire.MsAction.EXECUTE and broadcast
                and file == STATUS_FILE and record <= PROBE_MAX_RECORD):
            self._handle_probe(st, record)
            return
        if action is wire.MsAction.READ:
            if broadcast:
                return  # a broadcast read could never share the reply slots
            try:
                frame = wire.encode_ms_data(self.ifs.pull_record(file, record))
            except AddressError as exc:
                self.sim.diag(self, self.sim.now, f"read {file}:{record} rejected: {exc}")
                return  # silence; the master reports a timeout
            for i, b in enumerate(frame):
                self._post_send(1 + i, 1, file, record, payload=bytes([b]))
        elif action is wire.MsAction.WRITE:
            st.write_target = (file, record)
        elif action is wire.MsAction.EXECUTE:
            self._run_remote_execute(file, record)

    def _run_remote_execute(self, file: int, record: int) -> None:
        try:
            self.ifs.execute_record(file, record)
            self.sim.log_exec(self, self.sim.now)
        except (NotExecutableError, AddressError) as exc:
            self.sim.diag(self, self.sim.now, f"remote execute {file}:{record} failed: {exc}")
            return
        frame = wire.exec_ack_frame()
        for i, b in enumerate(frame):
            self._post_send(1 + i, 1, 0, 0, payload=bytes([b]))

    def _handle_probe(self, st: _ActiveRound, record: int) -> None:
        k, trial = decode_probe_record(record)
        if self.alias is not None:  # named nodes left the search
            return
        responding = False
        if k == 0:
            self._in_search = True
            self._search_pos = 0
            responding = True
        elif self._in_search and self._search_pos == k - 1:
            st.probe = (k, trial)
            responding = self._name_bit(k - 1) == trial
        else:
            return
        if responding:
            st.probe_responded = True
            self._post_send(1, 1, 0, 0, mode=bus.TransmitMode.WIRED_AND,
                            payload=bytes([wire.PROBE_RESPONSE]))

    def _finish_data_phase(self, st: _ActiveRound) -> None:
        if st.probe is not None and self._in_search and self.alias is None:
            k, trial = st.probe
            if self._search_pos == k - 1:
                observed = st.probe_responded or st.probe_seen
                resolved = trial if observed else 1 - trial
                if self._name_bit(k - 1) == resolved:
                    self._search_pos = k
                else:
                    self._in_search = False
            return
        if st.write_target is None:
            return
        file, record = st.write_target
        if len(st.buf) != sched.MS_PAYLOAD_SLOTS:
            self.sim.diag(self, self.sim.now, "data phase incomplete, record untouched")
            return
        frame = bytes(st.buf[s] for s in range(1, sched.MS_PAYLOAD_SLOTS + 1))
        try:
            data = wire.decode_ms_data(frame)
        except FrameChecksumError as exc:
            self.sim.diag(self, self.sim.now, f"data frame rejected: {exc}")
            return
        try:
            self.ifs.push_record(file, record, data)
        except (AddressError, TtstnError) as exc:
            self.sim.diag(self, self.sim.now, f"write {file}:{record} rejected: {exc}")
            return
        self._after_write(file, record, data)

    def _after_write(self, file: int, record: int, data: bytes) -> None:
        if file == STATUS_FILE and record == STATUS_ASSIGN_RECORD:
            staged = int.from_bytes(
                self.ifs.pull_record(STATUS_FILE, STATUS_NAME_SERIES_RECORD)
                + self.ifs.pull_record(STATUS_FILE, STATUS_NAME_SERIAL_RECORD), "big")
            if staged == self.physical_name and FIRST_ASSIGNABLE_ALIAS <= data[0] <= LAST_ASSIGNABLE_ALIAS:
                self.alias = data[0]
                self.ifs.push_record(CONFIG_FILE, CONFIG_ALIAS_RECORD, bytes([data[0], 0, 0, 0]))
                self._in_search = False
                log.debug("%s took alias %d", self.name, self.alias)
        elif file == CONFIG_FILE and record == CONFIG_COMMIT_RECORD:
            if data[0]:
                self._activate_staged_rodls()
            else:
                self.rodl_entries.clear()
                self.round_lengths.clear()

    def _activate_staged_rodls(self) -> None:
        """Build round tables from the staged configuration records.

        The staging area describes the node's complete data-round
        participation, so previously active tables are replaced.
        """
        entries: Dict[int, List[OwnEntry]] = {}
        lengths: Dict[int, int] = {}
        kind_map = {
            wire.RODL_KIND_SEND: sched.ActionKind.SEND,
            wire.RODL_KIND_RECEIVE: sched.ActionKind.RECEIVE,
            wire.RODL_KIND_EXECUTE: sched.ActionKind.EXECUTE,
        }
        for rec in range(CONFIG_RODL_BASE_RECORD, CONFIG_COMMIT_RECORD):
            data = self.ifs.pull_record(CONFIG_FILE, rec)
            if data == ZERO_RECORD:
                continue
            rid, kind, slot, length, file, record = wire.decode_rodl_record(data)
            if kind == wire.RODL_KIND_ROUND_LEN:
                lengths[rid] = slot
            else:
                entries.setdefault(rid, []).append(
                    OwnEntry(kind_map[kind], slot, length, file, record))
        for rid in entries:
            if rid not in lengths:
                self.sim.diag(self, self.sim.now, f"staged round {rid} has no length entry")
                return
        self.rodl_entries = entries
        self.round_lengths = lengths
        log.debug("%s activated %d staged rounds", self.name, len(entries))


class _MsStatus:
    OK = "ok"
    TIMEOUT = "timeout"
    DEADLINE_MISSED = "deadline-missed"


@dataclass
class MsCompletion:
    """Outcome of one queued maintenance transaction."""

    action: wire.MsAction
    alias: int
    file: int
    record: int
    enqueue_cycle: int
    done: bool = False
    status: str = ""
    value: Optional[bytes] = None
    probe_response: Optional[bool] = None
    served_cycle: Optional[int] = None
    latency_cycles: Optional[int] = None

    def finish(self, status: str, cycle: int, value: Optional[bytes] = None,
               probe_response: Optional[bool] = None) -> None:
        self.done = True
        self.status = status
        self.value = value
        self.probe_response = probe_response
        self.served_cycle = cycle
        self.latency_cycles = cycle - self.enqueue_cycle + 1

    @property
    def is_probe_request(self) -> bool:
        return (self.action is wire.MsAction.EXECUTE
                and self.alias == ifs_mod.BROADCAST_ALIAS
                and self.file == STATUS_FILE and self.record <= PROBE_MAX_RECORD)


@dataclass
class _QueuedMs:
    completion: MsCompletion
    data: Optional[bytes]
    deadline_cycles: Optional[int]


class MasterMachine(ProtocolNode):
    """Cluster master: timeline owner, trigger source, maintenance gateway."""

    def __init__(self, name: str, cluster_schedule: sched.ClusterSchedule,
                 rodls: Dict[int, sched.Rodl],
                 ifs: Optional[InterfaceFileSystem] = None):
        super().__init__(name, ifs or InterfaceFileSystem.standard(), drift_ppb=0)
        self.schedule = cluster_schedule
        self.rodls = rodls
        self.alias_table: Dict[int, str] = {}
        self.stamps: Dict[Tuple[int, int], int] = {}
        self.ms_queue: List[_QueuedMs] = []
        self.unconfigured: set = set()
        self._layout: List[Tuple[int, int, int]] = []
        self._cycle = 0
        self._ms_current: Optional[_QueuedMs] = None
        self._ms_listening = False
        self._ms_buf: Dict[int, int] = {}
        self._probe_seen = False
        self._receives: List[OwnEntry] = []
        self._mirrored = set()
        for rodl in rodls.values():
            for e in rodl.entries_for(sched.MASTER_ACTOR):
                if e.action.kind is sched.ActionKind.RECEIVE:
                    self._mirrored.add((e.action.address.file, e.action.address.record))

    @property
    def label(self) -> str:
        return "M"

    def _default_key(self, index: int) -> int:
        return 0

    @property
    def mirrored(self) -> set:
        return self._mirrored

    @property
    def ms_in_flight(self) -> bool:
        return self._ms_current is not None

    def register_alias(self, alias: int, node_name: str) -> None:
        if alias in self.alias_table:
            raise AssignmentError(f"alias {alias} already held by {self.alias_table[alias]}")
        self.alias_table[alias] = node_name

    def start(self) -> None:
        super().start()
        self._layout = self.schedule.layout(self.rodls, self.sim.baud)
        self.sim.cycle_ns = self.schedule.cycle_ns
        self.sim.post(self.sim.now, self.actor_key, bus.RANK_ADMIN,
                      lambda: self._begin_cycle(self.sim.now))

    # -- cycle machinery -----------------------------------------------------

    def _begin_cycle(self, cycle_start: int) -> None:
        cycle = self._cycle
        for round_id, offset, slots in self._layout:
            self.sim.post(cycle_start + offset, self.actor_key, bus.RANK_ADMIN,
                          lambda r=round_id, t=cycle_start + offset, s=slots:
                          self._begin_round(cycle, r, t, s))
        self._cycle += 1
        self.sim.post(cycle_start + self.schedule.cycle_ns, self.actor_key, bus.RANK_ADMIN,
                      lambda: self._begin_cycle(cycle_start + self.schedule.cycle_ns))

    def _begin_round(self, cycle: int, round_id: int, start: int, slots: int) -> None:
        self.sim.begin_round(cycle, round_id, start, slots)
        self.sim.transmit(self, wire.fireworks_encode(round_id))
        self._receives = []
        self._ms_listening = False
        if round_id == sched.MS_ADDRESS_ROUND:
            self._ms_address_phase(start)
        elif round_id == sched.MS_DATA_ROUND:
            self._ms_data_phase(start)
        else:
            self._mp_round(round_id, start)

    def _slot_time(self, start: int, slot: int) -> int:
        return start + slot * self.sim.slot_ns

    def _post_frame(self, start: int, frame: bytes) -> None:
        for i, byte in enumerate(frame):
            self.sim.post(self._slot_time(start, 1 + i), self.actor_key, bus.RANK_SEND,
                          lambda b=byte: self.sim.transmit(self, b))

    def _mp_round(self, round_id: int, start: int) -> None:
        rodl = self.rodls[round_id]
        for e in rodl.entries_for(sched.MASTER_ACTOR):
            ref = e.action.address
            if e.action.kind is sched.ActionKind.SEND:
                self._post_mp_send(start, e.slot, e.action.length_slots, ref.file, ref.record)
            elif e.action.kind is sched.ActionKind.RECEIVE:
                self._receives.append(OwnEntry(e.action.kind, e.slot,
                                               e.action.length_slots, ref.file, ref.record))
            elif e.action.kind is sched.ActionKind.EXECUTE:
                self.sim.post(self._slot_time(start, e.slot), self.actor_key, bus.RANK_TASK,
                              lambda f=ref.file, r=ref.record: self._master_execute(f, r))
        for task in self._slot_tasks(round_id):
            when = self._slot_time(start, task.trigger.slot)
            self.sim.post(when, self.actor_key, bus.RANK_TASK,
                          lambda t=task: self._run_task(t, self.sim.now))

    def _post_mp_send(self, start: int, slot: int, length: int, file: int, record: int) -> None:
        def fire():
            data = self.ifs.pull_record(file, record)
            self.sim.transmit(self, data[0])
            for i in range(1, length):
                self.sim.post(self._slot_time(start, slot + i), self.actor_key, bus.RANK_SEND,
                              lambda b=data[i]: self.sim.transmit(self, b))
        self.sim.post(self._slot_time(start, slot), self.actor_key, bus.RANK_SEND, fire)

    def _master_execute(self, file: int, record: int) -> None:
        try:
            self.ifs.execute_record(file, record)
            self.sim.log_exec(self, self.sim.now)
        except (NotExecutableError, AddressError) as exc:
            self.sim.diag(self, self.sim.now, f"execute {file}:{record} failed: {exc}")

    # -- maintenance transactions ---------------------------------------------

    def enqueue_ms(self, action: wire.MsAction, alias: int, file: int, record: int,
                   data: Optional[bytes] = None,
                   deadline_cycles: Optional[int] = None) -> MsCompletion:
        """Queue one maintenance transaction; served strictly in order."""
        if action is wire.MsAction.READ and alias == ifs_mod.BROADCAST_ALIAS:
            raise ValidationError("broadcast read is not a valid request")
        if action is wire.MsAction.WRITE:
            if data is None or len(data) != RECORD_SIZE:
                raise ValidationError(f"write needs exactly {RECORD_SIZE} data bytes")
        elif data is not None:
            raise ValidationError("only writes carry data")
        # The enqueue cycle is the one whose maintenance round could serve
        # this first: position on the cycle grid, not the last begun round
        # (which still reads k-1 at the instant boundary k starts).
        if self.sim.cycle_ns:
            enqueue_cycle = self.sim.now // self.sim.cycle_ns
        else:
            enqueue_cycle = 0
        completion = MsCompletion(action, alias, file, record,
                                  enqueue_cycle=enqueue_cycle)
        self.ms_queue.append(_QueuedMs(completion, data, deadline_cycles))
        return completion

    def _ms_address_phase(self, start: int) -> None:
        self._ms_current = None
        cycle = self.sim.cycle
        while self.ms_queue:
            txn = self.ms_queue[0]
            c = txn.completion
            if (txn.deadline_cycles is not None
                    and cycle - c.enqueue_cycle + 1 > txn.deadline_cycles):
                c.finish(_MsStatus.DEADLINE_MISSED, cycle)
                self.ms_queue.pop(0)
                continue
            break
        if not self.ms_queue:
            return  # payload slots stay idle; the schedule shape is unchanged
        txn = self.ms_queue.pop(0)
        self._ms_current = txn
        c = txn.completion
        self._post_frame(start, wire.encode_ms_address(c.action, c.alias, c.file, c.record))

    def _ms_data_phase(self, start: int) -> None:
        txn = self._ms_current
        if txn is None:
            return
        c = txn.completion
        if c.action is wire.MsAction.WRITE:
            self._post_frame(start, wire.encode_ms_data(txn.data))
        else:
            self._ms_listening = True
            self._ms_buf = {}
            self._probe_seen = False
        self.sim.post(self._slot_time(start, sched.MS_ROUND_SLOTS), self.actor_key,
                      bus.RANK_CHECK, lambda: self._ms_finish(txn))

    def _ms_finish(self, txn: _QueuedMs) -> None:
        c = txn.completion
        cycle = self.sim.cycle
        self._ms_current = None
        self._ms_listening = False
        if c.action is wire.MsAction.WRITE:
            c.finish(_MsStatus.OK, cycle, value=txn.data)
            return
        if c.is_probe_request:
            c.finish(_MsStatus.OK, cycle, probe_response=self._probe_seen)
            return
        if len(self._ms_buf) == sched.MS_PAYLOAD_SLOTS:
            frame = bytes(self._ms_buf[s] for s in range(1, sched.MS_PAYLOAD_SLOTS + 1))
            try:
                value = wire.decode_ms_data(frame)
            except FrameChecksumError:
                c.finish(_MsStatus.TIMEOUT, cycle)
                return
            if c.action is wire.MsAction.EXECUTE and value[0] != wire.EXEC_ACK:
                c.finish(_MsStatus.TIMEOUT, cycle)
                return
            c.finish(_MsStatus.OK, cycle, value=value)
        else:
            c.finish(_MsStatus.TIMEOUT, cycle)

    # -- reception -------------------------------------------------------------

    def on_byte(self, byte: int, arrival_ns: int, ambiguous: bool) -> None:
        slot = self.sim.slot_of(arrival_ns - self.sim.frame_ns)
        if self._ms_listening:
            if 1 <= slot <= sched.MS_PAYLOAD_SLOTS:
                self._ms_buf[slot] = byte
                if slot == 1 and byte == wire.PROBE_RESPONSE:
                    self._probe_seen = True
            return
        for e in self._receives:
            if e.slot <= slot < e.slot + e.length:
                self.ifs.file(e.file).write_byte(e.record, slot - e.slot, byte)
                self.stamps[(e.file, e.record)] = self.sim.cycle


MS_STATUS_OK = _MsStatus.OK
MS_STATUS_TIMEOUT = _MsStatus.TIMEOUT
MS_STATUS_DEADLINE_MISSED = _MsStatus.DEADLINE_MISSED
