"""Deterministic discrete-event broadcast bus with tracing and faults.

Time is integer nanoseconds. Every byte on the bus is a transmission with
a fixed span of ten bit times; receivers see it when the span ends. Two
transmissions whose spans intersect collide, except in wired-AND mode
(used only for enumeration reply slots) where identical bytes merge
cleanly. Ties in the event queue are broken by (time, sender key, event
rank, insertion order), so a run is a pure function of its inputs and the
exported trace is byte-identical across repeats and platforms.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple, Union

from . import schedule as sched
from .errors import RangeError, StaleFaultError
from .timing import bit_time_ns

log = logging.getLogger(__name__)

TRACE_HEADER = "# ttstn-trace v1, baud={baud}"

# Event ranks; lower runs first at equal timestamps.
RANK_ADMIN = 0
RANK_TASK = 1
RANK_SEND = 2
RANK_DELIVER = 3
RANK_CHECK = 4

_SPURIOUS_KEY = 999   # sender ordering key for injected noise

KIND_DELIVERED = "delivered"
KIND_AMBIGUOUS = "ambiguous"
KIND_COLLISION = "collision"
KIND_FAULT = "fault"
KIND_EXEC = "exec"


class TransmitMode(Enum):
    NORMAL = "normal"
    WIRED_AND = "wired-and"


class FaultKind(Enum):
    BIT_FLIP = "bitflip"
    DROP_BYTE = "drop"
    SPURIOUS_BYTE = "spurious"


@dataclass
class FaultSpec:
    """One injected disturbance, applied exactly once at delivery time.

    `at` is either an absolute simulated time or a (cycle, round, slot)
    triple. Flips and drops hit the first matching delivery; a spurious
    byte is transmitted by nobody at the addressed instant.
    """

    kind: FaultKind
    at: Union[int, Tuple[int, int, int]]
    bit: Optional[int] = None
    byte: Optional[int] = None
    applied: bool = False

    @property
    def slot_form(self) -> bool:
        return isinstance(self.at, tuple)

    def validate(self) -> None:
        if self.kind is FaultKind.BIT_FLIP and not (self.bit is not None and 0 <= self.bit < 8):
            raise RangeError("bit flip fault needs a bit index 0..7")
        if self.kind is FaultKind.SPURIOUS_BYTE and not (self.byte is not None and 0 <= self.byte <= 0xFF):
            raise RangeError("spurious fault needs a byte value 0..255")
        if self.slot_form:
            c, r, s = self.at
            if c < 0 or not 0 <= r < 8 or s < 0:
                raise RangeError(f"bad fault position {self.at}")
        elif self.at < 0:
            raise RangeError("fault time must be non-negative")


@dataclass(frozen=True)
class TraceRecord:
    """One line of the exported trace."""

    time_ns: int
    cycle: int
    round_id: int
    slot: int
    actor: str          # "M", a decimal alias, or "-"
    byte: Optional[int]
    kind: str

    def line(self) -> str:
        byte = f"{self.byte:02x}" if self.byte is not None else "--"
        return (f"{self.time_ns},{self.cycle},{self.round_id},{self.slot},"
                f"{self.actor},{byte},{self.kind}")


def format_trace(records: Sequence[TraceRecord], baud: int) -> str:
    lines = [TRACE_HEADER.format(baud=baud)]
    lines.extend(r.line() for r in records)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TaskActivation:
    time_ns: int
    cycle: int
    node: str
    task: str
    note: str = ""


@dataclass(frozen=True)
class Violation:
    """Transmission landed outside its nominal slot by more than the guard."""

    time_ns: int
    actor: str
    deviation_ns: int


class _WandGroup:
    __slots__ = ("members", "delivered")

    def __init__(self):
        self.members: List[_Transmission] = []
        self.delivered = False


class _Transmission:
    __slots__ = ("sender", "byte", "start", "end", "mode", "collided", "group")

    def __init__(self, sender, byte: int, start: int, end: int, mode: TransmitMode):
        self.sender = sender
        self.byte = byte
        self.start = start
        self.end = end
        self.mode = mode
        self.collided = False
        self.group: Optional[_WandGroup] = None


@dataclass
class _RoundContext:
    cycle: int = -1
    round_id: int = -1
    start_ns: int = 0
    slots: int = 0


class Simulator:
    """Event queue, shared medium, and bookkeeping for one cluster."""

    def __init__(self, baud: int):
        self.baud = baud
        self.bit_ns = bit_time_ns(baud)
        self.frame_ns = sched.frame_duration_ns(baud)
        self.slot_ns = sched.slot_duration_ns(baud)
        self.guard_ns = sched.guard_ns(baud)
        self.cycle_ns: Optional[int] = None   # published by the master at start
        self.now = 0
        self.nodes: List = []
        self.trace: List[TraceRecord] = []
        self.task_log: List[TaskActivation] = []
        self.violations: List[Violation] = []
        self.diagnostics: List[Tuple[int, str, str]] = []
        self.collisions = 0
        self._heap: List[tuple] = []
        self._seq = 0
        self._active: List[_Transmission] = []
        self._faults: List[FaultSpec] = []
        self._ctx = _RoundContext()
        self._begun_this_cycle: set = set()

    # -- wiring ---------------------------------------------------------

    def add_node(self, node) -> None:
        index = len(self.nodes)
        self.nodes.append(node)
        node.attach(self, index)

    def start(self) -> None:
        for node in self.nodes:
            node.start()

    # -- event queue ----------------------------------------------------

    def post(self, time_ns: int, actor_key: int, rank: int, fn: Callable[[], None]) -> None:
        assert time_ns >= self.now, f"event posted into the past ({time_ns} < {self.now})"
        heapq.heappush(self._heap, (time_ns, actor_key, rank, self._seq, fn))
        self._seq += 1

    def advance(self, until_ns: int) -> List[TraceRecord]:
        """Run all events strictly before `until_ns`; return new trace rows.

        Advancing twice to intermediate points is identical to advancing
        once: events exactly at the boundary run in the later call.
        """
        if until_ns < self.now:
            raise RangeError(f"cannot advance backwards ({until_ns} < {self.now})")
        mark = len(self.trace)
        while self._heap and self._heap[0][0] < until_ns:
            time_ns, _actor, _rank, _seq, fn = heapq.heappop(self._heap)
            self.now = time_ns
            fn()
        self.now = until_ns
        return self.trace[mark:]

    def run_cycles(self, count: int) -> List[TraceRecord]:
        if self.cycle_ns is None:
            raise RangeError("no master published a cycle duration")
        target = ((self.now // self.cycle_ns) + count) * self.cycle_ns
        return self.advance(target)

    # -- round context ----------------------------------------------------

    def begin_round(self, cycle: int, round_id: int, start_ns: int, slots: int) -> None:
        if cycle != self._ctx.cycle:
            self._begun_this_cycle.clear()
        self._ctx = _RoundContext(cycle, round_id, start_ns, slots)
        self._begun_this_cycle.add(round_id)
        for f in self._faults:
            if (f.kind is FaultKind.SPURIOUS_BYTE and f.slot_form and not f.applied
                    and f.at[0] == cycle and f.at[1] == round_id):
                f.applied = True
                at = start_ns + f.at[2] * self.slot_ns
                self.post(at, _SPURIOUS_KEY, RANK_SEND,
                          lambda b=f.byte: self.transmit(None, b))

    @property
    def cycle(self) -> int:
        return self._ctx.cycle

    def slot_of(self, time_ns: int) -> int:
        """Nearest slot index on the master's reference grid."""
        rel = time_ns - self._ctx.start_ns
        if rel < 0:
            return 0
        return (rel + self.slot_ns // 2) // self.slot_ns

    # -- medium -----------------------------------------------------------

    def transmit(self, sender, byte: int, mode: TransmitMode = TransmitMode.NORMAL) -> None:
        """Put one byte on the line starting now.

        Callers schedule a send event at the slot boundary they own and
        invoke this from it, so `start` is always the current instant.
        """
        start = self.now
        tx = _Transmission(sender, byte & 0xFF, start, start + self.frame_ns, mode)
        self._active = [t for t in self._active if t.end > start]
        for other in self._active:
            if (other.mode is TransmitMode.WIRED_AND and mode is TransmitMode.WIRED_AND
                    and not other.collided and not tx.collided):
                self._merge_groups(other, tx)
            else:
                other.collided = True
                tx.collided = True
        self._active.append(tx)
        self._check_slot_discipline(tx)
        key = sender.actor_key if sender is not None else _SPURIOUS_KEY
        if sender is None:
            self._trace(start, sender, byte, KIND_FAULT)
        self.post(tx.end, key, RANK_DELIVER, lambda: self._deliver(tx))

    def _merge_groups(self, a: _Transmission, b: _Transmission) -> None:
        ga = a.group
        gb = b.group
        if ga is None and gb is None:
            g = _WandGroup()
            g.members = [a, b]
            a.group = b.group = g
        elif ga is None:
            gb.members.append(a)
            a.group = gb
        elif gb is None:
            ga.members.append(b)
            b.group = ga
        elif ga is not gb:
            for m in gb.members:
                m.group = ga
            ga.members.extend(gb.members)

    def _check_slot_discipline(self, tx: _Transmission) -> None:
        if tx.sender is None or self._ctx.cycle < 0:
            return
        nominal = self._ctx.start_ns + self.slot_of(tx.start) * self.slot_ns
        deviation = abs(tx.start - nominal)
        if deviation > self.guard_ns:
            self.violations.append(Violation(tx.start, tx.sender.label, deviation))

    def _deliver(self, tx: _Transmission) -> None:
        self._active = [t for t in self._active if t.end > self.now]
        if tx.collided:
            self.collisions += 1
            self._trace(tx.start, tx.sender, tx.byte, KIND_COLLISION)
            self._notify_collision({tx.sender})
            return
        if tx.group is not None:
            group = tx.group
            if group.delivered:
                return
            group.delivered = True
            byte = 0xFF
            for m in group.members:
                byte &= m.byte
            distinct = {m.byte for m in group.members}
            senders = {m.sender for m in group.members}
            kind = KIND_DELIVERED if len(distinct) == 1 else KIND_AMBIGUOUS
            actor = tx.sender if len(senders) == 1 else None
            self._trace(tx.start, actor, byte, kind)
            self._notify_byte(senders, byte, tx.end, kind == KIND_AMBIGUOUS)
            return
        byte = tx.byte
        fault = self._match_fault(tx)
        if fault is not None:
            fault.applied = True
            self._trace(tx.start, tx.sender, tx.byte, KIND_FAULT)
            if fault.kind is FaultKind.DROP_BYTE:
                return
            byte ^= 1 << fault.bit
        self._trace(tx.start, tx.sender, byte, KIND_DELIVERED)
        self._notify_byte({tx.sender}, byte, tx.end, False)

    def _notify_byte(self, senders, byte: int, arrival: int, ambiguous: bool) -> None:
        for node in self.nodes:
            if node not in senders:
                node.on_byte(byte, arrival, ambiguous)

    def _notify_collision(self, senders) -> None:
        when = self.now
        for node in self.nodes:
            if node not in senders:
                node.on_collision(when)

    def _match_fault(self, tx: _Transmission) -> Optional[FaultSpec]:
        for f in self._faults:
            if f.applied or f.kind is FaultKind.SPURIOUS_BYTE:
                continue
            if f.slot_form:
                c, r, s = f.at
                if (self._ctx.cycle == c and self._ctx.round_id == r
                        and self.slot_of(tx.start) == s):
                    return f
            elif tx.end >= f.at:
                return f
        return None

    # -- fault injection ----------------------------------------------------

    def inject_fault(self, spec: FaultSpec) -> None:
        spec.validate()
        if spec.slot_form:
            c, r, _s = spec.at
            if c < self._ctx.cycle or (c == self._ctx.cycle and r in self._begun_this_cycle
                                       and r != self._ctx.round_id):
                raise StaleFaultError(f"round {spec.at} already completed")
        elif spec.at < self.now:
            raise StaleFaultError(f"time {spec.at} ns is already past ({self.now} ns)")
        self._faults.append(spec)
        if spec.kind is FaultKind.SPURIOUS_BYTE and not spec.slot_form:
            spec.applied = True
            self.post(spec.at, _SPURIOUS_KEY, RANK_SEND,
                      lambda: self.transmit(None, spec.byte))

    def set_drift(self, node, rho: float) -> None:
        """Set a node's clock rate deviation (e.g. 1e-3 for +0.1%)."""
        node.clock.drift_ppb = round(rho * 1e9)

    # -- logging ----------------------------------------------------------

    def _trace(self, time_ns: int, sender, byte: Optional[int], kind: str) -> None:
        actor = sender.label if sender is not None else "-"
        self.trace.append(TraceRecord(time_ns, self._ctx.cycle, self._ctx.round_id,
                                      self.slot_of(time_ns), actor, byte, kind))

    def log_exec(self, node, when: int) -> None:
        self.trace.append(TraceRecord(when, self._ctx.cycle, self._ctx.round_id,
                                      self.slot_of(when), node.label, None, KIND_EXEC))

    def log_task(self, node, task: str, when: int, note: str = "") -> None:
        self.task_log.append(TaskActivation(when, self._ctx.cycle, node.name, task, note))

    def diag(self, node, when: int, message: str) -> None:
        log.debug("diag t=%d %s: %s", when, node.name if node else "-", message)
        self.diagnostics.append((when, node.name if node else "-", message))

    # -- export -----------------------------------------------------------

    def export_trace(self, sink) -> None:
        """Write the delimited trace to a path or text file object."""
        text = format_trace(self.trace, self.baud)
        if hasattr(sink, "write"):
            sink.write(text)
        else:
            with open(sink, "w", encoding="utf-8") as fh:
                fh.write(text)
