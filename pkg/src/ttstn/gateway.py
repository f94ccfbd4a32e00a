"""Cluster gateway: the three access views, off the bus where possible.

Real-time traffic is consumed locally: the master already mirrors every
subscribed record into its own file system, so a snapshot costs zero bus
bytes. Diagnostic and configuration traffic goes through the master's
maintenance queue, which rides dedicated rounds; loading that queue can
therefore never move a data-round byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

from . import pnp, schedule as sched, wire
from .errors import NotSubscribedError, ValidationError
from .ifs import IfsAddress, Section
from .nodes import MasterMachine, MsCompletion


class ViewOp(Enum):
    READ = "read"
    WRITE = "write"
    EXECUTE = "execute"
    DOWNLOAD_RODL = "download-rodl"


_MS_ACTIONS = {
    ViewOp.READ: wire.MsAction.READ,
    ViewOp.WRITE: wire.MsAction.WRITE,
    ViewOp.EXECUTE: wire.MsAction.EXECUTE,
}


@dataclass
class ViewRequest:
    view: Section
    op: ViewOp
    address: IfsAddress
    payload: Optional[bytes] = None
    deadline_cycles: Optional[int] = None


@dataclass(frozen=True)
class SnapshotValue:
    value: bytes
    stamp: Optional[int]   # cluster cycle of reception; None = never received

    @property
    def received(self) -> bool:
        return self.stamp is not None


class Gateway:
    def __init__(self, master: MasterMachine, sim):
        self.master = master
        self.sim = sim

    # -- real-time view (local, no wire traffic) ---------------------------

    def rs_snapshot(self, addresses: Iterable[Tuple[int, int]]
                    ) -> Dict[Tuple[int, int], SnapshotValue]:
        out = {}
        for file, record in addresses:
            if (file, record) not in self.master.mirrored:
                raise NotSubscribedError(
                    f"record {file}:{record} is not mirrored at the master")
            out[(file, record)] = SnapshotValue(
                value=self.master.ifs.pull_record(file, record),
                stamp=self.master.stamps.get((file, record)))
        return out

    # -- diagnostics / configuration views (queued wire traffic) -----------

    def dm_request(self, req: ViewRequest) -> MsCompletion:
        if req.view not in (Section.DM, Section.CP):
            raise ValidationError("only the DM and CP views issue transactions; "
                                  "RS data is read with rs_snapshot")
        if req.op is ViewOp.DOWNLOAD_RODL:
            raise ValidationError("schedule downloads go through cp_download_rodl")
        return self.master.enqueue_ms(
            _MS_ACTIONS[req.op], req.address.alias, req.address.file,
            req.address.record, data=req.payload,
            deadline_cycles=req.deadline_cycles)

    def queue_length(self) -> int:
        return len(self.master.ms_queue)

    def latency_bound_cycles(self) -> int:
        """Worst case for a request enqueued now: FIFO position in cycles."""
        per_cycle = self.master.schedule.ms_rounds_per_cycle
        pending = len(self.master.ms_queue) + (1 if self.master.ms_in_flight else 0)
        return -(-(pending + 1) // per_cycle)

    def await_completion(self, completion: MsCompletion, max_cycles: int = 64) -> MsCompletion:
        return pnp.drive(self.sim, completion, max_cycles)

    def cp_download_rodl(self, alias: int, rodl: sched.Rodl) -> None:
        """Give one node its slice of a data round, then arm it.

        The round must already exist in the running schedule; the master
        keeps triggering it either way, this only changes who acts in it.
        """
        name = self.master.alias_table.get(alias)
        if name is None:
            raise ValidationError(f"alias {alias} is not baptized")
        if rodl.round_id not in self.master.rodls:
            raise ValidationError(
                f"round {rodl.round_id} is not part of the running schedule")
        entries: List[pnp.DatasheetEntry] = []
        for e in rodl.entries_for(name):
            entries.append(pnp.DatasheetEntry(
                round_id=rodl.round_id, slot=e.slot, action=e.action.kind,
                file=e.action.address.file, record=e.action.address.record,
                length=e.action.length_slots))
        sheet = pnp.Datasheet(series=0, description=f"download for {name}",
                              files=[], entries=entries)
        # System files alone bound the record references here; callers
        # configuring custom files go through apply_configuration with a
        # datasheet that declares them.
        pnp.apply_configuration(self.master, self.sim, sheet, alias,
                                validate=False)
