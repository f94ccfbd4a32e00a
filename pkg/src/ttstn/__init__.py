"""Time-triggered smart-transducer cluster: protocol, simulator, tools.

A cluster is one master and up to 250 slave nodes on a shared serial
bus. All communication is time triggered: the master opens each round
with a coded trigger byte and a static descriptor list maps every slot
to one sender. Each node exposes exactly one data interface, a file
system of 4-byte records; tasks and the transport exchange state only
through it. On top of the core protocol sit maintenance transactions
(record read/write/execute to one addressed node), plug-and-play
enumeration of unnamed nodes, datasheet-driven configuration download,
and a deterministic byte-level simulator that the CLI drives.
"""

from .bus import FaultKind, FaultSpec, Simulator, TraceRecord, TransmitMode
from .config import Cluster, ClusterSpec, build_cluster, load_spec, validate_spec
from .errors import TtstnError
from .gateway import Gateway, SnapshotValue, ViewOp, ViewRequest
from .ifs import IfsAddress, InterfaceFileSystem, Section, decode_address, encode_address
from .nodes import LocalClock, MasterMachine, MsCompletion, SlaveMachine
from .pnp import (
    BaptizeResult,
    Datasheet,
    PhysicalName,
    apply_configuration,
    baptize,
    fetch_datasheet,
)
from .schedule import (
    ActionKind,
    ClusterSchedule,
    RecordRef,
    Rodl,
    RodlEntry,
    SlotAction,
    build_rodl,
    recommended_schedule,
    validate_schedule,
)
from .wire import FIREWORKS_CODEBOOK, MsAction, fireworks_decode, fireworks_encode

__version__ = "0.1.0"

__all__ = [
    "ActionKind", "BaptizeResult", "Cluster", "ClusterSchedule", "ClusterSpec",
    "Datasheet", "FaultKind", "FaultSpec", "FIREWORKS_CODEBOOK", "Gateway",
    "IfsAddress", "InterfaceFileSystem", "LocalClock", "MasterMachine",
    "MsAction", "MsCompletion", "PhysicalName", "RecordRef", "Rodl",
    "RodlEntry", "Section", "Simulator", "SlaveMachine", "SlotAction",
    "SnapshotValue", "TraceRecord", "TransmitMode", "TtstnError", "ViewOp",
    "ViewRequest", "apply_configuration", "baptize", "build_cluster",
    "build_rodl", "decode_address", "encode_address", "fetch_datasheet",
    "fireworks_decode", "fireworks_encode", "load_spec",
    "recommended_schedule", "validate_schedule", "validate_spec",
]
