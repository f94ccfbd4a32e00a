"""Interface file system: the record store every node communicates through.

Each node exposes a small hierarchy of fixed-size files; a record is always
four bytes. All protocol traffic and all local task I/O goes through
push/pull/execute on these records, which is what decouples node-local
computation from the bus schedule: a writer replaces a record, a reader
takes a copy, and neither ever blocks or consumes the other's data.

Addresses name (cluster, alias, file, record) and pack into 30 bits for
transport. Files are created when a node is constructed and never resized
afterwards; there is deliberately no wire operation that adds files.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional

from .errors import (
    AddressError,
    MalformedAddressError,
    NotExecutableError,
    RangeError,
    SizeError,
)

RECORD_SIZE = 4
MAX_FILES = 64          # file field is 6 bits
MAX_RECORDS = 256
MAX_ALIAS = 255
MAX_CLUSTER = 255

BROADCAST_ALIAS = 0         # receive-only; never assigned to a node
FIRST_ASSIGNABLE_ALIAS = 1
LAST_ASSIGNABLE_ALIAS = 250  # 251..255 reserved for protocol extensions

# System files present in every node, in this fixed layout:
#   file 0: configuration (alias, staged round tables, commit flag)
#   file 1: documentation (series in record 0, serial in record 1)
#   file 2: membership/status plus enumeration scratch records
CONFIG_FILE = 0
DOC_FILE = 1
STATUS_FILE = 2

CONFIG_FILE_RECORDS = 64
CONFIG_ALIAS_RECORD = 0
CONFIG_RODL_BASE_RECORD = 2     # staged schedule entries: records 2..62
CONFIG_COMMIT_RECORD = CONFIG_FILE_RECORDS - 1  # writing this activates staged tables

DOC_FILE_RECORDS = 4
DOC_SERIES_RECORD = 0
DOC_SERIAL_RECORD = 1

# Status-file record map. Records 0..128 are enumeration probe targets
# (see pnp), 130..132 stage a physical name plus alias during assignment.
STATUS_FILE_RECORDS = 133
STATUS_NAME_SERIES_RECORD = 130
STATUS_NAME_SERIAL_RECORD = 131
STATUS_ASSIGN_RECORD = 132

_CLUSTER_SHIFT = 22
_ALIAS_SHIFT = 14
_FILE_SHIFT = 8
_PACKED_LIMIT = 1 << 30

ZERO_RECORD = bytes(RECORD_SIZE)


class Section(Enum):
    """Gateway view classification for the records of a file."""

    RS = "rs"   # real-time service: mirrored periodically, read locally
    DM = "dm"   # diagnostics and management
    CP = "cp"   # configuration and planning


@dataclass(frozen=True)
class IfsAddress:
    """Cluster-wide name of one record."""

    cluster: int
    alias: int
    file: int
    record: int

    def __post_init__(self):
        if not 0 <= self.cluster <= MAX_CLUSTER:
            raise RangeError(f"cluster {self.cluster} outside 0..{MAX_CLUSTER}")
        if not 0 <= self.alias <= MAX_ALIAS:
            raise RangeError(f"alias {self.alias} outside 0..{MAX_ALIAS}")
        if not 0 <= self.file < MAX_FILES:
            raise RangeError(f"file {self.file} outside 0..{MAX_FILES - 1}")
        if not 0 <= self.record < MAX_RECORDS:
            raise RangeError(f"record {self.record} outside 0..{MAX_RECORDS - 1}")

    def encode(self) -> int:
        """Pack into the 30-bit transport form (top two bits zero)."""
        return (
            (self.cluster << _CLUSTER_SHIFT)
            | (self.alias << _ALIAS_SHIFT)
            | (self.file << _FILE_SHIFT)
            | self.record
        )

    @classmethod
    def decode(cls, packed: int) -> "IfsAddress":
        if not 0 <= packed < _PACKED_LIMIT:
            raise MalformedAddressError(f"packed address 0x{packed & 0xFFFFFFFF:08X} outside 30-bit range")
        return cls(
            cluster=(packed >> _CLUSTER_SHIFT) & 0xFF,
            alias=(packed >> _ALIAS_SHIFT) & 0xFF,
            file=(packed >> _FILE_SHIFT) & 0x3F,
            record=packed & 0xFF,
        )

    def __str__(self) -> str:
        return f"{self.cluster}/{self.alias}/{self.file}/{self.record}"


def encode_address(address: IfsAddress) -> int:
    return address.encode()


def decode_address(packed: int) -> IfsAddress:
    return IfsAddress.decode(packed)


class IfsFile:
    """Fixed-size array of four-byte records."""

    def __init__(self, number: int, record_count: int, section: Section):
        if not 0 <= number < MAX_FILES:
            raise RangeError(f"file number {number} outside 0..{MAX_FILES - 1}")
        if not 1 <= record_count <= MAX_RECORDS:
            raise RangeError(f"record count {record_count} outside 1..{MAX_RECORDS}")
        self.number = number
        self.section = section
        self._records = [ZERO_RECORD] * record_count

    def __len__(self) -> int:
        return len(self._records)

    def read(self, record: int) -> bytes:
        self._check(record)
        return self._records[record]

    def write(self, record: int, data: bytes) -> None:
        self._check(record)
        if len(data) != RECORD_SIZE:
            raise SizeError(f"record payload must be {RECORD_SIZE} bytes, got {len(data)}")
        self._records[record] = bytes(data)

    def write_byte(self, record: int, offset: int, value: int) -> None:
        """Replace one byte of a record, preserving the rest.

        The receive path of the communication engine stores arriving bytes
        slot by slot, so partial updates are a protocol fact, not a bug.
        """
        self._check(record)
        if not 0 <= offset < RECORD_SIZE:
            raise SizeError(f"byte offset {offset} outside record")
        current = bytearray(self._records[record])
        current[offset] = value & 0xFF
        self._records[record] = bytes(current)

    def _check(self, record: int) -> None:
        if not 0 <= record < len(self._records):
            raise AddressError(f"file {self.number} has no record {record}")


class InterfaceFileSystem:
    """All files of one node, plus the execute bindings on its records.

    Execute bindings are registered while the node is built, never over the
    wire. An execute produces a small result token so callers can confirm
    the action ran.
    """

    def __init__(self):
        self._files: Dict[int, IfsFile] = {}
        self._bindings: Dict[tuple, tuple] = {}

    @classmethod
    def standard(cls) -> "InterfaceFileSystem":
        """File system with the three system files every node carries."""
        fs = cls()
        fs.add_file(CONFIG_FILE, CONFIG_FILE_RECORDS, Section.CP)
        fs.add_file(DOC_FILE, DOC_FILE_RECORDS, Section.DM)
        fs.add_file(STATUS_FILE, STATUS_FILE_RECORDS, Section.CP)
        return fs

    def add_file(self, number: int, record_count: int, section: Section) -> IfsFile:
        if number in self._files:
            raise AddressError(f"file {number} already exists")
        if len(self._files) >= MAX_FILES:
            raise RangeError(f"node cannot hold more than {MAX_FILES} files")
        f = IfsFile(number, record_count, section)
        self._files[number] = f
        return f

    def file(self, number: int) -> IfsFile:
        try:
            return self._files[number]
        except KeyError:
            raise AddressError(f"no file {number} at this node") from None

    def files(self):
        return sorted(self._files)

    def has_record(self, file: int, record: int) -> bool:
        f = self._files.get(file)
        return f is not None and 0 <= record < len(f)

    def pull_record(self, file: int, record: int) -> bytes:
        """Non-consuming read; repeated pulls return the same bytes."""
        return self.file(file).read(record)

    def push_record(self, file: int, record: int, data: bytes) -> None:
        """Replace a whole record atomically."""
        self.file(file).write(record, data)

    def bind_execute(self, file: int, record: int, name: str,
                     action: Optional[Callable[[], object]] = None) -> None:
        f = self.file(file)
        f._check(record)
        self._bindings[(file, record)] = (name, action)

    def execute_record(self, file: int, record: int) -> object:
        """Run the action bound to a record and return its result token."""
        f = self.file(file)
        f._check(record)
        binding = self._bindings.get((file, record))
        if binding is None:
            raise NotExecutableError(f"no execute binding on {file}:{record}")
        name, action = binding
        if action is None:
            return name
        result = action()
        return name if result is None else result

    def executable(self, file: int, record: int) -> bool:
        return (file, record) in self._bindings
