"""Byte-level codecs: round triggers, maintenance frames, record packing.

The round-trigger codebook is generated, not hand-typed. We take the 16
codewords of the extended Hamming [8,4,4] code (data nibble high, parity
nibble low), drop 0x00 and 0xFF, then drop the six lexicographically
largest of the rest. The surviving eight bytes keep the code's minimum
pairwise Hamming distance of 4, so any corruption of up to three bits is
detected; decoding is pure error detection, never correction.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Iterable, Tuple

from .errors import (
    FireworksDecodeError,
    FrameChecksumError,
    FrameFormatError,
    RangeError,
    SizeError,
)
from .ifs import RECORD_SIZE

CHECKSUM_SEED = 0xA5
EXEC_ACK = 0xAC        # first byte of an execute acknowledgment frame
PROBE_RESPONSE = 0xAC  # single reply byte of an enumeration probe

MS_FRAME_LEN = 5       # four payload bytes plus checksum

# Generator rows of the extended Hamming [8,4] code, one per data bit,
# data bit in the high nibble and its parity pattern in the low nibble.
_HAMMING_ROWS = (0x87, 0x4B, 0x2D, 0x1E)


def _extended_hamming_codewords() -> Tuple[int, ...]:
    words = []
    for nibble in range(16):
        word = 0
        for bit, row in enumerate(_HAMMING_ROWS):
            if nibble & (1 << (3 - bit)):
                word ^= row
        words.append(word)
    return tuple(sorted(words))


def _build_codebook() -> Tuple[int, ...]:
    survivors = [w for w in _extended_hamming_codewords() if w not in (0x00, 0xFF)]
    return tuple(sorted(survivors)[:8])


FIREWORKS_CODEBOOK: Tuple[int, ...] = _build_codebook()
_FIREWORKS_REVERSE = {byte: rid for rid, byte in enumerate(FIREWORKS_CODEBOOK)}


def fireworks_encode(round_id: int) -> int:
    """Codeword announcing the given round (0..5 data, 6..7 maintenance)."""
    if not 0 <= round_id < len(FIREWORKS_CODEBOOK):
        raise RangeError(f"round id {round_id} outside 0..{len(FIREWORKS_CODEBOOK) - 1}")
    return FIREWORKS_CODEBOOK[round_id]


def fireworks_decode(byte: int) -> int:
    """Round id for a received trigger byte; reject anything off-codebook."""
    if not 0 <= byte <= 0xFF:
        raise RangeError(f"byte {byte} outside 0..255")
    try:
        return _FIREWORKS_REVERSE[byte]
    except KeyError:
        raise FireworksDecodeError(f"0x{byte:02X} is not a round trigger") from None


def checksum(data: Iterable[int]) -> int:
    """XOR of all bytes, seeded with 0xA5 so all-zero frames do not pass."""
    acc = CHECKSUM_SEED
    count = 0
    for b in data:
        acc ^= b & 0xFF
        count += 1
    if count == 0:
        raise SizeError("checksum over empty byte sequence")
    return acc


class MsAction(IntEnum):
    """Operation requested by a maintenance address frame."""

    READ = 0b00
    WRITE = 0b01
    EXECUTE = 0b10


def encode_ms_address(action: MsAction, alias: int, file: int, record: int) -> bytes:
    """Five-byte address frame: alias, action+file, record, reserved, checksum."""
    if not 0 <= alias <= 0xFF:
        raise RangeError(f"alias {alias} outside 0..255")
    if not 0 <= file < 64:
        raise RangeError(f"file {file} outside 0..63")
    if not 0 <= record <= 0xFF:
        raise RangeError(f"record {record} outside 0..255")
    body = bytes([alias, (int(action) << 6) | file, record, 0x00])
    return body + bytes([checksum(body)])


def decode_ms_address(frame: bytes) -> Tuple[MsAction, int, int, int]:
    """Inverse of encode_ms_address; returns (action, alias, file, record)."""
    if len(frame) != MS_FRAME_LEN:
        raise SizeError(f"address frame must be {MS_FRAME_LEN} bytes, got {len(frame)}")
    if checksum(frame[:4]) != frame[4]:
        raise FrameChecksumError("address frame checksum mismatch")
    action_bits = frame[1] >> 6
    try:
        action = MsAction(action_bits)
    except ValueError:
        raise FrameFormatError(f"unknown action code {action_bits:#04b}") from None
    return action, frame[0], frame[1] & 0x3F, frame[2]


def encode_ms_data(data: bytes) -> bytes:
    """Five-byte data frame: one record plus checksum."""
    if len(data) != RECORD_SIZE:
        raise SizeError(f"data frame carries {RECORD_SIZE} bytes, got {len(data)}")
    return bytes(data) + bytes([checksum(data)])


def decode_ms_data(frame: bytes) -> bytes:
    if len(frame) != MS_FRAME_LEN:
        raise SizeError(f"data frame must be {MS_FRAME_LEN} bytes, got {len(frame)}")
    if checksum(frame[:4]) != frame[4]:
        raise FrameChecksumError("data frame checksum mismatch")
    return bytes(frame[:4])


def exec_ack_frame() -> bytes:
    return encode_ms_data(bytes([EXEC_ACK, 0, 0, 0]))


# Packed schedule entries, as staged into a node's configuration file
# during a download. One record per entry:
#   byte 0: round id (3 bits) | kind (2 bits) | length-1 (3 bits)
#   byte 1: slot index
#   byte 2: file
#   byte 3: record
# kind 3 is a pseudo entry declaring a round's total slot count in byte 1.

RODL_KIND_SEND = 0
RODL_KIND_RECEIVE = 1
RODL_KIND_EXECUTE = 2
RODL_KIND_ROUND_LEN = 3


def encode_rodl_record(round_id: int, kind: int, slot: int, length: int,
                       file: int, record: int) -> bytes:
    if not 0 <= round_id < 8:
        raise RangeError(f"round id {round_id} outside 0..7")
    if not 0 <= kind <= 3:
        raise RangeError(f"entry kind {kind} outside 0..3")
    if not 1 <= length <= 4:
        raise RangeError(f"entry length {length} outside 1..4")
    if not 0 <= slot <= 0xFF:
        raise RangeError(f"slot {slot} outside 0..255")
    if not 0 <= file < 64 or not 0 <= record <= 0xFF:
        raise RangeError(f"bad entry target {file}:{record}")
    return bytes([(round_id << 5) | (kind << 3) | (length - 1), slot, file, record])


def decode_rodl_record(data: bytes) -> Tuple[int, int, int, int, int, int]:
    """Returns (round_id, kind, slot, length, file, record)."""
    if len(data) != RECORD_SIZE:
        raise SizeError(f"schedule entry record must be {RECORD_SIZE} bytes")
    head = data[0]
    return head >> 5, (head >> 3) & 0x3, data[1], (head & 0x7) + 1, data[2], data[3]
