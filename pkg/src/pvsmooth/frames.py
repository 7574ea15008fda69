"""Bit-exact framed message codec for the plant/controller bus.

Wire layout (all integers little-endian, all floats IEEE-754 binary64 LE):

    offset  size  field
    0       4     magic 0x48 0x45 0x53 0x42 ("HESB")
    4       1     version (0x01)
    5       1     msg_type (0x01 SENSOR, 0x02 SETPOINT, 0x03 END, 0x04 FAULT)
    6       4     seq, u32
    10      8     sim_time_ms, u64
    18      2     payload_len, u16 (bytes)
    20      var   payload: float64 values
                    SENSOR   [p_pv_w, v_batt_v]   16 bytes
                    SETPOINT [i_set_a]             8 bytes
                    END/FAULT (empty)              0 bytes
    20+var  4     crc32 over ALL preceding bytes (IEEE 802.3 polynomial,
                  reflected, init 0xFFFFFFFF, final xor 0xFFFFFFFF; this is
                  exactly zlib.crc32)

Total frame length = 20 + payload_len + 4. Decode errors are distinct and
checked in a fixed order: truncation, magic, version, declared length,
crc, message type, payload shape.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

from .util import atomic_write_text

MAGIC = b"HESB"
VERSION = 0x01
HEADER_LEN = 20
CRC_LEN = 4

MSG_SENSOR = 0x01
MSG_SETPOINT = 0x02
MSG_END = 0x03
MSG_FAULT = 0x04

MSG_NAMES = {MSG_SENSOR: "SENSOR", MSG_SETPOINT: "SETPOINT", MSG_END: "END", MSG_FAULT: "FAULT"}
PAYLOAD_COUNTS = {MSG_SENSOR: 2, MSG_SETPOINT: 1, MSG_END: 0, MSG_FAULT: 0}

_HEADER = struct.Struct("<4sBBIQH")


class FrameError(ValueError):
    """Base class for every frame encode/decode failure."""


class FrameTruncated(FrameError):
    pass


class BadMagic(FrameError):
    pass


class BadVersion(FrameError):
    pass


class BadCrc(FrameError):
    pass


class UnknownMessageType(FrameError):
    pass


class PayloadMismatch(FrameError):
    pass


@dataclass(frozen=True)
class BusFrame:
    """One decoded bus message."""

    msg_type: int
    seq: int
    sim_time_ms: int
    values: tuple[float, ...] = ()

    @property
    def type_name(self) -> str:
        return MSG_NAMES.get(self.msg_type, f"0x{self.msg_type:02x}")


def sensor_frame(seq: int, sim_time_ms: int, p_pv_w: float, v_batt_v: float) -> BusFrame:
    return BusFrame(MSG_SENSOR, seq, sim_time_ms, (float(p_pv_w), float(v_batt_v)))


def setpoint_frame(seq: int, sim_time_ms: int, i_set_a: float) -> BusFrame:
    return BusFrame(MSG_SETPOINT, seq, sim_time_ms, (float(i_set_a),))


def end_frame(seq: int, sim_time_ms: int) -> BusFrame:
    return BusFrame(MSG_END, seq, sim_time_ms)


def fault_frame(seq: int, sim_time_ms: int) -> BusFrame:
    return BusFrame(MSG_FAULT, seq, sim_time_ms)


def encode_frame(frame: BusFrame) -> bytes:
    """Serialize to the wire layout. Deterministic: equal frames, equal bytes."""
    expected = PAYLOAD_COUNTS.get(frame.msg_type)
    if expected is None:
        raise UnknownMessageType(f"cannot encode msg_type 0x{frame.msg_type:02x}")
    if len(frame.values) != expected:
        raise PayloadMismatch(
            f"{frame.type_name} carries {expected} values, got {len(frame.values)}"
        )
    if not 0 <= frame.seq <= 0xFFFFFFFF:
        raise FrameError(f"seq {frame.seq} outside u32 range")
    if not 0 <= frame.sim_time_ms <= 0xFFFFFFFFFFFFFFFF:
        raise FrameError(f"sim_time_ms {frame.sim_time_ms} outside u64 range")
    payload = struct.pack(f"<{len(frame.values)}d", *frame.values)
    head = _HEADER.pack(MAGIC, VERSION, frame.msg_type, frame.seq, frame.sim_time_ms, len(payload))
    body = head + payload
    return body + struct.pack("<I", zlib.crc32(body))


def decode_frame(data: bytes) -> BusFrame:
    """Parse one frame from an exact byte buffer; inverse of encode_frame."""
    if len(data) < HEADER_LEN:
        raise FrameTruncated(f"need {HEADER_LEN} header bytes, got {len(data)}")
    magic, version, msg_type, seq, sim_time_ms, payload_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersion(f"unsupported version 0x{version:02x}")
    total = HEADER_LEN + payload_len + CRC_LEN
    if len(data) < total:
        raise FrameTruncated(f"declared {total} bytes, got {len(data)}")
    if len(data) > total:
        raise FrameTruncated(f"declared {total} bytes, got {len(data)} (trailing bytes)")
    (crc_stored,) = struct.unpack_from("<I", data, total - CRC_LEN)
    crc_actual = zlib.crc32(data[: total - CRC_LEN])
    if crc_stored != crc_actual:
        raise BadCrc(f"crc mismatch: stored 0x{crc_stored:08x}, computed 0x{crc_actual:08x}")
    expected = PAYLOAD_COUNTS.get(msg_type)
    if expected is None:
        raise UnknownMessageType(f"unknown msg_type 0x{msg_type:02x}")
    if payload_len != expected * 8:
        raise PayloadMismatch(
            f"{MSG_NAMES[msg_type]} payload must be {expected * 8} bytes, got {payload_len}"
        )
    values = struct.unpack_from(f"<{expected}d", data, HEADER_LEN)
    return BusFrame(msg_type, seq, sim_time_ms, tuple(values))


def frame_length(header: bytes) -> int:
    """Total frame size implied by a header (for stream reads)."""
    if len(header) < HEADER_LEN:
        raise FrameTruncated(f"need {HEADER_LEN} header bytes, got {len(header)}")
    (payload_len,) = struct.unpack_from("<H", header, 18)
    return HEADER_LEN + payload_len + CRC_LEN


# ---------------------------------------------------------------------------
# Hex-dump logs for conformance checks
# ---------------------------------------------------------------------------


def hexdump_lines(tagged_frames: list[tuple[str, bytes]]) -> list[str]:
    """One `tag hex` line per frame; stable text form of a frame log."""
    return [f"{tag} {data.hex()}" for tag, data in tagged_frames]


def write_hexdump(tagged_frames: list[tuple[str, bytes]], path: str | Path) -> None:
    atomic_write_text(path, "\n".join(hexdump_lines(tagged_frames)) + "\n")


def read_hexdump(path: str | Path) -> list[tuple[str, bytes]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        tag, hexpart = line.rsplit(" ", 1)
        out.append((tag, bytes.fromhex(hexpart)))
    return out
