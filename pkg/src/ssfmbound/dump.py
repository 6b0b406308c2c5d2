"""Binary field dumps.

Layout (all little-endian)::

    offset  size  field
    0       8     magic  b"SSFMDMP1"
    8       8     L      uint64, samples per field
    16      8     K      uint64, number of space steps of the run
    24      4     flags  uint32, bit 0 set: every position 0..K stored,
                         clear: positions 0 and K only
    28      4     M      uint32, realizations per position
    32      ...   payload: float64 array of shape (P, M, L, 2) holding
                  interleaved (re, im), P = K + 1 or 2
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .engine import PropagationRecord
from .field import as_array

MAGIC = b"SSFMDMP1"
HEADER = struct.Struct("<8sQQII")
FLAG_TRAJECTORY = 1


class DumpFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FieldDump:
    num_samples: int
    num_steps: int
    flags: int
    fields: np.ndarray  # (P, M, L) complex

    @property
    def positions(self) -> list:
        if self.flags & FLAG_TRAJECTORY:
            return list(range(self.num_steps + 1))
        return [0, self.num_steps]


def encode(fields: np.ndarray, num_steps: int, flags: int) -> bytes:
    fields = np.asarray(fields, dtype=complex)
    if fields.ndim != 3:
        raise DumpFormatError("fields must have shape (positions, M, L)")
    p, m, L = fields.shape
    payload = np.empty((p, m, L, 2), dtype="<f8")
    payload[..., 0] = fields.real
    payload[..., 1] = fields.imag
    return HEADER.pack(MAGIC, L, num_steps, flags, m) + payload.tobytes()


def record_to_bytes(record: PropagationRecord, num_steps: int) -> bytes:
    if record.trajectory is not None:
        stack = [as_array(f) for f in record.trajectory]
        flags = FLAG_TRAJECTORY
    else:
        stack = [as_array(record.input), as_array(record.output)]
        flags = 0
    stack = [s[None, :] if s.ndim == 1 else s for s in stack]
    return encode(np.stack(stack), num_steps, flags)


def write_record(path, record: PropagationRecord, num_steps: int) -> None:
    with open(path, "wb") as fh:
        fh.write(record_to_bytes(record, num_steps))


def decode(buf: bytes) -> FieldDump:
    if len(buf) < HEADER.size:
        raise DumpFormatError("truncated header")
    magic, L, K, flags, m = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise DumpFormatError(f"bad magic {magic!r}")
    p = K + 1 if flags & FLAG_TRAJECTORY else 2
    expected = HEADER.size + p * m * L * 16
    if len(buf) != expected:
        raise DumpFormatError(f"payload size {len(buf)} != expected {expected}")
    raw = np.frombuffer(buf, dtype="<f8", offset=HEADER.size).reshape(p, m, L, 2)
    return FieldDump(L, K, flags, raw[..., 0] + 1j * raw[..., 1])


def read(path) -> FieldDump:
    with open(path, "rb") as fh:
        return decode(fh.read())
