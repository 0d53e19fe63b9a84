"""Wire format for protocol messages and the session handshake.

Every frame is a fixed 32-byte little-endian header, followed by one u32
per tensor dimension, followed by the packed payload::

    offset size field
    0      4    magic b"PLLM"
    4      2    version (u16)
    6      1    kind: phase (bits 0-1) | dtype (bits 2-3) | ndim (bits 4-7)
    7      1    protocol id
    8      16   session id
    24     4    step id (u32), strictly increasing per (sender, receiver, protocol)
    28     4    causal depth (u32), used for round accounting

The payload length is implied by the shape and dtype, so frames need no
extra length prefix.
"""

import struct
from dataclasses import dataclass
from enum import IntEnum
from math import prod

import numpy as np

from ..errors import DecodeError, VersionMismatchError
from ..roles import Role

MAGIC = b"PLLM"
VERSION = 1
HEADER = struct.Struct("<4sHBB16sII")
HEADER_SIZE = HEADER.size
MAX_NDIM = 15


class Phase(IntEnum):
    PREPARATION = 0
    OFFLINE = 1
    ONLINE = 2


class ProtocolId(IntEnum):
    CONTROL = 0
    MUL_FIXED = 1
    MUL_GROWING = 2
    PERM = 3
    NONLINEAR = 4
    PREDICTION = 5


class DType(IntEnum):
    F32 = 0
    U64 = 1
    BYTES = 2
    F64 = 3

    @property
    def width(self):
        return _WIDTH[self]

    @property
    def numpy(self):
        return _NUMPY[self]


_WIDTH = {DType.F32: 4, DType.U64: 8, DType.BYTES: 1, DType.F64: 8}
_NUMPY = {DType.F32: np.dtype("<f4"), DType.U64: np.dtype("<u8"),
          DType.BYTES: np.dtype("u1"), DType.F64: np.dtype("<f8")}


@dataclass
class Message:
    session_id: bytes
    phase: Phase
    protocol: ProtocolId
    dtype: DType
    shape: tuple
    payload: bytes
    step_id: int = 0
    depth: int = 0

    def __post_init__(self):
        self.phase = Phase(self.phase)
        self.protocol = ProtocolId(self.protocol)
        self.dtype = DType(self.dtype)
        self.shape = tuple(int(s) for s in self.shape)
        if len(self.session_id) != 16:
            raise DecodeError("session id must be 16 bytes")
        if len(self.shape) > MAX_NDIM:
            raise DecodeError(f"at most {MAX_NDIM} dimensions are encodable")
        if len(self.payload) != payload_size(self.dtype, self.shape):
            raise DecodeError(
                f"payload of {len(self.payload)} bytes does not match "
                f"{self.dtype.name} tensor of shape {self.shape}"
            )

    @classmethod
    def from_array(cls, session_id, phase, protocol, array, dtype=DType.F32):
        dtype = DType(dtype)
        arr = np.ascontiguousarray(array, dtype=dtype.numpy)
        return cls(session_id, phase, protocol, dtype, arr.shape, arr.tobytes())

    @classmethod
    def from_bytes(cls, session_id, phase, protocol, data: bytes):
        return cls(session_id, phase, protocol, DType.BYTES, (len(data),), bytes(data))

    def array(self):
        """Payload as a read-only numpy array of the declared shape."""
        return np.frombuffer(self.payload, dtype=self.dtype.numpy).reshape(self.shape)

    @property
    def nbytes(self):
        return HEADER_SIZE + 4 * len(self.shape) + len(self.payload)

    def encode(self) -> bytes:
        kind = int(self.phase) | (int(self.dtype) << 2) | (len(self.shape) << 4)
        head = HEADER.pack(MAGIC, VERSION, kind, int(self.protocol), self.session_id,
                           self.step_id, self.depth)
        dims = struct.pack(f"<{len(self.shape)}I", *self.shape)
        return b"".join((head, dims, self.payload))


def payload_size(dtype, shape):
    return DType(dtype).width * int(prod(shape))


def parse_header(head: bytes):
    """Decode the fixed header; returns ``(fields, ndim)``."""
    if len(head) < HEADER_SIZE:
        raise DecodeError("truncated header")
    magic, version, kind, protocol, sid, step, depth = HEADER.unpack_from(head)
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"wire version {version}, expected {VERSION}")
    try:
        fields = dict(phase=Phase(kind & 0x3), dtype=DType((kind >> 2) & 0x3),
                      protocol=ProtocolId(protocol), session_id=sid,
                      step_id=step, depth=depth)
    except ValueError as exc:
        raise DecodeError(str(exc)) from exc
    return fields, kind >> 4


def decode(frame: bytes) -> Message:
    fields, ndim = parse_header(frame)
    end = HEADER_SIZE + 4 * ndim
    if len(frame) < end:
        raise DecodeError("truncated shape")
    shape = struct.unpack_from(f"<{ndim}I", frame, HEADER_SIZE)
    payload = frame[end:]
    return Message(shape=shape, payload=bytes(payload), **fields)


# handshake: magic, version, role, status, session id, length-prefixed HE block
HELLO = struct.Struct("<4sHBB16sH")


class HelloStatus(IntEnum):
    OK = 0
    DUPLICATE_ROLE = 1
    SESSION_MISMATCH = 2
    VERSION_MISMATCH = 3
    PARAMS_MISMATCH = 4


def encode_hello(role, session_id, params_block=b"", status=HelloStatus.OK,
                 version=VERSION):
    return HELLO.pack(MAGIC, version, int(role), int(status), session_id,
                      len(params_block)) + params_block


def decode_hello_head(head: bytes):
    magic, version, role, status, sid, plen = HELLO.unpack(head)
    if magic != MAGIC:
        raise DecodeError(f"bad handshake magic {magic!r}")
    return dict(version=version, role=Role(role), status=HelloStatus(status),
                session_id=sid, params_len=plen)
