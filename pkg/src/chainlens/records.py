"""Packed record types for the on-disk transaction graph.

Every edge of the graph (an input or an output) is a fixed 16-byte record,
every transaction is a 12-byte header followed by its outputs and then its
inputs, and every block is a fixed 48-byte metadata record.  All integers are
little-endian.
"""

import struct
from dataclasses import dataclass, field
from enum import IntEnum

UNSPENT_SENTINEL = 0xFFFFFFFF
MAX_VALUE = (1 << 60) - 1

INOUT_SIZE = 16
TX_HEADER_SIZE = 12
BLOCK_RECORD_SIZE = 48

_INOUT = struct.Struct("<IIQ")
_TX_HEADER = struct.Struct("<IIHH")
_BLOCK = struct.Struct("<32sqII")


class AddressType(IntEnum):
    NONSTANDARD = 0
    PUBKEY = 1
    PUBKEYHASH = 2
    SCRIPTHASH = 3
    MULTISIG = 4
    NULLDATA = 5


class RangeError(ValueError):
    pass


class ConsistencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class InOutRecord:
    """One edge of the transaction graph.

    For an output, linked_tx_id is the ID of the spending transaction
    (UNSPENT_SENTINEL while unspent).  For an input, it is the ID of the
    transaction whose output is being spent.
    """

    linked_tx_id: int
    address_id: int
    value: int
    address_type: int

    def encode(self) -> bytes:
        if not 0 <= self.value <= MAX_VALUE:
            raise RangeError(f"value {self.value} outside 60-bit range")
        if not 0 <= self.address_type < 16:
            raise RangeError(f"address type code {self.address_type} outside 4-bit range")
        if not 0 <= self.linked_tx_id <= 0xFFFFFFFF:
            raise RangeError(f"linked tx id {self.linked_tx_id} outside 32-bit range")
        if not 0 <= self.address_id <= 0xFFFFFFFF:
            raise RangeError(f"address id {self.address_id} outside 32-bit range")
        word = self.value | (self.address_type << 60)
        return _INOUT.pack(self.linked_tx_id, self.address_id, word)

    @classmethod
    def decode(cls, buf, offset=0) -> "InOutRecord":
        linked, addr, word = _INOUT.unpack_from(buf, offset)
        return cls(linked, addr, word & MAX_VALUE, word >> 60)

    @property
    def spent(self) -> bool:
        return self.linked_tx_id != UNSPENT_SENTINEL


@dataclass
class TxRecord:
    """A transaction node: 12-byte header, then outputs, then inputs."""

    size: int
    locktime: int
    outputs: list
    inputs: list

    @property
    def input_count(self) -> int:
        return len(self.inputs)

    @property
    def output_count(self) -> int:
        return len(self.outputs)

    @property
    def is_coinbase(self) -> bool:
        return not self.inputs

    def record_length(self) -> int:
        return TX_HEADER_SIZE + INOUT_SIZE * (len(self.inputs) + len(self.outputs))

    def encode(self) -> bytes:
        if len(self.inputs) > 0xFFFF or len(self.outputs) > 0xFFFF:
            raise RangeError("input/output count exceeds 16-bit range")
        parts = [_TX_HEADER.pack(self.size, self.locktime,
                                 len(self.inputs), len(self.outputs))]
        parts.extend(o.encode() for o in self.outputs)
        parts.extend(i.encode() for i in self.inputs)
        return b"".join(parts)

    @classmethod
    def decode(cls, buf, offset=0) -> "TxRecord":
        size, locktime, n_in, n_out = _TX_HEADER.unpack_from(buf, offset)
        pos = offset + TX_HEADER_SIZE
        outputs = []
        for _ in range(n_out):
            outputs.append(InOutRecord.decode(buf, pos))
            pos += INOUT_SIZE
        inputs = []
        for _ in range(n_in):
            inputs.append(InOutRecord.decode(buf, pos))
            pos += INOUT_SIZE
        return cls(size, locktime, outputs, inputs)


@dataclass(frozen=True)
class BlockRecord:
    header_hash: bytes
    timestamp: int
    first_tx_id: int
    tx_count: int

    def encode(self) -> bytes:
        if len(self.header_hash) != 32:
            raise RangeError("block hash must be 32 bytes")
        return _BLOCK.pack(self.header_hash, self.timestamp,
                           self.first_tx_id, self.tx_count)

    @classmethod
    def decode(cls, buf, offset=0) -> "BlockRecord":
        h, ts, first, count = _BLOCK.unpack_from(buf, offset)
        return cls(h, ts, first, count)


@dataclass
class ChainStats:
    n_tx: int = 0
    n_in: int = 0
    n_out: int = 0


def predict_layout_sizes(stats: ChainStats) -> dict:
    """Predicted transaction-graph size in bytes under each storage layout.

    'current' is the layout actually written to disk: a 12-byte header plus
    an 8-byte offsets entry per transaction, and 16 bytes per edge.
    """
    t, i, o = stats.n_tx, stats.n_in, stats.n_out
    return {
        "current": 20 * t + 16 * i + 16 * o,
        "normalized": 20 * t + 8 * i + 16 * o,
        "64-bit": 20 * t + 24 * i + 24 * o,
        "fee-cached": 30 * t + 16 * i + 16 * o,
    }


# --- script payloads -------------------------------------------------------

@dataclass(frozen=True)
class PubkeyPayload:
    hash20: bytes
    pubkey: bytes | None = None


@dataclass(frozen=True)
class ScriptHashPayload:
    hash20: bytes
    nested_type: int
    nested_id: int


@dataclass(frozen=True)
class MultisigPayload:
    m: int
    n: int
    key_ids: tuple


@dataclass(frozen=True)
class DataPayload:
    """Raw bytes; used for both nulldata and nonstandard scripts."""
    data: bytes


def encode_script_payload(addr_type: int, payload) -> bytes:
    if addr_type in (AddressType.PUBKEY, AddressType.PUBKEYHASH):
        pk = payload.pubkey or b""
        return struct.pack("<20sH", payload.hash20, len(pk)) + pk
    if addr_type == AddressType.SCRIPTHASH:
        return struct.pack("<20sBI", payload.hash20, payload.nested_type,
                           payload.nested_id)
    if addr_type == AddressType.MULTISIG:
        if not 1 <= payload.m <= payload.n:
            raise RangeError(f"invalid multisig structure {payload.m}-of-{payload.n}")
        return struct.pack(f"<HH{payload.n}I", payload.m, payload.n,
                           *payload.key_ids)
    if addr_type in (AddressType.NULLDATA, AddressType.NONSTANDARD):
        return struct.pack("<H", len(payload.data)) + payload.data
    raise RangeError(f"unknown address type {addr_type}")


def decode_script_payload(addr_type: int, buf: bytes):
    if addr_type in (AddressType.PUBKEY, AddressType.PUBKEYHASH):
        h, n = struct.unpack_from("<20sH", buf)
        pk = bytes(buf[22:22 + n]) if n else None
        return PubkeyPayload(h, pk)
    if addr_type == AddressType.SCRIPTHASH:
        h, t, i = struct.unpack_from("<20sBI", buf)
        return ScriptHashPayload(h, t, i)
    if addr_type == AddressType.MULTISIG:
        m, n = struct.unpack_from("<HH", buf)
        keys = struct.unpack_from(f"<{n}I", buf, 4)
        return MultisigPayload(m, n, keys)
    if addr_type in (AddressType.NULLDATA, AddressType.NONSTANDARD):
        (n,) = struct.unpack_from("<H", buf)
        return DataPayload(bytes(buf[2:2 + n]))
    raise RangeError(f"unknown address type {addr_type}")
