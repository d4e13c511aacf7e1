"""Flat-file data directory holding the core blockchain data.

Layout:
    txdata.dat      append-only transaction table (variable-length records)
    txoffsets.dat   64-bit LE cumulative offsets; entry i is the start of tx i,
                    one trailing sentinel equals the total table length
    blocks.dat      fixed 48-byte block metadata records
    scripts/<t>.dat script payload table per address type (+ .off offsets)

Every file starts with the 8-byte magic+version header.  The table files only
ever grow by appends, plus length-preserving 4-byte edits when an output gets
spent, so concurrent readers can safely memory-map them.
"""

import fcntl
import os
import struct
from pathlib import Path

from .records import (
    AddressType, BlockRecord, ChainStats, ConsistencyError, InOutRecord,
    RangeError, TxRecord, BLOCK_RECORD_SIZE, INOUT_SIZE, TX_HEADER_SIZE,
    UNSPENT_SENTINEL,
)

MAGIC = b"CLNS\x00\x00\x00\x01"
HEADER_SIZE = len(MAGIC)

SCRIPT_FILES = {t: t.name.lower() for t in AddressType}


class StorageError(RuntimeError):
    pass


class _Table:
    """An append-only byte table with a sibling cumulative-offset file."""

    def __init__(self, data_path: Path, off_path: Path, create: bool):
        self.data_path = data_path
        self.off_path = off_path
        if create and not data_path.exists():
            data_path.write_bytes(MAGIC)
            off_path.write_bytes(MAGIC + struct.pack("<Q", 0))
        self.df = open(data_path, "r+b")
        self.of = open(off_path, "r+b")
        for f, p in ((self.df, data_path), (self.of, off_path)):
            if f.read(HEADER_SIZE) != MAGIC:
                raise StorageError(f"bad magic in {p}")
        # cumulative offsets, offsets[0] == 0, offsets[-1] == payload length
        self.of.seek(0, os.SEEK_END)
        n = (self.of.tell() - HEADER_SIZE) // 8
        self.of.seek(HEADER_SIZE)
        raw = self.of.read(8 * n)
        self.offsets = list(struct.unpack(f"<{n}Q", raw))

    @property
    def count(self) -> int:
        return len(self.offsets) - 1

    def append(self, data: bytes) -> int:
        idx = self.count
        self.df.seek(HEADER_SIZE + self.offsets[-1])
        self.df.write(data)
        self.of.seek(0, os.SEEK_END)
        self.of.write(struct.pack("<Q", self.offsets[-1] + len(data)))
        self.offsets.append(self.offsets[-1] + len(data))
        return idx

    def read(self, idx: int) -> bytes:
        if not 0 <= idx < self.count:
            raise RangeError(f"record {idx} out of range (count {self.count})")
        self.df.seek(HEADER_SIZE + self.offsets[idx])
        return self.df.read(self.offsets[idx + 1] - self.offsets[idx])

    def write_at(self, idx: int, rel_offset: int, data: bytes):
        """Length-preserving in-place edit within record idx."""
        start = self.offsets[idx] + rel_offset
        if start + len(data) > self.offsets[idx + 1]:
            raise RangeError("edit crosses record boundary")
        self.df.seek(HEADER_SIZE + start)
        self.df.write(data)

    def read_at(self, idx: int, rel_offset: int, n: int) -> bytes:
        self.df.seek(HEADER_SIZE + self.offsets[idx] + rel_offset)
        return self.df.read(n)

    def truncate(self, count: int):
        if not 0 <= count <= self.count:
            raise RangeError(f"cannot truncate to {count} records")
        del self.offsets[count + 1:]
        self.df.truncate(HEADER_SIZE + self.offsets[-1])
        self.of.truncate(HEADER_SIZE + 8 * (count + 1))

    def payload_bytes(self) -> int:
        return self.offsets[-1]

    def flush(self):
        self.df.flush()
        self.of.flush()

    def close(self):
        self.df.close()
        self.of.close()


class DataDir:
    """Writer-side handle on a chainlens data directory.

    There is a single writer at a time (enforced with an advisory lock file);
    analysis reads go through memory-mapped views instead (see view.py).
    """

    def __init__(self, path, create=True, lock=True):
        self.path = Path(path)
        if create:
            (self.path / "scripts").mkdir(parents=True, exist_ok=True)
        elif not self.path.is_dir():
            raise StorageError(f"no data directory at {self.path}")
        self._lockfile = None
        if lock:
            self._lockfile = open(self.path / ".lock", "w")
            try:
                fcntl.flock(self._lockfile, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except OSError:
                raise StorageError(f"data directory {self.path} already has a writer")
        self.txs = _Table(self.path / "txdata.dat",
                          self.path / "txoffsets.dat", create)
        bpath = self.path / "blocks.dat"
        if create and not bpath.exists():
            bpath.write_bytes(MAGIC)
        self.bf = open(bpath, "r+b")
        if self.bf.read(HEADER_SIZE) != MAGIC:
            raise StorageError(f"bad magic in {bpath}")
        self.scripts = {
            t: _Table(self.path / "scripts" / f"{name}.dat",
                      self.path / "scripts" / f"{name}.off", create)
            for t, name in SCRIPT_FILES.items()
        }

    # --- transactions ---

    @property
    def tx_count(self) -> int:
        return self.txs.count

    def append_tx(self, tx: TxRecord) -> int:
        return self.txs.append(tx.encode())

    def read_tx(self, tx_id: int) -> TxRecord:
        return TxRecord.decode(self.txs.read(tx_id))

    def _output_pos(self, tx_id: int, out_index: int) -> int:
        hdr = self.txs.read_at(tx_id, 0, TX_HEADER_SIZE)
        _, _, n_in, n_out = struct.unpack("<IIHH", hdr)
        if out_index >= n_out:
            raise RangeError(f"output {out_index} out of range for tx {tx_id} "
                             f"({n_out} outputs)")
        return TX_HEADER_SIZE + INOUT_SIZE * out_index

    def read_output(self, tx_id: int, out_index: int) -> InOutRecord:
        pos = self._output_pos(tx_id, out_index)
        return InOutRecord.decode(self.txs.read_at(tx_id, pos, INOUT_SIZE))

    def mark_output_spent(self, tx_id: int, out_index: int, spender_tx_id: int):
        pos = self._output_pos(tx_id, out_index)
        (current,) = struct.unpack("<I", self.txs.read_at(tx_id, pos, 4))
        if current != UNSPENT_SENTINEL:
            raise ConsistencyError(
                f"output {tx_id}:{out_index} already spent by tx {current}")
        self.txs.write_at(tx_id, pos, struct.pack("<I", spender_tx_id))

    def unmark_output_spent(self, tx_id: int, out_index: int):
        pos = self._output_pos(tx_id, out_index)
        self.txs.write_at(tx_id, pos, struct.pack("<I", UNSPENT_SENTINEL))

    def truncate_txs(self, count: int):
        self.txs.truncate(count)

    # --- blocks ---

    @property
    def block_count(self) -> int:
        self.bf.seek(0, os.SEEK_END)
        return (self.bf.tell() - HEADER_SIZE) // BLOCK_RECORD_SIZE

    def append_block(self, block: BlockRecord):
        self.bf.seek(0, os.SEEK_END)
        self.bf.write(block.encode())

    def read_block(self, height: int) -> BlockRecord:
        if not 0 <= height < self.block_count:
            raise RangeError(f"block height {height} out of range")
        self.bf.seek(HEADER_SIZE + BLOCK_RECORD_SIZE * height)
        return BlockRecord.decode(self.bf.read(BLOCK_RECORD_SIZE))

    def truncate_blocks(self, count: int):
        if not 0 <= count <= self.block_count:
            raise RangeError(f"cannot truncate blocks to {count}")
        self.bf.truncate(HEADER_SIZE + BLOCK_RECORD_SIZE * count)

    # --- script payload tables ---

    def append_script(self, addr_type: int, payload: bytes) -> int:
        return self.scripts[AddressType(addr_type)].append(payload)

    def read_script(self, addr_type: int, script_id: int) -> bytes:
        return self.scripts[AddressType(addr_type)].read(script_id)

    def script_count(self, addr_type: int) -> int:
        return self.scripts[AddressType(addr_type)].count

    def script_counts(self) -> dict:
        return {int(t): tab.count for t, tab in self.scripts.items()}

    def truncate_scripts(self, addr_type: int, count: int):
        self.scripts[AddressType(addr_type)].truncate(count)

    # --- accounting ---

    def stats(self) -> ChainStats:
        """Edge counts, by a sequential header scan of the tx table."""
        stats = ChainStats(n_tx=self.tx_count)
        for i in range(self.tx_count):
            hdr = self.txs.read_at(i, 0, TX_HEADER_SIZE)
            _, _, n_in, n_out = struct.unpack("<IIHH", hdr)
            stats.n_in += n_in
            stats.n_out += n_out
        return stats

    def storage_bytes(self) -> int:
        """Tx table plus offsets-entry bytes (excluding the fixed per-file
        magic header and the single sentinel offset)."""
        return self.txs.payload_bytes() + 8 * self.tx_count

    def flush(self):
        self.txs.flush()
        self.bf.flush()
        for t in self.scripts.values():
            t.flush()

    def close(self):
        self.flush()
        self.txs.close()
        self.bf.close()
        for t in self.scripts.values():
            t.close()
        if self._lockfile:
            self._lockfile.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
