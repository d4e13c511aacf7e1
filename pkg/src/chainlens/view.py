"""Read-only, snapshot-consistent analysis layer.

A ChainView memory-maps the data directory at a fixed maximum height.  The
on-disk files keep growing (and old outputs get spent in place) under the
single writer, but the view rewrites any output spent at or beyond its
max_tx_id bound to look unspent, so every query sees one immutable chain
state.  Block-order tx IDs make the bound a single integer comparison.
"""

import mmap
import multiprocessing
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .records import (
    BlockRecord, InOutRecord, RangeError, TxRecord, BLOCK_RECORD_SIZE,
    INOUT_SIZE, TX_HEADER_SIZE, UNSPENT_SENTINEL,
)
from .storage import HEADER_SIZE, MAGIC, StorageError

_TX_HEADER = struct.Struct("<IIHH")
_INOUT = struct.Struct("<IIQ")
_VALUE_MASK = (1 << 60) - 1

_BLOCK_DTYPE = np.dtype({
    "names": ["hash", "timestamp", "first_tx_id", "tx_count"],
    "formats": ["V32", "<i8", "<u4", "<u4"],
    "offsets": [0, 32, 40, 44],
    "itemsize": BLOCK_RECORD_SIZE,
})


class ReorgError(RuntimeError):
    pass


def _map_file(path: Path):
    with open(path, "rb") as f:
        head = f.read(HEADER_SIZE)
        if head != MAGIC:
            raise StorageError(f"bad magic in {path}")
        f.seek(0, 2)
        if f.tell() == HEADER_SIZE:
            return b""
        return mmap.mmap(f.fileno(), 0, prot=mmap.PROT_READ)


class TxHandle:
    """Lazy accessor for one transaction inside a view."""

    __slots__ = ("view", "tx_id", "_offset")

    def __init__(self, view, tx_id, offset):
        self.view = view
        self.tx_id = tx_id
        self._offset = offset

    def _header(self):
        return _TX_HEADER.unpack_from(self.view.txdata, self._offset)

    @property
    def size(self):
        return self._header()[0]

    @property
    def locktime(self):
        return self._header()[1]

    @property
    def input_count(self):
        return self._header()[2]

    @property
    def output_count(self):
        return self._header()[3]

    @property
    def is_coinbase(self):
        return self.input_count == 0

    def _edge(self, pos):
        linked, addr, word = _INOUT.unpack_from(self.view.txdata, pos)
        return linked, addr, word & _VALUE_MASK, word >> 60

    @property
    def outputs(self):
        _, _, n_in, n_out = self._header()
        bound = self.view.max_tx_id
        out = []
        pos = self._offset + TX_HEADER_SIZE
        for _ in range(n_out):
            linked, addr, value, atype = self._edge(pos)
            if linked != UNSPENT_SENTINEL and linked >= bound:
                linked = UNSPENT_SENTINEL     # spent beyond the snapshot
            out.append(InOutRecord(linked, addr, value, atype))
            pos += INOUT_SIZE
        return out

    @property
    def inputs(self):
        _, _, n_in, n_out = self._header()
        pos = self._offset + TX_HEADER_SIZE + INOUT_SIZE * n_out
        res = []
        for _ in range(n_in):
            linked, addr, value, atype = self._edge(pos)
            res.append(InOutRecord(linked, addr, value, atype))
            pos += INOUT_SIZE
        return res

    def total_out(self) -> int:
        _, _, _, n_out = self._header()
        pos = self._offset + TX_HEADER_SIZE
        return sum(self._edge(pos + INOUT_SIZE * i)[2] for i in range(n_out))

    def total_in(self) -> int:
        _, _, n_in, n_out = self._header()
        pos = self._offset + TX_HEADER_SIZE + INOUT_SIZE * n_out
        return sum(self._edge(pos + INOUT_SIZE * i)[2] for i in range(n_in))

    def fee(self) -> int:
        """Input total minus output total; coinbase fee is defined as 0."""
        if self.is_coinbase:
            return 0
        return self.total_in() - self.total_out()

    @property
    def height(self) -> int:
        return self.view.height_of_tx(self.tx_id)

    def record(self) -> TxRecord:
        size, locktime, _, _ = self._header()
        return TxRecord(size, locktime, self.outputs, self.inputs)


class BlockHandle:
    __slots__ = ("view", "height")

    def __init__(self, view, height):
        self.view = view
        self.height = height

    @property
    def _row(self):
        return self.view._blocks[self.height]

    @property
    def hash(self) -> bytes:
        return bytes(self._row["hash"])

    @property
    def timestamp(self) -> int:
        return int(self._row["timestamp"])

    @property
    def first_tx_id(self) -> int:
        return int(self._row["first_tx_id"])

    @property
    def tx_count(self) -> int:
        return int(self._row["tx_count"])

    def txs(self):
        first = self.first_tx_id
        for tx_id in range(first, first + self.tx_count):
            yield self.view.tx(tx_id)

    def total_out(self) -> int:
        return sum(t.total_out() for t in self.txs())

    def __iter__(self):
        return self.txs()


class ChainView:
    def __init__(self, data_dir, reorg_margin=6, max_height=None):
        self.path = Path(data_dir)
        self.reorg_margin = reorg_margin
        self.txdata = _map_file(self.path / "txdata.dat")
        offbuf = _map_file(self.path / "txoffsets.dat")
        if isinstance(offbuf, bytes):
            offsets = np.zeros(0, dtype="<u8")
        else:
            offsets = np.frombuffer(offbuf, dtype="<u8", offset=HEADER_SIZE)
        blockbuf = _map_file(self.path / "blocks.dat")
        if isinstance(blockbuf, bytes):
            self._blocks = np.zeros(0, dtype=_BLOCK_DTYPE)
        else:
            # materialized copy: block metadata and offsets are part of the
            # snapshot and must not reflect later on-disk changes
            self._blocks = np.array(np.frombuffer(blockbuf, dtype=_BLOCK_DTYPE,
                                                  offset=HEADER_SIZE))
        disk_height = len(self._blocks) - 1
        if max_height is None:
            max_height = disk_height - reorg_margin
        elif max_height > disk_height:
            raise RangeError(f"height {max_height} beyond disk height "
                             f"{disk_height}")
        self.max_height = max(max_height, -1)
        if self.max_height >= 0:
            row = self._blocks[self.max_height]
            self.max_tx_id = int(row["first_tx_id"]) + int(row["tx_count"])
        else:
            self.max_tx_id = 0
        self._offsets = np.array(offsets[:self.max_tx_id + 1])
        self._first_tx_ids = self._blocks["first_tx_id"][:self.max_height + 1] \
            .astype(np.int64)
        self._columns = None

    # --- identity / reorg safety ---

    def block_hashes(self):
        return [bytes(self._blocks[h]["hash"]) for h in range(self.max_height + 1)]

    def check_superset_of(self, prior: "ChainView"):
        if self.max_height < prior.max_height:
            raise ReorgError(
                f"chain shrank below prior snapshot height {prior.max_height}")
        for h in range(prior.max_height + 1):
            if bytes(self._blocks[h]["hash"]) != bytes(prior._blocks[h]["hash"]):
                raise ReorgError(f"block at height {h} changed; reorg deeper "
                                 f"than margin {self.reorg_margin}")

    def truncated(self, height: int) -> "ChainView":
        """A view of the same files bounded at an explicit height."""
        return ChainView(self.path, self.reorg_margin, max_height=height)

    # --- accessors ---

    @property
    def block_count(self) -> int:
        return self.max_height + 1

    @property
    def tx_count(self) -> int:
        return self.max_tx_id

    def block(self, height: int) -> BlockHandle:
        if not 0 <= height <= self.max_height:
            raise RangeError(f"height {height} outside view (max "
                             f"{self.max_height})")
        return BlockHandle(self, height)

    def blocks(self):
        for h in range(self.max_height + 1):
            yield BlockHandle(self, h)

    def tx(self, tx_id: int) -> TxHandle:
        if not 0 <= tx_id < self.max_tx_id:
            raise RangeError(f"tx {tx_id} outside view (max tx id "
                             f"{self.max_tx_id})")
        return TxHandle(self, tx_id, HEADER_SIZE + int(self._offsets[tx_id]))

    def txs(self, start=0, stop=None):
        stop = self.max_tx_id if stop is None else min(stop, self.max_tx_id)
        for tx_id in range(start, stop):
            yield self.tx(tx_id)

    def height_of_tx(self, tx_id: int) -> int:
        if not 0 <= tx_id < self.max_tx_id:
            raise RangeError(f"tx {tx_id} outside view")
        return int(np.searchsorted(self._first_tx_ids, tx_id, side="right")) - 1

    def heights_in_time_range(self, t0: int, t1: int):
        """Heights whose block timestamp satisfies t0 <= ts < t1 (plain
        timestamp comparison, no smoothing)."""
        ts = self._blocks["timestamp"][:self.max_height + 1]
        return [int(h) for h in np.nonzero((ts >= t0) & (ts < t1))[0]]

    # --- traversal ---

    def spending_tx(self, tx_id: int, out_index: int):
        """ID of the tx spending the given output, or None if it is unspent
        within this view."""
        out = self.tx(tx_id).outputs
        if out_index >= len(out):
            raise RangeError(f"output {out_index} out of range")
        rec = out[out_index]
        return None if rec.linked_tx_id == UNSPENT_SENTINEL else rec.linked_tx_id

    def spent_output(self, tx_id: int, in_index: int):
        """Locate the (tx ID, output index) consumed by the given input."""
        tx = self.tx(tx_id)
        inputs = tx.inputs
        if in_index >= len(inputs):
            raise RangeError(f"input {in_index} out of range")
        rec = inputs[in_index]
        # occurrence rank among our inputs with the same (prev, addr, value)
        rank = sum(1 for r in inputs[:in_index]
                   if (r.linked_tx_id, r.address_id, r.value)
                   == (rec.linked_tx_id, rec.address_id, rec.value))
        prev_outputs = self.tx(rec.linked_tx_id).outputs
        seen = 0
        for idx, out in enumerate(prev_outputs):
            if (out.linked_tx_id == tx_id and out.address_id == rec.address_id
                    and out.value == rec.value):
                if seen == rank:
                    return rec.linked_tx_id, idx
                seen += 1
        raise StorageError(f"input {tx_id}:{in_index} has no matching output "
                           f"in tx {rec.linked_tx_id}")

    def random_access(self, tx_id: int) -> TxRecord:
        return self.tx(tx_id).record()

    # --- vectorized columns (shared by selectors and benchmarks) ---

    def _gather(self, idx, nbytes, dtype):
        data = np.frombuffer(self.txdata, dtype=np.uint8, offset=HEADER_SIZE)
        flat = data[(idx[:, None] + np.arange(nbytes)).ravel()]
        return flat.view(dtype)

    def columns(self) -> dict:
        """Per-tx field arrays for the whole view, decoded with numpy."""
        if self._columns is not None:
            return self._columns
        n = self.max_tx_id
        off = self._offsets[:n].astype(np.int64)
        if n == 0:
            z = np.zeros(0, dtype=np.int64)
            self._columns = {k: z for k in ("size", "locktime", "input_count",
                                            "output_count", "total_out",
                                            "total_in", "fee", "height")}
            return self._columns
        size = self._gather(off, 4, "<u4").astype(np.int64)
        locktime = self._gather(off + 4, 4, "<u4").astype(np.int64)
        n_in = self._gather(off + 8, 2, "<u2").astype(np.int64)
        n_out = self._gather(off + 10, 2, "<u2").astype(np.int64)
        counts = n_in + n_out
        seg_start = np.concatenate(([0], np.cumsum(counts)))
        total_edges = int(seg_start[-1])
        intra = np.arange(total_edges, dtype=np.int64) - \
            np.repeat(seg_start[:-1], counts)
        pos = np.repeat(off + TX_HEADER_SIZE, counts) + INOUT_SIZE * intra
        words = self._gather(pos + 8, 8, "<u8")
        values = words & np.uint64(_VALUE_MASK)
        # wrap-around cumulative sums; per-tx differences are exact as long
        # as any single tx moves less than 2^64 base units
        csum = np.concatenate(([np.uint64(0)], np.cumsum(values, dtype=np.uint64)))
        out_end = seg_start[:-1] + n_out
        total_out = (csum[out_end] - csum[seg_start[:-1]]).astype(np.int64)
        total_in = (csum[seg_start[1:]] - csum[out_end]).astype(np.int64)
        fee = np.where(n_in > 0, total_in - total_out, 0)
        txids = np.arange(n, dtype=np.int64)
        height = np.searchsorted(self._first_tx_ids, txids, side="right") - 1
        self._columns = {
            "size": size, "locktime": locktime, "input_count": n_in,
            "output_count": n_out, "total_out": total_out,
            "total_in": total_in, "fee": fee, "height": height,
        }
        return self._columns

    def scan_headers(self, order="sequential", seed=0) -> int:
        """Sum of locktimes over all txs, touching each tx header once.

        `order` picks the access pattern; random order defeats locality and
        is dramatically slower on large chains.
        """
        n = self.max_tx_id
        if n == 0:
            return 0
        off = self._offsets[:n].astype(np.int64)
        if order == "random":
            rng = np.random.default_rng(seed)
            off = off[rng.permutation(n)]
        elif order != "sequential":
            raise ValueError(f"unknown order {order!r}")
        # headers are 12+16k bytes apart, so every offset is 4-aligned and
        # each locktime is one aligned 32-bit gather
        data = np.frombuffer(self.txdata, dtype="<u4",
                             offset=HEADER_SIZE,
                             count=(len(self.txdata) - HEADER_SIZE) // 4)
        lock = data[(off + 4) >> 2]
        return int(lock.astype(np.uint64).sum())


def open_view(data_dir, reorg_margin=6, prior=None) -> ChainView:
    """Map the chain at (disk height - reorg margin).

    If `prior` is a view from an earlier open, the new view must contain
    every block the prior one exposed; otherwise the chain reorganized
    deeper than the margin and a ReorgError is raised.
    """
    view = ChainView(data_dir, reorg_margin=reorg_margin)
    if prior is not None:
        view.check_superset_of(prior)
    return view


# --- mapreduce --------------------------------------------------------------

def _items(view, kind, start, stop):
    if kind == "txs":
        yield from view.txs(start, stop)
    elif kind == "blocks":
        for h in range(view.max_height + 1):
            blk = view.block(h)
            if start <= blk.first_tx_id < stop:
                yield blk
    elif kind in ("inputs", "outputs"):
        for tx in view.txs(start, stop):
            edges = tx.inputs if kind == "inputs" else tx.outputs
            for idx, rec in enumerate(edges):
                yield (tx.tx_id, idx, rec)
    else:
        raise ValueError(f"unknown item kind {kind!r}")


_TASK = None


def _worker(conn, chunk_idx, start, stop):
    view_args, kind, map_fn, combine_fn, identity = _TASK
    view = ChainView(*view_args)
    acc = identity
    for item in _items(view, kind, start, stop):
        acc = combine_fn(acc, map_fn(item))
    conn.send((chunk_idx, acc))
    conn.close()


def map_reduce(view, kind, map_fn, combine_fn, identity, workers=1):
    """Fold map_fn over blocks/txs/inputs/outputs.

    combine_fn must be associative and commutative with the given identity
    (caller contract).  Work is partitioned into contiguous tx-ID ranges;
    with workers > 1 the ranges run in forked processes and partial results
    combine in range order, so conforming reductions are bit-identical to
    the sequential left fold.
    """
    n = view.max_tx_id
    if workers <= 1 or n == 0:
        acc = identity
        for item in _items(view, kind, 0, n):
            acc = combine_fn(acc, map_fn(item))
        return acc
    global _TASK
    bounds = np.linspace(0, n, workers + 1).astype(int)
    if kind == "blocks":
        # align chunk bounds to block boundaries
        firsts = view._first_tx_ids
        bounds = np.unique(np.concatenate((
            firsts[np.searchsorted(firsts, bounds[1:-1])], [0, n])))
    _TASK = ((view.path, view.reorg_margin, view.max_height), kind,
             map_fn, combine_fn, identity)
    ctx = multiprocessing.get_context("fork")
    procs = []
    try:
        for i in range(len(bounds) - 1):
            if bounds[i] == bounds[i + 1]:
                continue
            parent, child = ctx.Pipe(duplex=False)
            p = ctx.Process(target=_worker,
                            args=(child, i, int(bounds[i]), int(bounds[i + 1])))
            p.start()
            child.close()
            procs.append((i, p, parent))
        results = {}
        for i, p, parent in procs:
            results[i] = parent.recv()[1]
            parent.close()
        for i, p, parent in procs:
            p.join()
            if p.exitcode != 0:
                raise RuntimeError(f"mapreduce worker failed (exit {p.exitcode})")
    finally:
        _TASK = None
    acc = identity
    for i in sorted(results):
        acc = combine_fn(acc, results[i])
    return acc
