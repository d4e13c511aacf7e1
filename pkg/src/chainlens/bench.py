"""Benchmark chain builder and iteration benchmarks.

Builds multi-million-tx data directories directly as flat files (the
streaming parser is far too slow for that scale) and times the access
patterns that matter: sequential vs random tx iteration and parallel
map_reduce.  Run as `python -m chainlens.bench`.
"""

import argparse
import struct
import time
from pathlib import Path

import numpy as np

from .storage import MAGIC
from .records import UNSPENT_SENTINEL
from .view import open_view, map_reduce

_TX_HEADER = struct.Struct("<IIHH")
_INOUT = struct.Struct("<IIQ")
_BLOCK = struct.Struct("<32sqII")


def _edge(linked, addr, value, addr_type=1):
    return _INOUT.pack(linked, addr, (value & ((1 << 60) - 1))
                       | (addr_type << 60))


def make_benchmark_chain(data_dir, n_txs, txs_per_block=2000, seed=0):
    """Write a structurally valid chain of n_txs 2-in/2-out txs (plus one
    coinbase per block) straight to disk.

    Every block has the same byte layout, so the payload is one template
    tiled per block and the offsets follow arithmetically — building 5M txs
    takes seconds instead of the minutes a full parse would need.
    """
    rng = np.random.default_rng(seed)
    path = Path(data_dir)
    path.mkdir(parents=True, exist_ok=True)

    regular_per_block = txs_per_block - 1
    n_blocks = -(-n_txs // txs_per_block)
    total_txs = n_blocks * txs_per_block

    # one block's payload: coinbase (0-in 1-out) then uniform 2-in/2-out txs
    coinbase = _TX_HEADER.pack(100, 0, 0, 1) + _edge(UNSPENT_SENTINEL, 0, 50)
    regular = (_TX_HEADER.pack(250, 0, 2, 2)
               + _edge(UNSPENT_SENTINEL, 1, 40) + _edge(UNSPENT_SENTINEL, 2, 40)
               + _edge(0, 3, 50) + _edge(0, 4, 50))
    block_payload = coinbase + regular * regular_per_block
    stride = len(block_payload)

    with open(path / "txdata.dat", "wb") as f:
        f.write(MAGIC)
        chunk = block_payload * 64
        full, rest = divmod(n_blocks, 64)
        for _ in range(full):
            f.write(chunk)
        f.write(block_payload * rest)

    tx_sizes = np.full(txs_per_block, len(regular), dtype=np.uint64)
    tx_sizes[0] = len(coinbase)
    in_block = np.concatenate(([0], np.cumsum(tx_sizes)))
    offsets = (in_block[None, :-1]
               + (np.arange(n_blocks, dtype=np.uint64) * stride)[:, None])
    offsets = np.append(offsets.ravel(), np.uint64(n_blocks * stride))
    with open(path / "txoffsets.dat", "wb") as f:
        f.write(MAGIC)
        f.write(offsets.astype("<u8").tobytes())

    raw = np.zeros((n_blocks, 48), dtype=np.uint8)
    raw[:, :32] = rng.integers(0, 256, (n_blocks, 32), dtype=np.uint8)
    raw[:, 32:40] = (np.arange(n_blocks, dtype="<i8") * 600 + 1_600_000_000) \
        .view(np.uint8).reshape(n_blocks, 8)
    raw[:, 40:44] = (np.arange(n_blocks, dtype="<u4") * txs_per_block) \
        .view(np.uint8).reshape(n_blocks, 4)
    raw[:, 44:48] = np.full(n_blocks, txs_per_block, dtype="<u4") \
        .view(np.uint8).reshape(n_blocks, 4)
    with open(path / "blocks.dat", "wb") as f:
        f.write(MAGIC)
        f.write(raw.tobytes())
    return total_txs


def time_scans(view, seed=0):
    """(sequential seconds, random seconds) for a full header scan."""
    t0 = time.perf_counter()
    view.scan_headers(order="sequential")
    t1 = time.perf_counter()
    view.scan_headers(order="random", seed=seed)
    t2 = time.perf_counter()
    return t1 - t0, t2 - t1


def _count_outputs(tx):
    return tx.output_count


def time_map_reduce(view, workers):
    t0 = time.perf_counter()
    total = map_reduce(view, "txs", _count_outputs, lambda a, b: a + b, 0,
                       workers=workers)
    return time.perf_counter() - t0, total


def main(argv=None):
    ap = argparse.ArgumentParser(description="chain iteration benchmarks")
    ap.add_argument("--data-dir", required=True)
    ap.add_argument("--txs", type=int, default=5_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    n = make_benchmark_chain(args.data_dir, args.txs, seed=args.seed)
    view = open_view(args.data_dir, reorg_margin=0)
    print(f"chain: {n} txs, {view.block_count} blocks")
    seq, rnd = time_scans(view, seed=args.seed)
    print(f"sequential scan {seq:.3f}s  random scan {rnd:.3f}s  "
          f"ratio {rnd / seq:.1f}x")
    t1, _ = time_map_reduce(view, 1)
    t4, _ = time_map_reduce(view, 4)
    print(f"map_reduce 1 worker {t1:.3f}s  4 workers {t4:.3f}s  "
          f"speedup {t1 / t4:.2f}x")


if __name__ == "__main__":
    main()
