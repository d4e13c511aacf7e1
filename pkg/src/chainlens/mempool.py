"""Mempool timestamp recording and waiting-time queries.

The feed is a replayable log, one "txhash_hex,unix_millis[,payload_hex]" per
line.  Minimal mode keeps only first-seen timestamps for txs that made it
into the chain, as a flat 8-byte-per-tx-ID array; full mode additionally
persists every raw payload, including txs never included in a block.
"""

import struct
from pathlib import Path

from .importer import ParseError
from .storage import HEADER_SIZE, MAGIC

MINIMAL = "minimal"
FULL = "full"


class MempoolLog:
    def __init__(self, mode=MINIMAL):
        if mode not in (MINIMAL, FULL):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.first_seen = {}        # tx hash bytes -> unix millis
        self.payloads = {}          # tx hash bytes -> raw payload (full mode)
        self.lag_correction = 0.0   # seconds added to every first-seen time
        self.timestamps = None      # per-tx-ID millis array once aligned

    def set_lag_correction(self, seconds: float):
        self.lag_correction = seconds

    def align(self, index, tx_count: int):
        """Match recorded hashes to chain tx IDs; unseen txs get 0."""
        self.timestamps = [0] * tx_count
        matched = {}
        for h, millis in self.first_seen.items():
            tx_id = index.tx_id_for(h)
            if tx_id is not None and tx_id < tx_count:
                self.timestamps[tx_id] = millis
                matched[h] = millis
        if self.mode == MINIMAL:
            self.first_seen = matched
        return self

    def first_seen_seconds(self, tx_id: int):
        if self.timestamps is None:
            raise RuntimeError("log not aligned to a chain; call align()")
        if not 0 <= tx_id < len(self.timestamps) or not self.timestamps[tx_id]:
            return None
        return self.timestamps[tx_id] / 1000.0

    def write(self, data_dir):
        mp = Path(data_dir) / "mempool"
        mp.mkdir(exist_ok=True)
        with open(mp / "timestamps.dat", "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack(f"<{len(self.timestamps)}q", *self.timestamps))
        if self.mode == FULL:
            full = mp / "full"
            full.mkdir(exist_ok=True)
            for h, payload in self.payloads.items():
                (full / f"{h.hex()}.bin").write_bytes(payload)

    @classmethod
    def read(cls, data_dir, tx_count=None):
        mp = Path(data_dir) / "mempool"
        raw = (mp / "timestamps.dat").read_bytes()
        if raw[:HEADER_SIZE] != MAGIC:
            raise ParseError("bad magic in timestamps.dat")
        n = (len(raw) - HEADER_SIZE) // 8
        log = cls(MINIMAL)
        log.timestamps = list(struct.unpack_from(f"<{n}q", raw, HEADER_SIZE))
        return log


def record_feed(feed_path, mode=MINIMAL) -> MempoolLog:
    """Replay a feed file into a log; duplicate hashes keep the first
    timestamp."""
    log = MempoolLog(mode)
    with open(feed_path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise ParseError("expected 'txhash,unix_millis'", lineno)
            try:
                h = bytes.fromhex(parts[0])
                millis = int(parts[1])
            except ValueError as e:
                raise ParseError(str(e), lineno)
            if len(h) != 32:
                raise ParseError(f"tx hash must be 64 hex chars", lineno)
            if h in log.first_seen:
                continue
            log.first_seen[h] = millis
            if mode == FULL:
                log.payloads[h] = bytes.fromhex(parts[2]) if len(parts) > 2 else b""
    return log


def wait_time(view, tx_id: int, log: MempoolLog):
    """Seconds between first broadcast sighting (lag-corrected) and the
    timestamp of the including block; None if the tx was never seen."""
    seen = log.first_seen_seconds(tx_id)
    if seen is None:
        return None
    block_ts = view.block(view.height_of_tx(tx_id)).timestamp
    return block_ts - (seen + log.lag_correction)


def set_lag_correction(log: MempoolLog, seconds: float):
    log.set_lag_correction(seconds)
