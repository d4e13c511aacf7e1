"""Stateful sequential parser: import stream -> core blockchain data.

The parser assigns dense transaction IDs in block order, links every input to
the output it spends, deduplicates addresses through a cache/bloom/index
lookup chain, and serializes its state so later runs resume incrementally.
Each applied block leaves an undo log so recent blocks can be reverted when
the chain reorganizes.
"""

import hashlib
import pickle
import struct
from pathlib import Path

from .bloom import AddressCache, BloomFilter
from .importer import COINBASE_HASH
from .indexstore import IndexHandle
from .records import (
    AddressType, BlockRecord, ChainStats, ConsistencyError, DataPayload,
    InOutRecord, MultisigPayload, PubkeyPayload, RangeError,
    ScriptHashPayload, TxRecord, UNSPENT_SENTINEL, encode_script_payload,
)
from .storage import DataDir

STATE_VERSION = 1
STATE_FILE = "parser_state.dat"
DEFAULT_UNDO_KEEP = 6 + 32      # reorg margin d + configurable reserve R


class DanglingReferenceError(RuntimeError):
    pass


class ContinuityError(RuntimeError):
    pass


def _hash20(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()[:20]


def canonical_key(desc: dict) -> bytes:
    """Canonical dedup key for a script descriptor: type code byte plus
    type-specific canonical bytes."""
    t = desc["type"]
    if t == "pubkey":
        return bytes([AddressType.PUBKEY]) + _hash20(bytes.fromhex(desc["pubkey"]))
    if t == "pubkeyhash":
        return bytes([AddressType.PUBKEYHASH]) + bytes.fromhex(desc["hash"])
    if t == "scripthash":
        return bytes([AddressType.SCRIPTHASH]) + bytes.fromhex(desc["hash"])
    if t == "multisig":
        keys = b"".join(bytes.fromhex(k) for k in desc["pubkeys"])
        return bytes([AddressType.MULTISIG, desc["m"], len(desc["pubkeys"])]) + keys
    if t == "nulldata":
        return bytes([AddressType.NULLDATA]) + bytes.fromhex(desc["data"])
    if t == "nonstandard":
        return bytes([AddressType.NONSTANDARD]) + bytes.fromhex(desc["hex"])
    raise RangeError(f"unknown script type {t!r}")


class ChainParser:
    def __init__(self, data_dir, cache_budget=64 * 2**20, index_cache_mb=64,
                 expected_addresses=100_000, undo_keep=DEFAULT_UNDO_KEEP):
        self.path = Path(data_dir)
        self.store = DataDir(self.path, create=True)
        self.index = IndexHandle(self.path, cache_mb=index_cache_mb)
        self.undo_keep = undo_keep
        (self.path / "undo").mkdir(exist_ok=True)
        state_path = self.path / STATE_FILE
        if state_path.exists():
            self._load_state(state_path)
        else:
            if self.store.tx_count:
                raise ConsistencyError("data directory has chain data but no "
                                       "parser state")
            self.next_tx_id = 0
            self.addr_counters = {int(t): 0 for t in AddressType}
            self.utxo = {}              # tx hash -> [tx id, n_out, spent mask]
            self.cache = AddressCache(max(1, cache_budget // 64))
            self.bloom = BloomFilter(expected_addresses)
            self.last_height = -1
            self.stats = ChainStats()

    # --- state (de)serialization ---

    def _load_state(self, path):
        with open(path, "rb") as f:
            state = pickle.load(f)
        if state["version"] != STATE_VERSION:
            raise ConsistencyError(f"parser state version {state['version']} "
                                   f"not supported")
        self.next_tx_id = state["next_tx_id"]
        self.addr_counters = state["addr_counters"]
        self.utxo = state["utxo"]
        self.cache = AddressCache.from_state(state["cache"])
        self.bloom = BloomFilter.from_state(state["bloom"])
        self.last_height = state["last_height"]
        self.stats = ChainStats(*state["stats"])

    def save_state(self):
        state = {
            "version": STATE_VERSION,
            "next_tx_id": self.next_tx_id,
            "addr_counters": self.addr_counters,
            "utxo": self.utxo,
            "cache": self.cache.to_state(),
            "bloom": self.bloom.to_state(),
            "last_height": self.last_height,
            "stats": (self.stats.n_tx, self.stats.n_in, self.stats.n_out),
        }
        with open(self.path / STATE_FILE, "wb") as f:
            pickle.dump(state, f)

    # --- address resolution ---

    def resolve_address(self, desc: dict):
        """Resolve a script descriptor to (type code, address ID).

        Returns ((type, id), first_seen).  Lookup order: cache, then bloom
        filter (a negative means a guaranteed-fresh key with no store query),
        then the persistent index.  Identical keys always get the same ID.
        """
        key = canonical_key(desc)
        addr_type = key[0]
        cached = self.cache.get(key)
        if cached is not None:
            return (addr_type, cached), False
        if key in self.bloom:
            hit = self.index.addr_id_for(key)
            if hit is not None:
                self.cache.put_pinned(key, hit[1])   # second or later sighting
                return hit, False
        # fresh address: resolve children first so nested references point
        # to strictly earlier IDs, then persist the payload
        payload = self._build_payload(desc)
        addr_id = self.addr_counters[addr_type]
        self.addr_counters[addr_type] = addr_id + 1
        sid = self.store.append_script(addr_type, encode_script_payload(addr_type, payload))
        assert sid == addr_id
        self.index.put_addr(key, addr_type, addr_id)
        self.bloom.add(key)
        self.cache.put_new(key, addr_id)
        if self._undo is not None:
            self._undo["created_addrs"].append((key, addr_type, addr_id))
        return (addr_type, addr_id), True

    def _build_payload(self, desc: dict):
        t = desc["type"]
        if t == "pubkey":
            pk = bytes.fromhex(desc["pubkey"])
            return PubkeyPayload(_hash20(pk), pk)
        if t == "pubkeyhash":
            pk = bytes.fromhex(desc["pubkey"]) if desc.get("pubkey") else None
            return PubkeyPayload(bytes.fromhex(desc["hash"]), pk)
        if t == "scripthash":
            (nt, nid), _ = self.resolve_address(desc["nested"])
            return ScriptHashPayload(bytes.fromhex(desc["hash"]), nt, nid)
        if t == "multisig":
            key_ids = []
            for pk in desc["pubkeys"]:
                (_, kid), _ = self.resolve_address({"type": "pubkey", "pubkey": pk})
                key_ids.append(kid)
            return MultisigPayload(desc["m"], len(desc["pubkeys"]), tuple(key_ids))
        if t == "nulldata":
            return DataPayload(bytes.fromhex(desc["data"]))
        if t == "nonstandard":
            return DataPayload(bytes.fromhex(desc["hex"]))
        raise RangeError(f"unknown script type {t!r}")

    # --- input linking ---

    def link_input(self, prev_hash: bytes, out_index: int, spender_tx_id: int):
        """Resolve and consume the output (prev_hash, out_index).

        Returns (spent tx ID, address ID, value, address type).  Marks the
        output spent on disk and prunes the hash from the UTXO map once all
        its outputs are spent.
        """
        entry = self.utxo.get(prev_hash)
        if entry is None:
            raise DanglingReferenceError(
                f"input references unknown or fully spent tx {prev_hash.hex()}")
        prev_tx_id, n_out, mask = entry
        if out_index >= n_out:
            raise RangeError(f"output index {out_index} out of range for tx "
                             f"{prev_hash.hex()} ({n_out} outputs)")
        bit = 1 << out_index
        if mask & bit:
            raise ConsistencyError(
                f"double spend of {prev_hash.hex()}:{out_index}")
        out = self.store.read_output(prev_tx_id, out_index)
        self.store.mark_output_spent(prev_tx_id, out_index, spender_tx_id)
        entry[2] = mask | bit
        if self._undo is not None:
            self._undo["spends"].append(
                (prev_hash, prev_tx_id, n_out, out_index, spender_tx_id))
        if entry[2] == (1 << n_out) - 1:
            del self.utxo[prev_hash]
        return prev_tx_id, out.address_id, out.value, out.address_type

    # --- block application ---

    _undo = None

    def apply_block(self, block):
        expected = self.last_height + 1
        if block.height != expected:
            raise ContinuityError(f"block height {block.height}, expected {expected}")
        first_tx_id = self.next_tx_id
        self._undo = {
            "height": block.height,
            "block_hash": bytes.fromhex(block.hash),
            "first_tx_id": first_tx_id,
            "script_counts": self.store.script_counts(),
            "addr_counters": dict(self.addr_counters),
            "stats": (self.stats.n_tx, self.stats.n_in, self.stats.n_out),
            "created_tx": [],
            "created_addrs": [],
            "spends": [],
        }
        try:
            for itx in block.txs:
                self._apply_tx(itx)
        finally:
            undo, self._undo = self._undo, None
        self.store.append_block(BlockRecord(
            bytes.fromhex(block.hash), block.time, first_tx_id, len(block.txs)))
        self.last_height = block.height
        self._write_undo(undo)

    def _apply_tx(self, itx):
        tx_id = self.next_tx_id
        inputs = []
        if not itx.is_coinbase:
            for prev_hash, idx in itx.inputs:
                ptx, aid, value, atype = self.link_input(
                    bytes.fromhex(prev_hash), idx, tx_id)
                inputs.append(InOutRecord(ptx, aid, value, atype))
        outputs = []
        for value, desc in itx.outputs:
            (atype, aid), _ = self.resolve_address(desc)
            outputs.append(InOutRecord(UNSPENT_SENTINEL, aid, value, atype))
        got = self.store.append_tx(TxRecord(itx.size, itx.locktime, outputs, inputs))
        assert got == tx_id
        self.next_tx_id = tx_id + 1
        h = bytes.fromhex(itx.hash)
        self.index.put_tx(h, tx_id)
        if outputs:
            self.utxo[h] = [tx_id, len(outputs), 0]
        self._undo["created_tx"].append(h)
        self.stats.n_tx += 1
        self.stats.n_in += len(inputs)
        self.stats.n_out += len(outputs)

    def _undo_path(self, height) -> Path:
        return self.path / "undo" / f"{height}.log"

    def _write_undo(self, undo):
        with open(self._undo_path(undo["height"]), "wb") as f:
            pickle.dump(undo, f)
        stale = self._undo_path(undo["height"] - self.undo_keep)
        if stale.exists():
            stale.unlink()

    # --- revert ---

    def revert_block(self):
        if self.last_height < 0:
            raise RangeError("no blocks to revert")
        path = self._undo_path(self.last_height)
        if not path.exists():
            raise RangeError(f"no undo log for height {self.last_height}; "
                             f"cannot revert further")
        with open(path, "rb") as f:
            undo = pickle.load(f)
        first = undo["first_tx_id"]
        for prev_hash, prev_tx_id, n_out, out_index, _ in reversed(undo["spends"]):
            if prev_tx_id >= first:
                continue        # the spent output belongs to a reverted tx
            self.store.unmark_output_spent(prev_tx_id, out_index)
            bit = 1 << out_index
            entry = self.utxo.get(prev_hash)
            if entry is None:
                self.utxo[prev_hash] = [prev_tx_id, n_out,
                                        ((1 << n_out) - 1) & ~bit]
            else:
                entry[2] &= ~bit
        for h in undo["created_tx"]:
            self.utxo.pop(h, None)
        self.index.delete_txs_from(first)
        for key, atype, aid in undo["created_addrs"]:
            self.index.delete_addr(atype, aid)
            self.cache.drop(key)
        self.addr_counters = undo["addr_counters"]
        for atype, count in undo["script_counts"].items():
            self.store.truncate_scripts(atype, count)
        self.store.truncate_txs(first)
        self.store.truncate_blocks(undo["height"])
        self.stats = ChainStats(*undo["stats"])
        self.next_tx_id = first
        self.last_height = undo["height"] - 1
        path.unlink()

    # --- bloom maintenance ---

    def _maybe_rebuild_bloom(self):
        if self.bloom.needs_rebuild:
            self.index.commit()
            self.bloom = BloomFilter.rebuilt(self.index.iter_addr_keys(),
                                             self.bloom.design_n * 2,
                                             self.bloom.fpr)

    # --- top-level runs ---

    def run(self, source) -> ChainStats:
        for block in source:
            self.apply_block(block)
            self._maybe_rebuild_bloom()
        self.index.commit()
        self.store.flush()
        self.save_state()
        return self.stats

    def close(self):
        self.index.close()
        self.store.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_chain(source, data_dir, **kw) -> ChainStats:
    """Full parse of a block stream into an empty data directory."""
    with ChainParser(data_dir, **kw) as p:
        return p.run(source)


def update_chain(source, data_dir, **kw) -> ChainStats:
    """Append new blocks to a previously parsed directory.

    The stream must continue at last_height + 1, or start at a fork point
    recent enough that undo logs still cover it (in which case the stale
    blocks are reverted first).
    """
    if not (Path(data_dir) / STATE_FILE).exists():
        raise ContinuityError(f"no parser state in {data_dir}; run a full "
                              f"parse first")
    with ChainParser(data_dir, **kw) as p:
        source = iter(source)
        try:
            first = next(source)
        except StopIteration:
            return p.stats
        if first.height <= p.last_height:
            depth = p.last_height - first.height + 1
            for _ in range(depth):
                p.revert_block()
        elif first.height != p.last_height + 1:
            raise ContinuityError(
                f"update starts at height {first.height}, expected "
                f"{p.last_height + 1}")
        p.apply_block(first)
        return p.run(source)


def revert_blocks(data_dir, n: int):
    """Rewind the most recent n blocks, byte-for-byte."""
    with ChainParser(data_dir) as p:
        if n > p.last_height + 1:
            raise RangeError(f"cannot revert {n} blocks, only "
                             f"{p.last_height + 1} present")
        for _ in range(n):
            p.revert_block()
        p.index.commit()
        p.store.flush()
        p.save_state()
