"""Persistent hash and address indexes.

The transaction graph itself never stores hashes or address bytes; the
bidirectional mappings live here, in an embedded SQLite database with a
configurable page-cache budget.  Script payloads are fetched from the
per-type tables in the data directory.  Misses are values (None), not
errors, because callers routinely probe for absence.
"""

import sqlite3
import struct
from pathlib import Path

from .records import AddressType, decode_script_payload
from .storage import HEADER_SIZE, MAGIC, SCRIPT_FILES, StorageError


class _ScriptReader:
    """O(1) random access into scripts/<type>.dat via the offsets file."""

    def __init__(self, scripts_dir: Path, addr_type: AddressType):
        name = SCRIPT_FILES[addr_type]
        self.df = open(scripts_dir / f"{name}.dat", "rb")
        self.of = open(scripts_dir / f"{name}.off", "rb")
        if self.df.read(HEADER_SIZE) != MAGIC or self.of.read(HEADER_SIZE) != MAGIC:
            raise StorageError(f"bad magic in script table {name}")

    def read(self, script_id: int) -> bytes:
        self.of.seek(HEADER_SIZE + 8 * script_id)
        raw = self.of.read(16)
        if len(raw) < 16:
            raise KeyError(script_id)
        start, end = struct.unpack("<QQ", raw)
        self.df.seek(HEADER_SIZE + start)
        return self.df.read(end - start)

    def close(self):
        self.df.close()
        self.of.close()


class IndexHandle:
    def __init__(self, data_dir, cache_mb=64, readonly=False):
        self.data_dir = Path(data_dir)
        idx_dir = self.data_dir / "indexes"
        if not readonly:
            idx_dir.mkdir(parents=True, exist_ok=True)
        path = idx_dir / "index.db"
        if readonly:
            self.db = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
        else:
            self.db = sqlite3.connect(path)
            self.db.executescript("""
                CREATE TABLE IF NOT EXISTS txindex(
                    id INTEGER PRIMARY KEY, hash BLOB NOT NULL UNIQUE);
                CREATE TABLE IF NOT EXISTS addrindex(
                    key BLOB PRIMARY KEY, type INTEGER NOT NULL,
                    id INTEGER NOT NULL, UNIQUE(type, id)) WITHOUT ROWID;
            """)
        self.db.execute(f"PRAGMA cache_size = {-1024 * cache_mb}")
        self.db.execute("PRAGMA synchronous = OFF")
        self._readers = {}

    # --- transaction index ---

    def put_tx(self, tx_hash: bytes, tx_id: int):
        self.db.execute("INSERT INTO txindex(id, hash) VALUES(?, ?)",
                        (tx_id, tx_hash))

    def tx_id_for(self, tx_hash: bytes):
        row = self.db.execute("SELECT id FROM txindex WHERE hash = ?",
                              (tx_hash,)).fetchone()
        return row[0] if row else None

    def tx_hash_for(self, tx_id: int):
        row = self.db.execute("SELECT hash FROM txindex WHERE id = ?",
                              (tx_id,)).fetchone()
        return row[0] if row else None

    def delete_txs_from(self, first_tx_id: int):
        self.db.execute("DELETE FROM txindex WHERE id >= ?", (first_tx_id,))

    # --- address index ---

    def put_addr(self, key: bytes, addr_type: int, addr_id: int):
        self.db.execute("INSERT INTO addrindex(key, type, id) VALUES(?, ?, ?)",
                        (key, addr_type, addr_id))

    def addr_id_for(self, key: bytes):
        row = self.db.execute("SELECT type, id FROM addrindex WHERE key = ?",
                              (key,)).fetchone()
        return (row[0], row[1]) if row else None

    def addr_key_for(self, addr_type: int, addr_id: int):
        row = self.db.execute(
            "SELECT key FROM addrindex WHERE type = ? AND id = ?",
            (addr_type, addr_id)).fetchone()
        return row[0] if row else None

    def delete_addr(self, addr_type: int, addr_id: int):
        self.db.execute("DELETE FROM addrindex WHERE type = ? AND id = ?",
                        (addr_type, addr_id))

    def iter_addr_keys(self):
        for (key,) in self.db.execute("SELECT key FROM addrindex ORDER BY key"):
            yield key

    def addr_count(self) -> int:
        return self.db.execute("SELECT COUNT(*) FROM addrindex").fetchone()[0]

    # --- script payloads ---

    def script_payload(self, addr_type: int, addr_id: int):
        addr_type = AddressType(addr_type)
        reader = self._readers.get(addr_type)
        if reader is None:
            reader = self._readers[addr_type] = _ScriptReader(
                self.data_dir / "scripts", addr_type)
        try:
            raw = reader.read(addr_id)
        except KeyError:
            return None
        return decode_script_payload(addr_type, raw)

    # --- lifecycle ---

    def commit(self):
        self.db.commit()

    def canonical_dump(self) -> bytes:
        """Deterministic serialization of the index contents, used to compare
        two directories for logical equality."""
        out = []
        for tx_id, h in self.db.execute("SELECT id, hash FROM txindex ORDER BY id"):
            out.append(b"T%d:%s" % (tx_id, h))
        for key, t, i in self.db.execute(
                "SELECT key, type, id FROM addrindex ORDER BY key"):
            out.append(b"A%d:%d:%s" % (t, i, key))
        return b"\n".join(out)

    def close(self):
        self.db.commit()
        self.db.close()
        for r in self._readers.values():
            r.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
