"""Bloom filter over address keys.

Sized for an expected key count at a target false-positive rate; when the
inserted count outgrows the design point, the parser rebuilds it at double
capacity from the persistent address index.  Negatives are always correct, so
a negative lookup lets the parser assign a fresh ID without touching the
store.
"""

import hashlib
import math
import struct


class BloomFilter:
    def __init__(self, expected_n=100_000, fpr=0.01):
        self.design_n = max(1, expected_n)
        self.fpr = fpr
        self.m = max(8, math.ceil(-self.design_n * math.log(fpr) / math.log(2) ** 2))
        self.k = max(1, round(self.m / self.design_n * math.log(2)))
        self.bits = bytearray((self.m + 7) // 8)
        self.count = 0

    def _offsets(self, key: bytes):
        d = hashlib.blake2b(key, digest_size=16).digest()
        h1, h2 = struct.unpack("<QQ", d)
        for i in range(self.k):
            yield (h1 + i * h2) % self.m

    def add(self, key: bytes):
        for off in self._offsets(key):
            self.bits[off >> 3] |= 1 << (off & 7)
        self.count += 1

    def __contains__(self, key: bytes) -> bool:
        return all(self.bits[off >> 3] & (1 << (off & 7))
                   for off in self._offsets(key))

    @property
    def needs_rebuild(self) -> bool:
        return self.count > self.design_n

    def expected_fpr(self) -> float:
        return (1.0 - math.exp(-self.k * self.count / self.m)) ** self.k

    @classmethod
    def rebuilt(cls, keys, expected_n, fpr=0.01) -> "BloomFilter":
        bf = cls(expected_n, fpr)
        for key in keys:
            bf.add(key)
        return bf

    def to_state(self) -> dict:
        return {"design_n": self.design_n, "fpr": self.fpr, "m": self.m,
                "k": self.k, "count": self.count, "bits": bytes(self.bits)}

    @classmethod
    def from_state(cls, state: dict) -> "BloomFilter":
        bf = cls.__new__(cls)
        bf.design_n = state["design_n"]
        bf.fpr = state["fpr"]
        bf.m = state["m"]
        bf.k = state["k"]
        bf.count = state["count"]
        bf.bits = bytearray(state["bits"])
        return bf


class AddressCache:
    """LRU map from canonical address key to ID.

    Keys resolved a second time get pinned: they move to a side map that is
    never evicted, since multi-use addresses are the ones worth keeping hot.
    """

    def __init__(self, capacity: int):
        self.capacity = max(1, capacity)
        self.lru = {}       # insertion order == recency order
        self.pinned = {}

    def get(self, key):
        """Return the cached ID or None; a hit counts as a repeat sighting
        and pins the key."""
        if key in self.pinned:
            return self.pinned[key]
        if key in self.lru:
            value = self.lru.pop(key)
            self.pinned[key] = value
            return value
        return None

    def put_new(self, key, value):
        """Insert a first-seen key, evicting the least recently used
        unpinned entry if over budget."""
        self.lru[key] = value
        if len(self.lru) > self.capacity:
            oldest = next(iter(self.lru))
            del self.lru[oldest]

    def put_pinned(self, key, value):
        self.lru.pop(key, None)
        self.pinned[key] = value

    def drop(self, key):
        self.lru.pop(key, None)
        self.pinned.pop(key, None)

    def to_state(self) -> dict:
        return {"capacity": self.capacity, "lru": dict(self.lru),
                "pinned": dict(self.pinned)}

    @classmethod
    def from_state(cls, state: dict) -> "AddressCache":
        cache = cls(state["capacity"])
        cache.lru = dict(state["lru"])
        cache.pinned = dict(state["pinned"])
        return cache
