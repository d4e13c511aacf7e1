"""Address clustering: heuristic edges + union-find, with CoinJoin
exclusion, change-output identification, and tag propagation."""

import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .records import AddressType
from .storage import HEADER_SIZE, MAGIC

MULTI_INPUT = "multi_input"
CHANGE_FRESH = "change_fresh"
CHANGE_MULTISIG = "change_multisig"


@dataclass
class HeuristicConfig:
    enabled: frozenset = frozenset({MULTI_INPUT})
    coinjoin_exclusion: bool = True

    def __post_init__(self):
        bad = set(self.enabled) - {MULTI_INPUT, CHANGE_FRESH, CHANGE_MULTISIG}
        if bad:
            raise ValueError(f"unknown heuristics {bad}")


class UnionFind:
    """Disjoint sets over dense integer keys, path compression plus
    size-weighted union."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.components = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.components -= 1
        return True


class AddressSpace:
    """Flattens namespaced (type, id) address pairs to one dense key space,
    sized from the per-type script tables."""

    def __init__(self, counts: dict):
        self.counts = {int(t): counts.get(int(t), 0) for t in AddressType}
        self.base = {}
        total = 0
        for t in sorted(self.counts):
            self.base[t] = total
            total += self.counts[t]
        self.total = total

    @classmethod
    def for_data_dir(cls, data_dir) -> "AddressSpace":
        counts = {}
        for t in AddressType:
            off = Path(data_dir) / "scripts" / f"{t.name.lower()}.off"
            counts[int(t)] = (off.stat().st_size - HEADER_SIZE) // 8 - 1
        return cls(counts)

    def flat(self, addr_type: int, addr_id: int) -> int:
        return self.base[addr_type] + addr_id

    def unflat(self, key: int):
        for t in sorted(self.base, reverse=True):
            if key >= self.base[t]:
                return t, key - self.base[t]
        raise KeyError(key)


def detect_coinjoin(tx) -> bool:
    """Shape test for CoinJoin mixes: several inputs, a run of equal-valued
    outputs of multiplicity k >= 2, at least k inputs and 2k-1 outputs."""
    n_in, n_out = tx.input_count, tx.output_count
    if n_in < 2 or n_out < 3:
        return False
    counts = Counter(o.value for o in tx.outputs)
    k = max(counts.values())
    return k >= 2 and n_in >= k and n_out >= 2 * k - 1


def identify_change_outputs(tx, seen_before, structure_of=None,
                            heuristics=(CHANGE_FRESH, CHANGE_MULTISIG)) -> dict:
    """Candidate change outputs of a tx, as {output index: {labels}}.

    seen_before(type, id) tells whether an address appeared strictly before
    this tx.  structure_of(type, id) resolves an access structure (through
    scripthash nesting); without it the multisig heuristic is skipped.
    Both rules are conservative: any ambiguity means no candidate.
    """
    result = {}
    outputs = tx.outputs
    if CHANGE_FRESH in heuristics and len(outputs) >= 1:
        fresh = [i for i, o in enumerate(outputs)
                 if not seen_before(o.address_type, o.address_id)]
        if len(fresh) == 1:
            result.setdefault(fresh[0], set()).add(CHANGE_FRESH)
    if CHANGE_MULTISIG in heuristics and structure_of and tx.input_count:
        structures = {structure_of(i.address_type, i.address_id)
                      for i in tx.inputs}
        if len(structures) == 1:
            target = next(iter(structures))
            matching = [i for i, o in enumerate(outputs)
                        if structure_of(o.address_type, o.address_id) == target]
            if len(matching) == 1 and len(outputs) > 1:
                result.setdefault(matching[0], set()).add(CHANGE_MULTISIG)
    return result


def make_structure_resolver(index):
    """Access-structure resolver backed by script payloads: multisig maps to
    ('multisig', m, n), scripthash resolves to its nested structure, every
    other type to its own name."""
    cache = {}

    def structure_of(addr_type, addr_id):
        key = (addr_type, addr_id)
        if key in cache:
            return cache[key]
        t = AddressType(addr_type)
        if t == AddressType.MULTISIG:
            p = index.script_payload(addr_type, addr_id)
            res = ("multisig", p.m, p.n)
        elif t == AddressType.SCRIPTHASH:
            p = index.script_payload(addr_type, addr_id)
            res = structure_of(p.nested_type, p.nested_id)
        else:
            res = (t.name.lower(),)
        cache[key] = res
        return res

    return structure_of


def cluster_edges(view, config: HeuristicConfig, structure_of=None):
    """Single-pass generator of address-link edges ((type,id), (type,id))
    implied by the enabled heuristics."""
    change_rules = tuple(h for h in (CHANGE_FRESH, CHANGE_MULTISIG)
                         if h in config.enabled)
    seen = set()

    def seen_before(t, i):
        return (t, i) in seen

    for tx in view.txs():
        inputs = tx.inputs
        skip = config.coinjoin_exclusion and detect_coinjoin(tx)
        if inputs and not skip:
            if MULTI_INPUT in config.enabled:
                first = (inputs[0].address_type, inputs[0].address_id)
                for rec in inputs[1:]:
                    yield first, (rec.address_type, rec.address_id)
            if change_rules:
                hits = identify_change_outputs(tx, seen_before, structure_of,
                                               change_rules)
                first = (inputs[0].address_type, inputs[0].address_id)
                outputs = tx.outputs
                for idx in hits:
                    yield first, (outputs[idx].address_type,
                                  outputs[idx].address_id)
        for rec in tx.outputs:
            seen.add((rec.address_type, rec.address_id))


class ClusterSet:
    """A partition of all addresses; cluster IDs are dense in order of each
    cluster's lowest flat address key."""

    def __init__(self, space: AddressSpace, uf: UnionFind):
        self.space = space
        self.assignment = [0] * space.total
        self._members = {}
        roots = {}
        for key in range(space.total):
            root = uf.find(key)
            cid = roots.setdefault(root, len(roots))
            self.assignment[key] = cid
            self._members.setdefault(cid, []).append(key)
        self.tags = {}

    @property
    def cluster_count(self) -> int:
        return len(self._members)

    def cluster_of(self, addr_type: int, addr_id: int) -> int:
        return self.assignment[self.space.flat(addr_type, addr_id)]

    def members(self, cluster_id: int):
        return [self.space.unflat(k) for k in self._members[cluster_id]]

    def sizes(self):
        return {cid: len(m) for cid, m in self._members.items()}

    def tags_of(self, addr_type: int, addr_id: int) -> set:
        return self.tags.get(self.cluster_of(addr_type, addr_id), set())

    def largest_clusters(self, min_size: int):
        return {cid for cid, m in self._members.items() if len(m) >= min_size}

    def write(self, path):
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack(f"<{len(self.assignment)}I", *self.assignment))


def build_clusters(view, config: HeuristicConfig = HeuristicConfig(),
                   index=None, space=None) -> ClusterSet:
    """Union-find over the heuristic edge set; the result equals the
    transitive closure of those edges."""
    structure_of = make_structure_resolver(index) if index is not None else None
    if space is None:
        space = AddressSpace.for_data_dir(view.path)
    uf = UnionFind(space.total)
    for (ta, ia), (tb, ib) in cluster_edges(view, config, structure_of):
        uf.union(space.flat(ta, ia), space.flat(tb, ib))
    return ClusterSet(space, uf)


def propagate_tags(clusters: ClusterSet, seed_tags: dict) -> ClusterSet:
    """seed_tags: (type, id) -> iterable of labels.  Every member of a
    cluster inherits the union of its members' seed tags."""
    tags = {}
    for (t, i), labels in seed_tags.items():
        cid = clusters.cluster_of(t, i)
        tags.setdefault(cid, set()).update(labels)
    clusters.tags = tags
    return clusters


def cluster_size_histogram(clusters: ClusterSet) -> dict:
    hist = Counter(clusters.sizes().values())
    return dict(sorted(hist.items()))


def load_seed_tags(path) -> dict:
    """tags.csv rows: 'type:id,label'."""
    seeds = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            key, label = line.split(",", 1)
            t, i = key.split(":")
            seeds.setdefault((int(t), int(i)), set()).add(label)
    return seeds
