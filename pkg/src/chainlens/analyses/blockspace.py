"""Block-space market analysis: greedy template construction, low-fee
inclusion forensics, miner update gaps, and stale-template fee loss."""

import math
import random
from collections import Counter
from dataclasses import dataclass, field

PRIORITY_THRESHOLD = 57_600_000   # 1 coin * 144 blocks / 250 bytes, legacy
FEE_MARGIN = 5                    # base units per byte below the template floor

HIGH_PRIORITY = "high_priority"
ZERO_FEE_UNSEEN = "zero_fee_unseen"
SWEEP = "sweep"
UNEXPLAINED = "unexplained"


@dataclass(frozen=True)
class MemTx:
    """A pending transaction as seen in the mempool."""
    txid: str
    fee: int
    size: int
    parents: frozenset = frozenset()

    @property
    def feerate(self) -> float:
        return self.fee / self.size


@dataclass(frozen=True)
class BlockTx:
    """A transaction from an actual mined block, with the extra facts the
    low-fee classifier needs: per-input (value, age in blocks) pairs and
    whether the broadcast feed ever saw it."""
    txid: str
    fee: int
    size: int
    inputs: tuple = ()            # (value, age_blocks) pairs
    output_count: int = 1
    seen: bool = True

    @property
    def feerate(self) -> float:
        return self.fee / self.size

    @property
    def priority(self) -> float:
        return sum(v * a for v, a in self.inputs) / self.size


class MempoolSnapshot:
    """The pending set at one instant.  Parent links must stay inside the
    snapshot and be acyclic."""

    def __init__(self, txs):
        self.txs = {t.txid: t for t in txs}
        for t in self.txs.values():
            self._check_acyclic(t.txid, set())

    def _check_acyclic(self, txid, trail):
        if txid in trail:
            raise ValueError(f"parent cycle through {txid}")
        tx = self.txs.get(txid)
        if tx is None:
            return
        trail = trail | {txid}
        for p in tx.parents:
            self._check_acyclic(p, trail)

    def __contains__(self, txid):
        return txid in self.txs

    def __len__(self):
        return len(self.txs)

    def ancestors(self, txid) -> set:
        """txid plus every in-snapshot ancestor."""
        out, stack = set(), [txid]
        while stack:
            t = stack.pop()
            if t in out or t not in self.txs:
                continue
            out.add(t)
            stack.extend(self.txs[t].parents)
        return out


@dataclass
class GreedyBlock:
    txids: set
    total_fee: int
    total_size: int
    min_package_feerate: float
    packages: list = field(default_factory=list)

    def __contains__(self, txid):
        return txid in self.txids

    def __iter__(self):
        return iter(self.txids)


def build_greedy_block(snapshot: MempoolSnapshot, size_limit: int) -> GreedyBlock:
    """Ancestor-package feerate greedy template.

    Repeatedly pick the unselected tx whose package (itself plus unselected
    ancestors) has the highest fee/size, breaking ties by txid, and include
    the whole package if it fits.  Including a package changes the remaining
    packages, so they are recomputed each round; this is what lets a
    high-fee child lift a low-fee parent in (child pays for parent).
    """
    selected, packages = set(), []
    total_fee = total_size = 0
    min_rate = math.inf
    remaining = set(snapshot.txs)
    while remaining:
        best = None
        for txid in remaining:
            pkg = snapshot.ancestors(txid) - selected
            fee = sum(snapshot.txs[t].fee for t in pkg)
            size = sum(snapshot.txs[t].size for t in pkg)
            if total_size + size > size_limit:
                continue
            key = (fee / size, txid)
            if best is None or key > best[0]:
                best = (key, pkg, fee, size)
        if best is None:
            break
        _, pkg, fee, size = best
        selected |= pkg
        remaining -= pkg
        packages.append(frozenset(pkg))
        total_fee += fee
        total_size += size
        min_rate = min(min_rate, fee / size)
    return GreedyBlock(selected, total_fee, total_size,
                       0.0 if not packages else min_rate, packages)


def classify_low_fee(actual_block, snapshot: MempoolSnapshot,
                     size_limit: int = 1_000_000,
                     fee_margin: int = FEE_MARGIN) -> dict:
    """Explain the suspiciously cheap txs a miner included.

    A tx is suspicious when its feerate sits at least fee_margin/byte below
    the cheapest package in the greedy template and it was not itself part
    of any selected package.  Returns {txid: category set}; categories are
    not mutually exclusive and UNEXPLAINED marks txs no rule covers.
    """
    greedy = build_greedy_block(snapshot, size_limit)
    out = {}
    for tx in actual_block:
        if tx.txid in greedy.txids:
            continue
        if tx.feerate > greedy.min_package_feerate - fee_margin:
            continue
        cats = set()
        if tx.priority >= PRIORITY_THRESHOLD:
            cats.add(HIGH_PRIORITY)
        if tx.fee == 0 and not tx.seen:
            cats.add(ZERO_FEE_UNSEEN)
        if len(tx.inputs) > 10 and tx.output_count == 1:
            cats.add(SWEEP)
        if not cats:
            cats.add(UNEXPLAINED)
        out[tx.txid] = cats
    return out


def block_update_gap(view, log) -> dict:
    """Per-block seconds between the newest matched tx's first sighting and
    the block timestamp; blocks with no matched txs are skipped."""
    gaps = {}
    for h in range(view.max_height + 1):
        block = view.block(h)
        newest = None
        for tx_id in range(block.first_tx_id, block.first_tx_id + block.tx_count):
            seen = log.first_seen_seconds(tx_id)
            if seen is not None:
                seen += log.lag_correction
                newest = seen if newest is None else max(newest, seen)
        if newest is not None:
            gaps[h] = block.timestamp - newest
    return gaps


def gap_histogram(gaps: dict, miner_of=None, miner=None) -> dict:
    """One-second buckets, optionally restricted to blocks a given miner
    mined (miner_of: height -> miner label)."""
    hist = Counter()
    for h, gap in gaps.items():
        if miner_of is not None and miner_of(h) != miner:
            continue
        hist[int(gap)] += 1
    return dict(sorted(hist.items()))


def simulate_template_gaps(seed, n_blocks=500, update_interval=60.0,
                           arrival_rate=5.0, mean_block_time=600.0) -> list:
    """Simulate a miner that rebuilds its template every update_interval
    seconds while txs arrive as a Poisson process.

    The newest tx a block can contain arrived before the last rebuild, so at
    high arrival rates the gap is essentially the block time modulo the
    interval — uniform on [0, interval).
    """
    rng = random.Random(seed)
    gaps, t = [], 0.0
    for _ in range(n_blocks):
        t += rng.expovariate(1.0 / mean_block_time)
        last_update = math.floor(t / update_interval) * update_interval
        # newest arrival strictly before the template rebuild
        newest = last_update - rng.expovariate(arrival_rate)
        gaps.append(t - newest)
    return gaps


class MempoolTrace:
    """Replayable arrival trace: txs with arrival times plus the block
    discovery times, for template-staleness simulation."""

    def __init__(self, arrivals, block_times):
        self.arrivals = sorted(arrivals, key=lambda p: (p[0], p[1].txid))
        self.block_times = sorted(block_times)


def fee_loss_estimate(trace: MempoolTrace, interval: float,
                      size_limit: int = 1_000_000, seed: int = 0,
                      bootstrap: int = 200):
    """Relative fee revenue lost to templates refreshed every `interval`
    seconds instead of continuously.

    Each block found at time T uses a template built at T - u*interval with
    u drawn once per block (seeded, so the same u is reused when comparing
    intervals; with uniform tx sizes that makes the loss nondecreasing in
    the interval).  The pool evolves as if mining were continuous — the
    fresh template's txs leave the pool — so per-block losses across
    intervals stay comparable.  Returns (mean loss, ci_low, ci_high) from a
    bootstrap over per-block losses.
    """
    rng = random.Random(seed)
    pool, cursor = {}, 0
    losses = []
    for T in trace.block_times:
        while cursor < len(trace.arrivals) and trace.arrivals[cursor][0] <= T:
            at, tx = trace.arrivals[cursor]
            pool[tx.txid] = (at, tx)
            cursor += 1
        cutoff = T - rng.random() * interval
        fresh = build_greedy_block(
            MempoolSnapshot([tx for _, tx in pool.values()]), size_limit)
        stale = build_greedy_block(
            MempoolSnapshot([tx for at, tx in pool.values() if at <= cutoff]),
            size_limit)
        if fresh.total_fee > 0:
            losses.append(1.0 - stale.total_fee / fresh.total_fee)
        for txid in fresh.txids:
            del pool[txid]
    if not losses:
        return 0.0, 0.0, 0.0
    mean = sum(losses) / len(losses)
    boot_rng = random.Random(seed + 1)
    means = sorted(
        sum(boot_rng.choice(losses) for _ in losses) / len(losses)
        for _ in range(bootstrap))
    lo = means[int(0.025 * bootstrap)]
    hi = means[min(bootstrap - 1, int(0.975 * bootstrap))]
    return mean, lo, hi
