import itertools

import pytest
from scipy import stats

from chainlens.analyses.blockspace import (
    BlockTx, FEE_MARGIN, GreedyBlock, HIGH_PRIORITY, MemTx, MempoolSnapshot,
    MempoolTrace, PRIORITY_THRESHOLD, SWEEP, UNEXPLAINED, ZERO_FEE_UNSEEN,
    block_update_gap, build_greedy_block, classify_low_fee, fee_loss_estimate,
    gap_histogram, simulate_template_gaps,
)


def mem(txid, fee, size, parents=()):
    return MemTx(txid, fee, size, frozenset(parents))


# --- snapshot -------------------------------------------------------------

def test_snapshot_rejects_parent_cycles():
    with pytest.raises(ValueError):
        MempoolSnapshot([mem("a", 1, 100, ["b"]), mem("b", 1, 100, ["a"])])


def test_ancestors_transitive():
    s = MempoolSnapshot([mem("a", 1, 100), mem("b", 1, 100, ["a"]),
                         mem("c", 1, 100, ["b"]), mem("d", 1, 100)])
    assert s.ancestors("c") == {"a", "b", "c"}
    assert s.ancestors("a") == {"a"}
    # out-of-snapshot parents are ignored
    s2 = MempoolSnapshot([mem("x", 1, 100, ["gone"])])
    assert s2.ancestors("x") == {"x"}


# --- greedy template ------------------------------------------------------

def exhaustive_best_fee(snapshot, size_limit):
    """Max total fee over every ancestor-closed subset that fits."""
    ids = list(snapshot.txs)
    best = 0
    for r in range(len(ids) + 1):
        for combo in itertools.combinations(ids, r):
            chosen = set(combo)
            if any(not snapshot.ancestors(t) <= chosen for t in chosen):
                continue
            if sum(snapshot.txs[t].size for t in chosen) > size_limit:
                continue
            best = max(best, sum(snapshot.txs[t].fee for t in chosen))
    return best


def test_everything_fits_when_there_is_room():
    s = MempoolSnapshot([mem("a", 500, 100), mem("b", 10, 100),
                         mem("c", 0, 100)])
    g = build_greedy_block(s, size_limit=1000)
    assert g.txids == {"a", "b", "c"}
    assert g.total_fee == 510 and g.total_size == 300
    assert g.min_package_feerate == 0.0 / 100


def test_greedy_prefers_high_feerate_under_pressure():
    s = MempoolSnapshot([mem("hi", 1000, 100), mem("mid", 400, 100),
                         mem("lo", 10, 100)])
    g = build_greedy_block(s, size_limit=200)
    assert g.txids == {"hi", "mid"}
    assert g.min_package_feerate == 4.0


def test_cpfp_child_lifts_parent():
    # parent alone pays 0.1/byte, child pays 20/byte; as a package they
    # beat the 5/byte competitor for a one-package block
    s = MempoolSnapshot([mem("parent", 10, 100), mem("child", 2000, 100,
                                                     ["parent"]),
                         mem("rival", 1000, 200)])
    g = build_greedy_block(s, size_limit=200)
    assert g.txids == {"parent", "child"}
    assert g.packages == [frozenset({"parent", "child"})]
    assert g.total_fee == 2010
    assert g.total_fee == exhaustive_best_fee(s, 200)


def test_greedy_matches_exhaustive_on_small_pools():
    import random
    rng = random.Random(9)
    for trial in range(30):
        txs, ids = [], []
        for i in range(rng.randrange(1, 8)):
            parents = frozenset(rng.sample(ids, k=min(len(ids),
                                                      rng.randrange(0, 2))))
            t = MemTx(f"t{i}", rng.randrange(0, 3000),
                      rng.choice([100, 100, 100, 250]), parents)
            txs.append(t)
            ids.append(t.txid)
        s = MempoolSnapshot(txs)
        limit = rng.choice([300, 500, 10_000])
        g = build_greedy_block(s, limit)
        opt = exhaustive_best_fee(s, limit)
        # greedy may be suboptimal but never overshoots the true optimum
        # and never violates the size limit or ancestor closure
        assert g.total_fee <= opt
        assert g.total_size <= limit
        for t in g.txids:
            assert s.ancestors(t) <= g.txids
        assert g.total_fee == sum(s.txs[t].fee for t in g.txids)


# --- low-fee classification ----------------------------------------------

def snapshot_with_floor():
    """A pool whose greedy template floor is 10/byte."""
    return MempoolSnapshot([mem(f"p{i}", 1000, 100) for i in range(5)])


def test_nothing_suspicious_when_everything_fits():
    s = snapshot_with_floor()
    block = [BlockTx(f"p{i}", 1000, 100) for i in range(5)]
    assert classify_low_fee(block, s, size_limit=1_000_000) == {}


def test_sweep_classification():
    s = snapshot_with_floor()
    sweep = BlockTx("s", fee=100, size=400,
                    inputs=tuple((10, 1) for _ in range(15)),
                    output_count=1, seen=True)
    got = classify_low_fee([sweep], s, size_limit=500)
    assert got == {"s": {SWEEP}}


def test_zero_fee_unseen_classification():
    s = snapshot_with_floor()
    tx = BlockTx("z", fee=0, size=200, inputs=((5, 1),), output_count=2,
                 seen=False)
    got = classify_low_fee([tx], s, size_limit=500)
    assert got == {"z": {ZERO_FEE_UNSEEN}}


def test_high_priority_classification():
    s = snapshot_with_floor()
    old_rich = BlockTx("h", fee=100, size=250,
                       inputs=((100_000_000, 144),), output_count=2)
    assert old_rich.priority >= PRIORITY_THRESHOLD
    got = classify_low_fee([old_rich], s, size_limit=500)
    assert got == {"h": {HIGH_PRIORITY}}


def test_unexplained_classification():
    s = snapshot_with_floor()
    tx = BlockTx("u", fee=1, size=300, inputs=((5, 1),), output_count=2,
                 seen=True)
    got = classify_low_fee([tx], s, size_limit=500)
    assert got == {"u": {UNEXPLAINED}}


def test_margin_spares_almost_competitive_txs():
    s = snapshot_with_floor()          # floor 10/byte
    near = BlockTx("near", fee=600, size=100, inputs=((5, 1),))
    assert classify_low_fee([near], s, size_limit=500, fee_margin=5) == {}


def test_cpfp_lifted_parent_not_suspicious():
    # the cheap parent rides into the greedy template inside its child's
    # package, so the classifier never questions it
    s = MempoolSnapshot([mem("parent", 10, 100),
                         mem("child", 2000, 100, ["parent"])])
    block = [BlockTx("parent", 10, 100, inputs=((5, 1),)),
             BlockTx("child", 2000, 100, inputs=((5, 1),))]
    assert classify_low_fee(block, s, size_limit=1_000_000) == {}


# --- update gaps ----------------------------------------------------------

def test_block_update_gap_and_histogram(medium_chain, tmp_path):
    from chainlens.indexstore import IndexHandle
    from chainlens.mempool import record_feed
    from chainlens.view import open_view
    from test_mempool import chain_feed
    _, d = medium_chain
    view = open_view(d, reorg_margin=0)
    with IndexHandle(d, readonly=True) as index:
        log = record_feed(chain_feed(view, index, tmp_path, offset_ms=-42_000))
        log.align(index, view.tx_count)
    gaps = block_update_gap(view, log)
    assert set(gaps) == set(range(view.max_height + 1))
    assert all(g == pytest.approx(42.0) for g in gaps.values())
    hist = gap_histogram(gaps)
    assert hist == {42: view.max_height + 1}
    # restriction to one miner's blocks
    hist_even = gap_histogram(gaps, miner_of=lambda h: h % 2, miner=0)
    assert hist_even == {42: (view.max_height + 2) // 2}


def test_simulated_gaps_look_uniform_over_the_interval():
    gaps = simulate_template_gaps(seed=1, n_blocks=2000, update_interval=60,
                                  arrival_rate=50.0)
    assert all(g >= 0 for g in gaps)
    inside = [g for g in gaps if g < 60]
    assert len(inside) / len(gaps) > 0.95     # tail above 60 is rare
    stat = stats.kstest(inside, stats.uniform(loc=0, scale=60).cdf)
    assert stat.pvalue > 0.01


# --- fee loss -------------------------------------------------------------

def uniform_trace(seed=0, n_blocks=30, rate=2.0, block_time=120.0):
    import random
    rng = random.Random(seed)
    t, arrivals = 0.0, []
    horizon = n_blocks * block_time
    i = 0
    while t < horizon:
        t += rng.expovariate(rate)
        arrivals.append((t, MemTx(f"a{i}", rng.randrange(1, 5000), 100)))
        i += 1
    block_times = [(k + 1) * block_time for k in range(n_blocks)]
    return MempoolTrace(arrivals, block_times)


def test_fee_loss_zero_interval_is_lossless():
    mean, lo, hi = fee_loss_estimate(uniform_trace(), interval=0.0)
    assert (mean, lo, hi) == (0.0, 0.0, 0.0)


def test_fee_loss_monotone_in_interval():
    trace = uniform_trace(seed=3)
    means = [fee_loss_estimate(trace, interval=iv, size_limit=1000, seed=7)[0]
             for iv in (0.0, 15.0, 60.0, 300.0)]
    assert means == sorted(means)
    assert means[-1] > 0.0


def test_fee_loss_ci_brackets_mean():
    mean, lo, hi = fee_loss_estimate(uniform_trace(seed=4), interval=90.0,
                                     size_limit=1000, seed=2)
    assert lo <= mean <= hi
    assert 0.0 <= lo and hi <= 1.0
