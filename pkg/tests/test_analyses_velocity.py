import pytest

from chainlens.analyses.velocity import (
    DAY, VelocityParams, dormancy_fraction, velocity,
)
from chainlens.clustering import build_clusters
from chainlens.importer import (
    COINBASE_HASH, COINBASE_INDEX, ImportBlock, ImportTx,
)
from chainlens.view import open_view

from conftest import chain_blocks, parse_blocks

COIN = 10**8


def pkh(tag):
    return {"type": "pubkeyhash", "hash": f"{tag:040x}"}


def tx(tag, inputs, outputs, size=200):
    return ImportTx(hash=f"{tag:064x}", size=size, locktime=0,
                    inputs=inputs, outputs=outputs)


def cb(tag, value=50 * COIN, to=None):
    return tx(tag, [(COINBASE_HASH, COINBASE_INDEX)],
              [(value, to or pkh(tag))], size=120)


def block(height, txs, t0=1_500_000_000, spacing=600):
    return ImportBlock(hash=f"b{height:063x}", height=height,
                       time=t0 + spacing * height, txs=txs)


def churn_chain():
    """Five blocks, one day-window: a split, a partial self-return through a
    co-spend cluster, and a slow respend."""
    cb1, cb2, cb3, cb4, cb5 = (cb(i) for i in (1, 2, 3, 4, 5))
    tx_a = tx(10, [(cb1.hash, 0)],
              [(20 * COIN, pkh(103)), (30 * COIN, pkh(104))])
    tx_b = tx(11, [(tx_a.hash, 0), (tx_a.hash, 1)],
              [(10 * COIN, pkh(103)), (40 * COIN, pkh(105))])
    tx_c = tx(12, [(tx_b.hash, 1)], [(40 * COIN, pkh(106))])
    return [block(0, [cb1]), block(1, [cb2, tx_a]), block(2, [cb3, tx_b]),
            block(3, [cb4]), block(4, [cb5, tx_c])], tx_a, tx_b, tx_c


def test_coinbase_only_chain_has_zero_velocity(tmp_path):
    parse_blocks([block(h, [cb(h + 1)]) for h in range(10)], tmp_path)
    view = open_view(tmp_path, reorg_margin=0)
    rows = velocity(view, build_clusters(view))
    assert len(rows) == 1
    assert rows[0][1] == rows[0][2] == 0.0


def test_velocity_against_hand_ledger(tmp_path):
    blocks, tx_a, tx_b, tx_c = churn_chain()
    parse_blocks(blocks, tmp_path)
    view = open_view(tmp_path, reorg_margin=0)
    clusters = build_clusters(view)
    rows = velocity(view, clusters, params=VelocityParams(window=DAY, k=2))
    assert len(rows) == 1
    start, naive, refined = rows[0]
    assert start == blocks[0].time
    supply = 5 * 50 * COIN
    # naive: every non-coinbase output counts
    assert naive == pytest.approx(140 * COIN / supply)
    # refined ledger, tx by tx:
    #   tx_a: both outputs respent one block later (< k=2)      -> 0
    #   tx_b: out0 returns to a co-spend cluster member         -> 40
    #   tx_c: unspent payment to a fresh address                -> 40
    assert refined == pytest.approx(80 * COIN / supply)


def test_velocity_excluded_clusters_break_links(tmp_path):
    blocks, tx_a, tx_b, tx_c = churn_chain()
    parse_blocks(blocks, tmp_path)
    view = open_view(tmp_path, reorg_margin=0)
    clusters = build_clusters(view)
    # the co-spend cluster of tx_b's inputs no longer counts as a self link
    rec = view.tx(4).inputs[0]          # tx_b is tx id 4 (block order)
    cid = clusters.cluster_of(rec.address_type, rec.address_id)
    rows = velocity(view, clusters,
                    params=VelocityParams(window=DAY, k=2,
                                          excluded_clusters=frozenset({cid})))
    supply = 5 * 50 * COIN
    assert rows[0][2] == pytest.approx(90 * COIN / supply)


def test_refined_never_exceeds_naive(medium_chain):
    _, d = medium_chain
    view = open_view(d, reorg_margin=0)
    clusters = build_clusters(view)
    rows = velocity(view, clusters, params=VelocityParams(window=3600))
    assert len(rows) > 1
    for _, naive, refined in rows:
        assert 0.0 <= refined <= naive


def test_velocity_params_validated():
    with pytest.raises(ValueError):
        VelocityParams(k=0)


def test_empty_view_rows():
    class Empty:
        block_count = 0
    assert velocity(Empty(), None) == []
    assert dormancy_fraction(Empty()) == []


# --- dormancy -------------------------------------------------------------

def test_dormancy_against_hand_ledger(tmp_path):
    # one block a day; the first coinbase is respent after a day, everything
    # else just sits and ages past the 3-day threshold
    cb0 = cb(1, value=100 * COIN)
    spend = tx(20, [(cb0.hash, 0)], [(100 * COIN, pkh(120))])
    blocks = [block(0, [cb0], spacing=DAY)]
    blocks.append(ImportBlock(hash=f"b{1:063x}", height=1,
                              time=blocks[0].time + DAY,
                              txs=[cb(2, value=100 * COIN), spend]))
    for h in range(2, 7):
        blocks.append(ImportBlock(hash=f"b{h:063x}", height=h,
                                  time=blocks[0].time + h * DAY,
                                  txs=[cb(h + 1, value=100 * COIN)]))
    parse_blocks(blocks, tmp_path)
    view = open_view(tmp_path, reorg_margin=0)
    rows = dormancy_fraction(view, threshold_days=3)
    day0 = blocks[0].time // DAY
    fractions = {d - day0: f for d, f in rows}
    assert fractions == {
        0: 0.0, 1: 0.0, 2: 0.0, 3: 0.0,
        4: pytest.approx(200 / 500),    # spend's output + coinbase 1 aged
        5: pytest.approx(300 / 600),
        6: pytest.approx(400 / 700),
    }


def test_dormancy_zero_when_everything_young(medium_chain):
    _, d = medium_chain
    view = open_view(d, reorg_margin=0)
    rows = dormancy_fraction(view, threshold_days=30)
    assert all(f == 0.0 for _, f in rows)
    # with a zero-day threshold every unspent output is dormant on arrival
    rows0 = dormancy_fraction(view, threshold_days=0)
    assert rows0[-1][1] > 0.0
