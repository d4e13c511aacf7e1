from chainlens.analyses.multisig import (
    multisig_access_change_scan, multisig_insecurity_scan,
)
from chainlens.indexstore import IndexHandle
from chainlens.importer import (
    COINBASE_HASH, COINBASE_INDEX, ImportBlock, ImportTx,
)
from chainlens.view import open_view

from conftest import parse_blocks

COIN = 10**8
K1, K2, K3 = ("02" + "aa" * 32, "02" + "bb" * 32, "02" + "cc" * 32)


def ms(*keys, m=2):
    return {"type": "multisig", "m": m, "pubkeys": list(keys)}


def pkh(tag):
    return {"type": "pubkeyhash", "hash": f"{tag:040x}"}


def tx(tag, inputs, outputs, size=250):
    return ImportTx(hash=f"{tag:064x}", size=size, locktime=0,
                    inputs=inputs, outputs=outputs)


def cb(tag, to):
    return tx(tag, [(COINBASE_HASH, COINBASE_INDEX)], [(50 * COIN, to)],
              size=120)


def chain(spend_txs, coinbase_descs):
    """One coinbase per block paying coinbase_descs[h]; spend_txs[h] ride in
    block h."""
    blocks = []
    for h, desc in enumerate(coinbase_descs):
        txs = [cb(1000 + h, desc)] + spend_txs.get(h, [])
        blocks.append(ImportBlock(hash=f"e{h:063x}", height=h,
                                  time=1_500_000_000 + 600 * h, txs=txs))
    return blocks


def scans(tmp_path, blocks):
    parse_blocks(blocks, tmp_path)
    view = open_view(tmp_path, reorg_margin=0)
    with IndexHandle(tmp_path, readonly=True) as index:
        return (multisig_access_change_scan(view, index),
                multisig_insecurity_scan(view, index))


def test_key_rotation_flagged(tmp_path):
    rotate = tx(1, [(cb(1000, ms(K1, K2)).hash, 0)],
                [(50 * COIN, ms(K2, K3))])
    blocks = chain({1: [rotate]}, [ms(K1, K2), pkh(9)])
    (monthly, flagged), _ = scans(tmp_path, blocks)
    assert flagged == [2]                 # cb0, cb1, rotate -> tx id 2
    assert monthly == {"2017-07": (1, 50 * COIN)}


def test_identical_key_sets_not_flagged(tmp_path):
    hold = tx(1, [(cb(1000, ms(K1, K2)).hash, 0)],
              [(50 * COIN, ms(K1, K2))])
    blocks = chain({1: [hold]}, [ms(K1, K2), pkh(9)])
    (monthly, flagged), _ = scans(tmp_path, blocks)
    assert flagged == [] and monthly == {}


def test_disjoint_key_sets_not_flagged(tmp_path):
    replace = tx(1, [(cb(1000, ms(K1, K2)).hash, 0)],
                 [(50 * COIN, ms(K3, "02" + "dd" * 32))])
    blocks = chain({1: [replace]}, [ms(K1, K2), pkh(9)])
    (monthly, flagged), _ = scans(tmp_path, blocks)
    assert flagged == []


def test_shape_gate_one_in_one_out(tmp_path):
    split = tx(1, [(cb(1000, ms(K1, K2)).hash, 0)],
               [(25 * COIN, ms(K2, K3)), (25 * COIN, pkh(7))])
    blocks = chain({1: [split]}, [ms(K1, K2), pkh(9)])
    (monthly, flagged), _ = scans(tmp_path, blocks)
    assert flagged == []


def test_scripthash_nesting_resolved(tmp_path):
    wrapped_in = {"type": "scripthash", "hash": "11" * 20,
                  "nested": ms(K1, K2)}
    wrapped_out = {"type": "scripthash", "hash": "22" * 20,
                   "nested": ms(K2, K3)}
    rotate = tx(1, [(cb(1000, wrapped_in).hash, 0)],
                [(50 * COIN, wrapped_out)])
    blocks = chain({1: [rotate]}, [wrapped_in, pkh(9)])
    (monthly, flagged), _ = scans(tmp_path, blocks)
    assert flagged == [2]


def test_park_and_return_flagged(tmp_path):
    park = tx(1, [(cb(1000, ms(K1, K2)).hash, 0)], [(50 * COIN, pkh(7))])
    back = tx(2, [(park.hash, 0)], [(50 * COIN, ms(K1, K2))])
    blocks = chain({1: [park], 2: [back]}, [ms(K1, K2), pkh(8), pkh(9)])
    _, (monthly, flagged) = scans(tmp_path, blocks)
    assert flagged == [2]                 # park is tx id 2
    assert monthly == {"2017-07": (1, 50 * COIN)}


def test_park_never_respent_not_flagged(tmp_path):
    park = tx(1, [(cb(1000, ms(K1, K2)).hash, 0)], [(50 * COIN, pkh(7))])
    blocks = chain({1: [park]}, [ms(K1, K2), pkh(9)])
    _, (monthly, flagged) = scans(tmp_path, blocks)
    assert flagged == []


def test_park_respent_to_plain_not_flagged(tmp_path):
    park = tx(1, [(cb(1000, ms(K1, K2)).hash, 0)], [(50 * COIN, pkh(7))])
    away = tx(2, [(park.hash, 0)], [(50 * COIN, pkh(8))])
    blocks = chain({1: [park], 2: [away]}, [ms(K1, K2), pkh(8), pkh(9)])
    _, (monthly, flagged) = scans(tmp_path, blocks)
    assert flagged == []


def test_multisig_to_multisig_direct_not_insecure(tmp_path):
    hold = tx(1, [(cb(1000, ms(K1, K2)).hash, 0)], [(50 * COIN, ms(K2, K3))])
    back = tx(2, [(hold.hash, 0)], [(50 * COIN, ms(K1, K2))])
    blocks = chain({1: [hold], 2: [back]}, [ms(K1, K2), pkh(8), pkh(9)])
    _, (monthly, flagged) = scans(tmp_path, blocks)
    assert flagged == []


def test_two_output_park_not_flagged(tmp_path):
    park = tx(1, [(cb(1000, ms(K1, K2)).hash, 0)],
              [(25 * COIN, pkh(7)), (25 * COIN, pkh(8))])
    back = tx(2, [(park.hash, 0)], [(25 * COIN, ms(K1, K2))])
    blocks = chain({1: [park], 2: [back]}, [ms(K1, K2), pkh(8), pkh(9)])
    _, (monthly, flagged) = scans(tmp_path, blocks)
    assert flagged == []
