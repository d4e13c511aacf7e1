"""Multisig confidentiality and security scans.

Both scans resolve access structures through scripthash nesting, so a
multisig wrapped in P2SH counts as multisig.
"""

from collections import defaultdict
from datetime import datetime, timezone

from ..records import AddressType


def _month_of(ts):
    return datetime.fromtimestamp(ts, timezone.utc).strftime("%Y-%m")


def _multisig_payload(index, addr_type, addr_id):
    """MultisigPayload for an address, following scripthash nesting; None
    when the address is not multisig."""
    t = AddressType(addr_type)
    if t == AddressType.SCRIPTHASH:
        p = index.script_payload(addr_type, addr_id)
        return _multisig_payload(index, p.nested_type, p.nested_id)
    if t == AddressType.MULTISIG:
        return index.script_payload(addr_type, addr_id)
    return None


def multisig_access_change_scan(view, index):
    """Txs that publicly expose an access-structure change: exactly one
    input and one output, both multisig, key sets overlapping but unequal.

    Returns {month: (count, total value)} plus the flagged tx IDs.
    """
    monthly = defaultdict(lambda: [0, 0])
    flagged = []
    for tx in view.txs():
        if tx.input_count != 1 or tx.output_count != 1:
            continue
        src = _multisig_payload(index, tx.inputs[0].address_type,
                                tx.inputs[0].address_id)
        dst = _multisig_payload(index, tx.outputs[0].address_type,
                                tx.outputs[0].address_id)
        if src is None or dst is None:
            continue
        a, b = set(src.key_ids), set(dst.key_ids)
        if a & b and a != b:
            month = _month_of(view.block(tx.height).timestamp)
            monthly[month][0] += 1
            monthly[month][1] += tx.outputs[0].value
            flagged.append(tx.tx_id)
    return {m: tuple(v) for m, v in sorted(monthly.items())}, flagged


def multisig_insecurity_scan(view, index):
    """Txs that park multisig-held coins at a single non-multisig address
    that later returns them to a multisig address.

    Returns {month: (count, total value)} plus the flagged tx IDs.
    """
    monthly = defaultdict(lambda: [0, 0])
    flagged = []
    for tx in view.txs():
        if tx.is_coinbase or tx.output_count != 1:
            continue
        structures = set()
        ok = True
        for rec in tx.inputs:
            p = _multisig_payload(index, rec.address_type, rec.address_id)
            if p is None:
                ok = False
                break
            structures.add((p.m, p.n))
        if not ok or len(structures) != 1:
            continue
        out = tx.outputs[0]
        if _multisig_payload(index, out.address_type, out.address_id):
            continue      # output still multisig: not the weak pattern
        spender = view.spending_tx(tx.tx_id, 0)
        if spender is None:
            continue
        spender_tx = view.tx(spender)
        if any(_multisig_payload(index, o.address_type, o.address_id)
               for o in spender_tx.outputs):
            month = _month_of(view.block(tx.height).timestamp)
            monthly[month][0] += 1
            monthly[month][1] += out.value
            flagged.append(tx.tx_id)
    return {m: tuple(v) for m, v in sorted(monthly.items())}, flagged
