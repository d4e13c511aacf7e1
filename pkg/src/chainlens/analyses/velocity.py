"""Money velocity with self-churn removal, plus UTXO dormancy."""

from dataclasses import dataclass

from ..records import UNSPENT_SENTINEL

DAY = 86_400
DORMANCY_DAYS = 30


@dataclass(frozen=True)
class VelocityParams:
    window: int = 30 * DAY        # bucket width, seconds
    k: int = 4                    # spends faster than this count as churn
    excluded_clusters: frozenset = frozenset()

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


def _refined_tx_value(view, clusters, tx, params) -> int:
    """Output value of one tx with self-churn removed: drop outputs whose
    cluster also appears on the input side (excluded clusters never count as
    a link) and outputs spent again within fewer than k blocks."""
    input_clusters = {
        clusters.cluster_of(rec.address_type, rec.address_id)
        for rec in tx.inputs
    } - set(params.excluded_clusters)
    total = 0
    for rec in tx.outputs:
        if clusters.cluster_of(rec.address_type, rec.address_id) in input_clusters:
            continue
        if rec.linked_tx_id != UNSPENT_SENTINEL:
            if view.height_of_tx(rec.linked_tx_id) - tx.height < params.k:
                continue
        total += rec.value
    return total


def velocity(view, clusters, rates=None, params: VelocityParams = VelocityParams()):
    """Per-window (window start, naive, refined) velocity series.

    Both metrics divide value moved inside the window by the money supply at
    the window's end, where supply is the cumulative value of all coinbase
    outputs.  Naive counts every non-coinbase output; refined removes the
    self-churn identified by clustering and fast respends.  Since the
    refined numerator is a subset of the naive one, refined <= naive on
    every window.  `rates` is accepted for API symmetry with fiat-converting
    reports and does not affect the ratios.
    """
    if view.block_count == 0:
        return []
    t0 = view.block(0).timestamp
    buckets = {}          # window start ts -> [naive_moved, refined_moved]
    supply = 0
    supply_at = {}        # window start ts -> supply at end of window so far
    for h in range(view.max_height + 1):
        block = view.block(h)
        start = t0 + ((block.timestamp - t0) // params.window) * params.window
        bucket = buckets.setdefault(start, [0, 0])
        for tx in block.txs():
            if tx.is_coinbase:
                supply += tx.total_out()
                continue
            bucket[0] += tx.total_out()
            bucket[1] += _refined_tx_value(view, clusters, tx, params)
        supply_at[start] = supply
    rows = []
    for start in sorted(buckets):
        naive_moved, refined_moved = buckets[start]
        s = supply_at[start]
        rows.append((start,
                     naive_moved / s if s else 0.0,
                     refined_moved / s if s else 0.0))
    return rows


def dormancy_fraction(view, threshold_days: int = DORMANCY_DAYS):
    """Per-day value-weighted fraction of the UTXO set that has sat unspent
    for at least threshold_days.  Returns (day index, fraction) rows over
    the chain's timespan; day indexes are UTC days since the epoch."""
    if view.block_count == 0:
        return []
    day_of = [view.block(h).timestamp // DAY for h in range(view.max_height + 1)]
    first_day, last_day = day_of[0], max(day_of)
    span = last_day - first_day + 1
    utxo_delta = [0] * (span + 1)       # UTXO value entering/leaving per day
    dormant_delta = [0] * (span + 1)    # same, counted only once aged
    for h in range(view.max_height + 1):
        created = day_of[h] - first_day
        for tx in view.block(h).txs():
            for rec in tx.outputs:
                if rec.linked_tx_id != UNSPENT_SENTINEL:
                    spent = day_of[view.height_of_tx(rec.linked_tx_id)] - first_day
                else:
                    spent = span        # beyond the horizon
                utxo_delta[created] += rec.value
                utxo_delta[min(spent, span)] -= rec.value
                aged = created + threshold_days
                if spent > aged:
                    dormant_delta[min(aged, span)] += rec.value
                    dormant_delta[min(spent, span)] -= rec.value
    rows, utxo, dormant = [], 0, 0
    for d in range(span):
        utxo += utxo_delta[d]
        dormant += dormant_delta[d]
        rows.append((first_day + d, dormant / utxo if utxo else 0.0))
    return rows
