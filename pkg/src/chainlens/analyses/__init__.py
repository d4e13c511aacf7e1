"""Application analyses built on the core library, each emitting
CSV-ready series."""

import csv
from datetime import datetime, timezone

from .multisig import multisig_access_change_scan, multisig_insecurity_scan
from .privatesend import (
    DENOMINATIONS, INSUFFICIENT_FUNDS, Coin, DenominatedWallet, MixSimulator,
    attack_success_curve, cluster_intersection_attack, select_ps_inputs,
)
from .blockspace import (
    BlockTx, MemTx, MempoolSnapshot, MempoolTrace, block_update_gap,
    build_greedy_block, classify_low_fee, fee_loss_estimate, gap_histogram,
    simulate_template_gaps,
)
from .velocity import VelocityParams, dormancy_fraction, velocity

__all__ = [
    "multisig_access_change_scan", "multisig_insecurity_scan",
    "DENOMINATIONS", "INSUFFICIENT_FUNDS", "Coin", "DenominatedWallet",
    "MixSimulator", "attack_success_curve", "cluster_intersection_attack",
    "select_ps_inputs", "BlockTx", "MemTx", "MempoolSnapshot", "MempoolTrace",
    "block_update_gap", "build_greedy_block", "classify_low_fee",
    "fee_loss_estimate", "gap_histogram", "simulate_template_gaps",
    "VelocityParams", "dormancy_fraction", "velocity",
    "month_of", "emit_csv",
]


def month_of(timestamp: int) -> str:
    return datetime.fromtimestamp(timestamp, timezone.utc).strftime("%Y-%m")


def emit_csv(out, header, rows):
    """Write rows to a file object or path; returns the row count."""
    close = False
    if isinstance(out, str):
        out = open(out, "w", newline="")
        close = True
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow(row)
            count += 1
        return count
    finally:
        if close:
            out.close()
