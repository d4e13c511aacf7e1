"""Operator command line: parse/update/revert pipelines, selector queries,
clustering runs, and report exports."""

import argparse
import sys

from .clustering import HeuristicConfig, build_clusters
from .importer import GenerationError, ParseError, StructureError, \
    read_import_blocks
from .indexstore import IndexHandle
from .mempool import MempoolLog, record_feed
from .parser import ContinuityError, DanglingReferenceError, parse_chain, \
    revert_blocks, update_chain
from .records import ChainStats, ConsistencyError, RangeError, \
    predict_layout_sizes
from .selector import SelectorParseError, filter_expr
from .storage import DataDir, StorageError
from .view import ReorgError, open_view

_ERRORS = (ParseError, StructureError, GenerationError, ContinuityError,
           DanglingReferenceError, RangeError, ConsistencyError, StorageError,
           ReorgError, SelectorParseError, FileNotFoundError, ValueError)

REPORTS = ("multisig-change", "multisig-insecurity", "velocity", "dormancy",
           "attack-curve", "gaps")


def _build_argparser():
    ap = argparse.ArgumentParser(
        prog="chainlens",
        description="transaction-graph parser and analysis toolkit")
    sub = ap.add_subparsers(dest="verb", required=True)

    def add(verb, **kw):
        p = sub.add_parser(verb, **kw)
        p.add_argument("--data-dir", required=True,
                       help="chain data directory")
        return p

    for verb in ("parse", "update"):
        p = add(verb, help=f"{verb} a JSONL block stream")
        p.add_argument("--input", required=True, help="JSONL block file")
        p.add_argument("--cache-mb", type=int, default=64,
                       help="address cache budget (MB, default 64)")
        p.add_argument("--index-cache-mb", type=int, default=64,
                       help="sqlite index cache (MB, default 64)")

    p = add("revert", help="rewind the most recent blocks")
    p.add_argument("-n", "--blocks", type=int, required=True,
                   help="number of blocks to revert")

    p = add("query", help="print tx IDs matching a selector expression")
    p.add_argument("--expr", required=True,
                   help='e.g. "fee > 10000000 and input_count <= 2"')
    p.add_argument("--reorg-margin", type=int, default=6,
                   help="trailing blocks to ignore (default 6)")
    p.add_argument("--out", help="write IDs here instead of stdout")

    p = add("cluster", help="build address clusters")
    p.add_argument("--heuristics", default="multi_input",
                   help="comma list: multi_input,change_fresh,change_multisig")
    p.add_argument("--no-coinjoin-exclusion", action="store_true",
                   help="keep CoinJoin-shaped txs in the edge set")
    p.add_argument("--reorg-margin", type=int, default=6)
    p.add_argument("--out", help="assignment file (default clusters.dat)")

    p = add("report", help="run an analysis and emit CSV")
    p.add_argument("name", choices=REPORTS)
    p.add_argument("--reorg-margin", type=int, default=6)
    p.add_argument("--mempool-feed", help="broadcast feed (for gaps)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="CSV path (default stdout)")

    p = add("export", help="dump per-tx columns as CSV")
    p.add_argument("--reorg-margin", type=int, default=6)
    p.add_argument("--out", help="CSV path (default stdout)")

    add("stats", help="print chain stats and layout size predictions")
    return ap


def _out_stream(path):
    return open(path, "w", newline="") if path else sys.stdout


def _emit(path, header, rows):
    from .analyses import emit_csv
    if path:
        emit_csv(path, header, rows)
    else:
        emit_csv(sys.stdout, header, rows)


def _cmd_stats(args):
    store = DataDir(args.data_dir, create=True)
    try:
        stats = store.stats()
    finally:
        store.close()
    print(f"txs={stats.n_tx} inputs={stats.n_in} outputs={stats.n_out}")
    for layout, size in predict_layout_sizes(stats).items():
        print(f"layout[{layout}]={size} bytes")


def _cmd_report(args):
    from . import analyses
    view = open_view(args.data_dir, reorg_margin=args.reorg_margin)
    if args.name in ("multisig-change", "multisig-insecurity"):
        index = IndexHandle(args.data_dir, readonly=True)
        scan = (analyses.multisig_access_change_scan
                if args.name == "multisig-change"
                else analyses.multisig_insecurity_scan)
        monthly, _ = scan(view, index)
        _emit(args.out, ("month", "count", "total_value"),
              ((m, c, v) for m, (c, v) in monthly.items()))
    elif args.name == "velocity":
        clusters = build_clusters(view)
        rows = analyses.velocity(view, clusters)
        _emit(args.out, ("window_start", "naive", "refined"), rows)
    elif args.name == "dormancy":
        _emit(args.out, ("day", "dormant_fraction"),
              analyses.dormancy_fraction(view))
    elif args.name == "attack-curve":
        curve = analyses.attack_success_curve(args.seed)
        _emit(args.out, ("inputs", "success_rate"),
              ((k + 1, rate) for k, rate in enumerate(curve)))
    elif args.name == "gaps":
        if not args.mempool_feed:
            raise ValueError("report gaps requires --mempool-feed")
        index = IndexHandle(args.data_dir, readonly=True)
        log = record_feed(args.mempool_feed).align(index, view.tx_count)
        gaps = analyses.block_update_gap(view, log)
        _emit(args.out, ("second", "blocks"),
              analyses.gap_histogram(gaps).items())


def _cmd_export(args):
    view = open_view(args.data_dir, reorg_margin=args.reorg_margin)
    cols = view.columns()
    rows = zip(range(view.tx_count), cols["height"], cols["size"],
               cols["locktime"], cols["input_count"], cols["output_count"],
               cols["total_in"], cols["total_out"], cols["fee"])
    _emit(args.out, ("tx_id", "height", "size", "locktime", "input_count",
                     "output_count", "total_in", "total_out", "fee"), rows)


def run(argv=None) -> int:
    args = _build_argparser().parse_args(argv)
    try:
        if args.verb in ("parse", "update"):
            go = parse_chain if args.verb == "parse" else update_chain
            stats = go(read_import_blocks(args.input), args.data_dir,
                       cache_budget=args.cache_mb * 2**20,
                       index_cache_mb=args.index_cache_mb)
            print(f"txs={stats.n_tx} inputs={stats.n_in} outputs={stats.n_out}")
        elif args.verb == "revert":
            revert_blocks(args.data_dir, args.blocks)
            print(f"reverted {args.blocks} blocks")
        elif args.verb == "query":
            ids = filter_expr(open_view(args.data_dir,
                                        reorg_margin=args.reorg_margin),
                              args.expr)
            out = _out_stream(args.out)
            for tx_id in ids:
                print(tx_id, file=out)
            if args.out:
                out.close()
        elif args.verb == "cluster":
            view = open_view(args.data_dir, reorg_margin=args.reorg_margin)
            enabled = frozenset(args.heuristics.split(","))
            config = HeuristicConfig(
                enabled=enabled,
                coinjoin_exclusion=not args.no_coinjoin_exclusion)
            index = IndexHandle(args.data_dir, readonly=True) \
                if "change_multisig" in enabled else None
            clusters = build_clusters(view, config, index=index)
            target = args.out or str(view.path / "clusters.dat")
            clusters.write(target)
            print(f"clusters={clusters.cluster_count} "
                  f"addresses={clusters.space.total} file={target}")
        elif args.verb == "report":
            _cmd_report(args)
        elif args.verb == "export":
            _cmd_export(args)
        elif args.verb == "stats":
            _cmd_stats(args)
    except _ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
