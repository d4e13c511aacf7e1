"""chainlens: a compact transaction-graph store and analysis toolkit.

The parser turns JSONL block streams into memory-mappable flat files with
dense IDs; ChainView maps those files read-only for iteration, selector
queries, clustering, and the bundled analyses.
"""

from .records import (
    AddressType, BlockRecord, ChainStats, ConsistencyError, InOutRecord,
    RangeError, TxRecord, UNSPENT_SENTINEL, predict_layout_sizes,
)
from .storage import DataDir, StorageError
from .importer import (
    ImportBlock, ImportTx, ParseError, StructureError, GenerationError,
    RateSeries, SynthParams, generate_synthetic_chain, load_exchange_rates,
    read_import_blocks, write_import_blocks,
)
from .parser import (
    ChainParser, ContinuityError, DanglingReferenceError, parse_chain,
    revert_blocks, update_chain,
)
from .indexstore import IndexHandle
from .view import ChainView, ReorgError, map_reduce, open_view
from .selector import (
    SelectorExpr, SelectorParseError, filter_expr, filter_tx,
)
from .clustering import (
    ClusterSet, HeuristicConfig, build_clusters, cluster_size_histogram,
    propagate_tags,
)
from .mempool import MempoolLog, record_feed, wait_time

__version__ = "0.1.0"

__all__ = [
    "AddressType", "BlockRecord", "ChainStats", "ConsistencyError",
    "InOutRecord", "RangeError", "TxRecord", "UNSPENT_SENTINEL",
    "predict_layout_sizes", "DataDir", "StorageError", "ImportBlock",
    "ImportTx", "ParseError", "StructureError", "GenerationError",
    "RateSeries", "SynthParams", "generate_synthetic_chain",
    "load_exchange_rates", "read_import_blocks", "write_import_blocks",
    "ChainParser", "ContinuityError", "DanglingReferenceError",
    "parse_chain", "revert_blocks", "update_chain", "IndexHandle",
    "ChainView", "ReorgError", "map_reduce", "open_view", "SelectorExpr",
    "SelectorParseError", "filter_expr", "filter_tx", "ClusterSet",
    "HeuristicConfig", "build_clusters", "cluster_size_histogram",
    "propagate_tags", "MempoolLog", "record_feed", "wait_time",
]
