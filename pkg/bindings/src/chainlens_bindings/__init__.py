"""Notebook-oriented scripting surface over a parsed chain directory.

Three ways to ask the same question, at three speeds:

    chain = ScriptChain("/data/chain")

    # pure scripting: loop over lazily wrapped objects
    [tx for tx in chain.txs() if tx.fee() > 10_000_000]

    # helper call: per-tx predicate runs in the core, optionally parallel
    chain.filter_tx(lambda tx: tx.fee() > 10_000_000)

    # compiled selector: parsed once, evaluated over whole columns at once
    chain.filter_expr("fee > 10000000")

All three return the same transactions.  The bindings hold an immutable
snapshot and contain no analysis logic of their own; everything delegates
to the core engine.
"""

from datetime import datetime, timezone

from chainlens.selector import filter_expr as _core_filter_expr
from chainlens.selector import filter_tx as _core_filter_tx
from chainlens.view import open_view

__all__ = ["ScriptChain", "ScriptBlock", "ScriptTx"]
__version__ = "0.1.0"


def _to_timestamp(when):
    if isinstance(when, (int, float)):
        return when
    if isinstance(when, str):
        when = datetime.strptime(when, "%Y-%m-%d")
    if when.tzinfo is None:
        when = when.replace(tzinfo=timezone.utc)
    return when.timestamp()


class ScriptTx:
    """Lazy wrapper around one transaction; nothing is read until asked."""

    __slots__ = ("_handle",)

    def __init__(self, handle):
        self._handle = handle

    @property
    def tx_id(self):
        return self._handle.tx_id

    @property
    def size(self):
        return self._handle.size

    @property
    def locktime(self):
        return self._handle.locktime

    @property
    def input_count(self):
        return self._handle.input_count

    @property
    def output_count(self):
        return self._handle.output_count

    @property
    def height(self):
        return self._handle.height

    @property
    def is_coinbase(self):
        return self._handle.is_coinbase

    def fee(self):
        return self._handle.fee()

    def total_out(self):
        return self._handle.total_out()

    def total_in(self):
        return self._handle.total_in()

    def __repr__(self):
        return f"<ScriptTx {self.tx_id} @{self.height}>"


class ScriptBlock:
    """Lazy wrapper around one block."""

    __slots__ = ("_handle",)

    def __init__(self, handle):
        self._handle = handle

    @property
    def height(self):
        return self._handle.height

    @property
    def hash(self):
        return self._handle.hash

    @property
    def timestamp(self):
        return self._handle.timestamp

    @property
    def time(self):
        return datetime.fromtimestamp(self._handle.timestamp, timezone.utc)

    @property
    def tx_count(self):
        return self._handle.tx_count

    def txs(self):
        for tx in self._handle.txs():
            yield ScriptTx(tx)

    def total_out(self):
        return sum(tx.total_out() for tx in self._handle.txs())

    def total_fee(self):
        return sum(tx.fee() for tx in self._handle.txs())

    def __repr__(self):
        return f"<ScriptBlock {self.height} txs={self.tx_count}>"


class ScriptChain:
    """A parsed chain directory as a scriptable object.

    Opening is near-instant: only block headers and the offset table are
    touched; transaction wrappers materialize lazily as they are accessed.
    """

    def __init__(self, data_dir, reorg_margin=0):
        self._view = open_view(data_dir, reorg_margin=reorg_margin)

    @classmethod
    def from_view(cls, view):
        chain = cls.__new__(cls)
        chain._view = view
        return chain

    @property
    def view(self):
        return self._view

    @property
    def block_count(self):
        return self._view.block_count

    @property
    def tx_count(self):
        return self._view.tx_count

    def __len__(self):
        return self._view.block_count

    def __getitem__(self, height):
        return ScriptBlock(self._view.block(height))

    def __iter__(self):
        return self.blocks()

    def blocks(self):
        for b in self._view.blocks():
            yield ScriptBlock(b)

    def tx(self, tx_id):
        return ScriptTx(self._view.tx(tx_id))

    def txs(self):
        for tx in self._view.txs():
            yield ScriptTx(tx)

    def range(self, start, end):
        """Blocks whose timestamp falls in [start, end); dates may be
        'YYYY-MM-DD' strings, datetimes, or unix timestamps."""
        t0, t1 = _to_timestamp(start), _to_timestamp(end)
        for h in self._view.heights_in_time_range(t0, t1):
            yield ScriptBlock(self._view.block(h))

    def filter_tx(self, predicate, workers=1):
        """Transactions satisfying a per-tx predicate, evaluated by the
        core (parallel when workers > 1)."""
        ids = _core_filter_tx(self._view, predicate, workers=workers)
        return [self.tx(i) for i in ids]

    def filter_expr(self, source):
        """Transactions satisfying a selector string, compiled once and
        evaluated by the core over whole field columns."""
        return [self.tx(i) for i in _core_filter_expr(self._view, source)]

    def __repr__(self):
        return (f"<ScriptChain blocks={self.block_count} "
                f"txs={self.tx_count}>")
