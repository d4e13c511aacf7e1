"""Block stream sources for the parser.

Two routes produce the same portable stream of ImportBlocks: a JSONL file
(one block object per line) and a deterministic synthetic chain generator
used for tests and benchmarks.  Exchange-rate series load from CSV.
"""

import bisect
import csv
import json
import random
from dataclasses import dataclass, field
from datetime import date as _date

from .records import MAX_VALUE, RangeError

COINBASE_HASH = "0" * 64
COINBASE_INDEX = 0xFFFFFFFF


class ParseError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class StructureError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass
class ImportTx:
    hash: str
    size: int
    locktime: int
    inputs: list       # (prev_tx_hash, prev_out_index)
    outputs: list      # (value, script descriptor dict)

    @property
    def is_coinbase(self) -> bool:
        return len(self.inputs) == 1 and self.inputs[0][0] == COINBASE_HASH

    def to_obj(self):
        return {
            "hash": self.hash, "size": self.size, "locktime": self.locktime,
            "inputs": [{"tx": h, "idx": i} for h, i in self.inputs],
            "outputs": [{"value": v, "script": s} for v, s in self.outputs],
        }


@dataclass
class ImportBlock:
    hash: str
    height: int
    time: int
    txs: list

    def to_json(self) -> str:
        return json.dumps({
            "hash": self.hash, "height": self.height, "time": self.time,
            "txs": [t.to_obj() for t in self.txs],
        }, separators=(",", ":"), sort_keys=True)


def _parse_tx(obj, line):
    try:
        inputs = [(i["tx"], i["idx"]) for i in obj["inputs"]]
        outputs = [(o["value"], o["script"]) for o in obj["outputs"]]
        tx = ImportTx(obj["hash"], obj["size"], obj["locktime"], inputs, outputs)
    except (KeyError, TypeError) as e:
        raise ParseError(f"malformed transaction: {e}", line)
    if len(tx.hash) != 64:
        raise ParseError(f"tx hash must be 64 hex chars: {tx.hash!r}", line)
    for v, _ in outputs:
        if not isinstance(v, int) or v < 0:
            raise ParseError(f"output value {v!r} not a nonnegative integer", line)
        if v > MAX_VALUE:
            raise ParseError(f"output value {v} exceeds 60-bit range", line)
    return tx


def parse_block_line(text: str, line: int) -> ImportBlock:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line)
    try:
        txs = [_parse_tx(t, line) for t in obj["txs"]]
        block = ImportBlock(obj["hash"], obj["height"], obj["time"], txs)
    except (KeyError, TypeError) as e:
        raise ParseError(f"malformed block: {e}", line)
    if not txs:
        raise ParseError("block has no transactions", line)
    return block


def read_import_blocks(path):
    """Stream blocks from a JSONL file without buffering the whole file."""
    expected = None
    with open(path) as f:
        for lineno, text in enumerate(f, start=1):
            if not text.strip():
                continue
            block = parse_block_line(text, lineno)
            if expected is not None and block.height != expected:
                raise StructureError(
                    f"line {lineno}: height {block.height}, expected {expected}")
            expected = block.height + 1
            yield block


def write_import_blocks(blocks, path):
    with open(path, "w") as f:
        for b in blocks:
            f.write(b.to_json() + "\n")


# --- synthetic chains ------------------------------------------------------

@dataclass
class SynthParams:
    seed: int = 0
    blocks: int = 100
    txs_per_block: object = (1, 4)     # int or inclusive (lo, hi) range
    fan_in: object = (1, 3)
    fan_out: object = (1, 3)
    address_reuse_rate: float = 0.3
    coinbase_value: int = 50 * 10**8
    start_height: int = 0

    def __post_init__(self):
        if not 0.0 <= self.address_reuse_rate <= 1.0:
            raise GenerationError("address_reuse_rate must be in [0,1]")


def _draw(rng, spec):
    if isinstance(spec, int):
        return spec
    lo, hi = spec
    return rng.randint(lo, hi)


class SyntheticChain:
    """Deterministic random chain that obeys UTXO discipline.

    While blocks are being generated, a ledger of ground truth accumulates:
    per-tx fees, input->output linkage, and output owner descriptors.  Tests
    use the ledger as an independent oracle for the parser.
    """

    def __init__(self, params: SynthParams):
        self.params = params
        self.fees = {}          # tx hash -> fee
        self.linkage = {}       # tx hash -> [(prev hash, prev out index)]
        self.owners = {}        # (tx hash, out index) -> script descriptor
        self._rng = random.Random(params.seed)
        self._utxos = []        # (tx hash, out index, value)
        self._addresses = []    # reusable spendable descriptors
        self._counter = 0

    def _next_hash(self) -> str:
        self._counter += 1
        return f"{self._rng.getrandbits(128):032x}{self._counter:032x}"

    def _fresh_address(self, spendable_only=False):
        rng = self._rng
        roll = rng.random()
        if spendable_only:
            roll = min(roll, 0.89)
        if roll < 0.70:
            return {"type": "pubkeyhash", "hash": rng.getrandbits(160).to_bytes(20, "big").hex()}
        if roll < 0.78:
            return {"type": "pubkey", "pubkey": rng.getrandbits(264).to_bytes(33, "big").hex()}
        if roll < 0.86:
            n = rng.randint(1, 3)
            m = rng.randint(1, n)
            keys = [rng.getrandbits(264).to_bytes(33, "big").hex() for _ in range(n)]
            return {"type": "multisig", "m": m, "pubkeys": keys}
        if roll < 0.90:
            nested = self._fresh_address(spendable_only=True)
            while nested["type"] == "scripthash":
                nested = self._fresh_address(spendable_only=True)
            return {"type": "scripthash",
                    "hash": rng.getrandbits(160).to_bytes(20, "big").hex(),
                    "nested": nested}
        if roll < 0.95:
            return {"type": "nulldata",
                    "data": rng.getrandbits(80).to_bytes(10, "big").hex()}
        return {"type": "nonstandard",
                "hex": rng.getrandbits(64).to_bytes(8, "big").hex()}

    def _pick_address(self, spendable=True):
        rng = self._rng
        if self._addresses and rng.random() < self.params.address_reuse_rate:
            return rng.choice(self._addresses)
        desc = self._fresh_address(spendable_only=spendable)
        if desc["type"] not in ("nulldata", "nonstandard"):
            self._addresses.append(desc)
        return desc

    def _take_utxos(self, k):
        rng = self._rng
        picked = []
        for _ in range(k):
            i = rng.randrange(len(self._utxos))
            self._utxos[i], self._utxos[-1] = self._utxos[-1], self._utxos[i]
            picked.append(self._utxos.pop())
        return picked

    def _make_outputs(self, total, n):
        """Split `total` into n positive amounts (last may absorb remainder)."""
        rng = self._rng
        outs = []
        remaining = total
        for i in range(n - 1):
            hi = remaining - (n - 1 - i)
            amount = rng.randint(1, max(1, hi * 2 // max(1, n - i)))
            amount = min(amount, hi)
            outs.append(amount)
            remaining -= amount
        outs.append(remaining)
        return outs

    def _make_tx(self):
        rng, p = self._rng, self.params
        f = min(_draw(rng, p.fan_in), len(self._utxos))
        if f == 0:
            raise GenerationError("no unspent outputs available for fan-in")
        spent = self._take_utxos(f)
        total = sum(v for _, _, v in spent)
        fee = min(total // 100, rng.randint(0, 5000))
        g = max(1, min(_draw(rng, p.fan_out), total - fee))
        amounts = self._make_outputs(total - fee, g)
        txh = self._next_hash()
        outputs = []
        for i, amount in enumerate(amounts):
            desc = self._pick_address(spendable=False)
            outputs.append((amount, desc))
            self.owners[(txh, i)] = desc
            if desc["type"] not in ("nulldata", "nonstandard") and amount > 0:
                self._utxos.append((txh, i, amount))
        inputs = [(h, idx) for h, idx, _ in spent]
        self.fees[txh] = fee
        self.linkage[txh] = inputs
        size = 10 + 148 * len(inputs) + 34 * len(outputs)
        locktime = rng.choice((0, 0, 0, rng.randint(1, 500000)))
        return ImportTx(txh, size, locktime, inputs, outputs)

    def _make_coinbase(self, block_fees):
        value = self.params.coinbase_value + block_fees
        txh = self._next_hash()
        desc = self._pick_address()
        self.owners[(txh, 0)] = desc
        if desc["type"] not in ("nulldata", "nonstandard"):
            self._utxos.append((txh, 0, value))
        self.fees[txh] = 0
        self.linkage[txh] = []
        return ImportTx(txh, 120, 0, [(COINBASE_HASH, COINBASE_INDEX)],
                        [(value, desc)])

    def generate(self):
        p = self.params
        t0 = 1_500_000_000
        for i in range(p.blocks):
            height = p.start_height + i
            want = max(1, _draw(self._rng, p.txs_per_block))
            txs = []
            for _ in range(want - 1):
                if not self._utxos:
                    break
                txs.append(self._make_tx())
            coinbase = self._make_coinbase(sum(self.fees[t.hash] for t in txs))
            txs.insert(0, coinbase)
            yield ImportBlock(self._next_hash(), height,
                              t0 + 600 * height, txs)


def generate_synthetic_chain(params: SynthParams):
    """Stream of ImportBlocks; deterministic for a fixed seed."""
    return SyntheticChain(params).generate()


# --- exchange rates --------------------------------------------------------

class RateSeries:
    """Dated fiat-per-coin rates; lookup picks the latest rate at or before
    the requested date."""

    def __init__(self):
        self._dates = {}    # currency -> sorted list of ISO dates
        self._rates = {}    # currency -> rates parallel to _dates

    def add(self, date, currency, rate):
        if rate <= 0:
            raise RangeError(f"rate must be positive, got {rate}")
        dates = self._dates.setdefault(currency, [])
        if dates and date <= dates[-1]:
            raise StructureError(f"dates not strictly increasing for {currency}")
        dates.append(date)
        self._rates.setdefault(currency, []).append(rate)

    def rate_at(self, date, currency) -> float:
        if isinstance(date, _date):
            date = date.isoformat()
        dates = self._dates.get(currency)
        if not dates:
            raise RangeError(f"no rates for currency {currency!r}")
        i = bisect.bisect_right(dates, date)
        if i == 0:
            raise RangeError(f"date {date} precedes first rate entry {dates[0]}")
        return self._rates[currency][i - 1]

    def convert(self, value, date, currency) -> float:
        """Convert base units (satoshi scale, 1e8 per coin) to fiat."""
        return value * self.rate_at(date, currency) / 10**8


def load_exchange_rates(path) -> RateSeries:
    series = RateSeries()
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["date", "currency", "rate"]:
            raise ParseError(f"expected header date,currency,rate, "
                             f"got {reader.fieldnames}")
        for row in reader:
            series.add(row["date"], row["currency"], float(row["rate"]))
    return series
