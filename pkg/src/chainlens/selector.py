"""Compiled selector expressions over per-transaction fields.

A small arithmetic/boolean predicate language replaces ad-hoc per-tx
callbacks for bulk filtering: the expression is parsed once and evaluated
over numpy field columns for the whole view at once.  A plain per-tx
interpreter of the same AST is also provided; the two must always agree.

Grammar:
    expr := or
    or   := and ("or" and)*
    and  := cmp ("and" cmp)*
    cmp  := sum (("<"|">"|"<="|">="|"=="|"!=") sum)?
    sum  := term (("+"|"-") term)*
    term := atom (("*"|"/") atom)*
    atom := number | field | "(" expr ")" | "not" atom
"""

import re

import numpy as np

FIELDS = ("fee", "input_count", "output_count", "total_out", "total_in",
          "locktime", "size", "height")

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+"
                    r"|\.\d+|\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
                    r"|(?P<op><=|>=|==|!=|[<>+\-*/()]))")


class SelectorParseError(ValueError):
    def __init__(self, message, pos):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise SelectorParseError(f"unexpected character {text[pos]!r}", pos)
            break
        if m.group("num") is not None:
            raw = m.group("num")
            value = float(raw) if any(c in raw for c in ".eE") else int(raw)
            tokens.append(("num", value, m.start("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def accept_op(self, *ops):
        kind, val, _ = self.peek()
        if kind == "op" and val in ops:
            return self.next()[1]
        return None

    def accept_name(self, *names):
        kind, val, _ = self.peek()
        if kind == "name" and val in names:
            self.next()
            return val
        return None

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise SelectorParseError(f"unexpected token {val!r}", pos)
        return node

    def expr(self):
        node = self.and_()
        while self.accept_name("or"):
            node = ("or", node, self.and_())
        return node

    def and_(self):
        node = self.cmp()
        while self.accept_name("and"):
            node = ("and", node, self.cmp())
        return node

    def cmp(self):
        node = self.sum_()
        op = self.accept_op("<", ">", "<=", ">=", "==", "!=")
        if op:
            node = ("cmp", op, node, self.sum_())
        return node

    def sum_(self):
        node = self.term()
        while True:
            op = self.accept_op("+", "-")
            if not op:
                return node
            node = ("arith", op, node, self.term())

    def term(self):
        node = self.atom()
        while True:
            op = self.accept_op("*", "/")
            if not op:
                return node
            node = ("arith", op, node, self.atom())

    def atom(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.next()
            return ("num", val)
        if kind == "name":
            if val == "not":
                self.next()
                return ("not", self.atom())
            if val in FIELDS:
                self.next()
                return ("field", val)
            raise SelectorParseError(f"unknown field {val!r}", pos)
        if self.accept_op("("):
            node = self.expr()
            if not self.accept_op(")"):
                raise SelectorParseError("expected ')'", self.peek()[2])
            return node
        raise SelectorParseError(f"expected a value, got {val!r}", pos)


def _print(node) -> str:
    tag = node[0]
    if tag == "num":
        return repr(node[1])
    if tag == "field":
        return node[1]
    if tag == "not":
        return f"not {_print(node[1])}"
    if tag in ("and", "or"):
        return f"({_print(node[1])} {tag} {_print(node[2])})"
    # cmp / arith
    return f"({_print(node[2])} {node[1]} {_print(node[3])})"


_CMP = {"<": np.less, ">": np.greater, "<=": np.less_equal,
        ">=": np.greater_equal, "==": np.equal, "!=": np.not_equal}


class SelectorExpr:
    """Parsed predicate; evaluation is pure."""

    def __init__(self, ast, source):
        self.ast = ast
        self.source = source

    @classmethod
    def parse(cls, text: str) -> "SelectorExpr":
        return cls(_Parser(text).parse(), text)

    def to_source(self) -> str:
        return _print(self.ast)

    # per-item evaluation with plain Python semantics
    def evaluate(self, fields: dict):
        def ev(node):
            tag = node[0]
            if tag == "num":
                return node[1]
            if tag == "field":
                return fields[node[1]]
            if tag == "not":
                return not ev(node[1])
            if tag == "and":
                return bool(ev(node[1])) and bool(ev(node[2]))
            if tag == "or":
                return bool(ev(node[1])) or bool(ev(node[2]))
            if tag == "cmp":
                l, r = ev(node[2]), ev(node[3])
                return {"<": l < r, ">": l > r, "<=": l <= r, ">=": l >= r,
                        "==": l == r, "!=": l != r}[node[1]]
            # arith
            l, r = ev(node[2]), ev(node[3])
            if node[1] == "+":
                return l + r
            if node[1] == "-":
                return l - r
            if node[1] == "*":
                return l * r
            return l / r
        return ev(self.ast)

    # whole-view evaluation over numpy columns
    def evaluate_vector(self, columns: dict):
        def as_bool(a):
            return a if a.dtype == bool else a != 0

        def ev(node):
            tag = node[0]
            if tag == "num":
                return node[1]
            if tag == "field":
                return columns[node[1]]
            if tag == "not":
                return ~as_bool(np.asarray(ev(node[1])))
            if tag == "and":
                return as_bool(np.asarray(ev(node[1]))) & as_bool(np.asarray(ev(node[2])))
            if tag == "or":
                return as_bool(np.asarray(ev(node[1]))) | as_bool(np.asarray(ev(node[2])))
            if tag == "cmp":
                return _CMP[node[1]](ev(node[2]), ev(node[3]))
            l, r = ev(node[2]), ev(node[3])
            # arithmetic over booleans follows Python: True == 1, False == 0
            if getattr(l, "dtype", None) == bool:
                l = l.astype(np.int64)
            if getattr(r, "dtype", None) == bool:
                r = r.astype(np.int64)
            if node[1] == "+":
                return l + r
            if node[1] == "-":
                return l - r
            if node[1] == "*":
                return l * r
            return np.true_divide(l, r)
        return ev(self.ast)


def tx_fields(tx) -> dict:
    return {"fee": tx.fee(), "input_count": tx.input_count,
            "output_count": tx.output_count, "total_out": tx.total_out(),
            "total_in": tx.total_in(), "locktime": tx.locktime,
            "size": tx.size, "height": tx.height}


def filter_expr(view, expr) -> list:
    """Tx IDs satisfying the selector, ascending, evaluated in bulk over the
    view's field columns."""
    if isinstance(expr, str):
        expr = SelectorExpr.parse(expr)
    n = view.max_tx_id
    if n == 0:
        return []
    result = np.asarray(expr.evaluate_vector(view.columns()))
    if result.dtype != bool:
        result = result != 0
    if result.shape == ():
        return list(range(n)) if result else []
    return [int(i) for i in np.nonzero(result)[0]]


def filter_tx(view, predicate, workers=1) -> list:
    """Tx IDs for which a per-tx Python predicate holds, ascending."""
    from .view import map_reduce
    return map_reduce(
        view, "txs",
        lambda tx: [tx.tx_id] if predicate(tx) else [],
        lambda a, b: a + b, [], workers=workers)


def filter_expr_naive(view, expr) -> list:
    """Independent per-tx interpretation of the same AST (oracle path)."""
    if isinstance(expr, str):
        expr = SelectorExpr.parse(expr)
    return [tx.tx_id for tx in view.txs() if expr.evaluate(tx_fields(tx))]
