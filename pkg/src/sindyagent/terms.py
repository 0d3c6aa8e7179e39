"""Parser and evaluator for the custom feature-term grammar.

Terms are small arithmetic expressions over the state variables ``x0``,
``x1``, ... . They are parsed into an AST and evaluated with numpy; emitted
model configurations never execute as code. The grammar (EBNF, also in
docs/term_grammar.md):

    expr    = term {("+" | "-") term} ;
    term    = factor {("*" | "/") factor | factor} ;   (* juxtaposition = "*" *)
    factor  = "-" factor | power ;
    power   = atom ["^" factor] ;                      (* right associative *)
    atom    = NUMBER | VARIABLE | FUNCTION "(" expr ")" | "(" expr ")" ;

    VARIABLE = "x" digits ;   FUNCTION = sin|cos|tan|exp|log|sqrt|abs

Juxtaposition (``x0 x1``, ``2 x0``) multiplies, which makes the printed
feature names of the polynomial and Fourier libraries valid terms.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


class TermParseError(ValueError):
    """Syntax or name error in a term expression, with position."""

    def __init__(self, message: str, source: str, pos: int):
        self.source = source
        self.pos = pos
        super().__init__(f"{message} at position {pos}: {source!r}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Var, Neg, Bin, Call]

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(source) - len(stripped)
            raise TermParseError(f"unexpected character {source[bad_at]!r}", source, bad_at)
        tokens.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, source: str, n: int):
        self.source = source
        self.n = n
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise TermParseError("unexpected end of expression", self.source, len(self.source))
        self.i += 1
        return tok

    def expect_op(self, op: str):
        tok = self.next()
        if tok[0] != "op" or tok[1] != op:
            raise TermParseError(f"expected {op!r}", self.source, tok[2])

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise TermParseError(f"unexpected token {tok[1]!r}", self.source, tok[2])
        return node

    def expr(self) -> Node:
        node = self.term()
        while (tok := self.peek()) is not None and tok[0] == "op" and tok[1] in "+-":
            self.next()
            node = Bin(tok[1], node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while (tok := self.peek()) is not None:
            if tok[0] == "op" and tok[1] in "*/":
                self.next()
                node = Bin(tok[1], node, self.factor())
            elif tok[0] in ("num", "ident") or (tok[0] == "op" and tok[1] == "("):
                # juxtaposition: "x0 x1", "2 x0", "2(x0+1)"
                node = Bin("*", node, self.factor())
            else:
                break
        return node

    def factor(self) -> Node:
        tok = self.peek()
        if tok is not None and tok[0] == "op" and tok[1] == "-":
            self.next()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        tok = self.peek()
        if tok is not None and tok[0] == "op" and tok[1] == "^":
            self.next()
            return Bin("^", base, self.factor())
        return base

    def atom(self) -> Node:
        tok = self.next()
        kind, text, pos = tok
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(text, arg)
            m = re.fullmatch(r"x(\d+)", text)
            if m is None:
                raise TermParseError(f"unknown identifier {text!r}", self.source, pos)
            index = int(m.group(1))
            if index >= self.n:
                raise TermParseError(
                    f"variable x{index} out of range for dimension {self.n}",
                    self.source,
                    pos,
                )
            return Var(index)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise TermParseError(f"unexpected token {text!r}", self.source, pos)


@dataclass(frozen=True)
class TermExpr:
    """A parsed term: original source plus its AST."""

    source: str
    ast: Node

    def __str__(self) -> str:
        return to_source(self.ast)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Evaluate row-wise on a K x n state matrix; returns shape (K,).

        Domain violations (log of a negative value, division by zero, ...)
        surface as non-finite entries which callers are expected to check.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        with np.errstate(all="ignore"):
            result = _eval(self.ast, X)
        return np.broadcast_to(result, (X.shape[0],)).astype(float)


def parse_term(source: str, n: int) -> TermExpr:
    """Parse ``source`` over variables x0..x{n-1}."""
    if not source or not source.strip():
        raise TermParseError("empty term", source, 0)
    if n <= 0:
        raise ValueError(f"dimension must be positive, got {n}")
    ast = _Parser(source, n).parse()
    return TermExpr(source=source, ast=ast)


def _eval(node: Node, X: np.ndarray):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return X[:, node.index]
    if isinstance(node, Neg):
        return -_eval(node.arg, X)
    if isinstance(node, Call):
        return FUNCTIONS[node.fn](_eval(node.arg, X))
    l, r = _eval(node.left, X), _eval(node.right, X)
    if node.op == "+":
        return l + r
    if node.op == "-":
        return l - r
    if node.op == "*":
        return l * r
    if node.op == "/":
        return np.divide(l, r)
    if node.op == "^":
        return np.power(l, r)
    raise AssertionError(f"unhandled operator {node.op!r}")


# Rendering precedence; higher binds tighter.
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def to_source(node: Node) -> str:
    """Canonical textual form; parses back to an equivalent AST."""
    return _render(node, 0)


def _render(node: Node, parent_prec: int) -> str:
    if isinstance(node, Num):
        text = repr(node.value)
        return text[:-2] if text.endswith(".0") else text
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Call):
        return f"{node.fn}({_render(node.arg, 0)})"
    if isinstance(node, Neg):
        inner = _render(node.arg, _PREC["neg"])
        text = f"-{inner}"
        return f"({text})" if parent_prec > _PREC["neg"] else text
    prec = _PREC[node.op]
    # The parser is left associative for + - * /, so right operands always
    # render one level tighter; otherwise reparsing would reassociate and
    # perturb floating-point evaluation. "^" is right associative: flipped.
    if node.op == "^":
        left = _render(node.left, prec + 1)
        right = _render(node.right, prec)
    else:
        left = _render(node.left, prec)
        right = _render(node.right, prec + 1)
    text = f"{left} {node.op} {right}" if node.op in "+-" else f"{left}{node.op}{right}"
    return f"({text})" if prec < parent_prec else text
