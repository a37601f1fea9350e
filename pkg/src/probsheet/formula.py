"""Cell formula language: lexer, parser, and labeled expression trees.

A cell's text is either a bare numeric constant ("3.5") or a formula starting
with "=".  Formulas combine constants, cell references, infix arithmetic and
comparisons, IF(cond, a, b), named deterministic functions (LOG, MIN, ...),
random quantities (GAUSSIAN, BETWEEN, CHOICE, NEAR), registered black-box
operators (any other name, e.g. IRR), and ACTUAL(datum, DIST, params...) which
records an observed value for a modelled quantity.

Every operator application in a parsed tree carries a Label — the owning cell
plus the node's preorder position among operator nodes — so each random draw
made while evaluating a sheet can be identified sheet-wide.
"""

from __future__ import annotations

import dataclasses
import enum
import re
from dataclasses import dataclass
from typing import Iterator, Union

from .errors import ActualDatumError, ArityError, LexError, ParseError


# --------------------------------------------------------------------------
# cell references and labels

_REF_RE = re.compile(r"([A-Za-z]+)([0-9]+)\Z")


@dataclass(frozen=True, slots=True)
class CellRef:
    """A cell name such as A1 or AB12 (column letters, then a 1-based row)."""

    column: str
    row: int

    @staticmethod
    def parse(text: str) -> "CellRef":
        m = _REF_RE.match(text)
        if m is None or int(m.group(2)) < 1:
            raise ParseError(f"{text!r} is not a valid cell reference")
        return CellRef(m.group(1).upper(), int(m.group(2)))

    @property
    def column_number(self) -> int:
        """Column letters as a number: A=1, ..., Z=26, AA=27, ..."""
        n = 0
        for ch in self.column:
            n = n * 26 + (ord(ch) - ord("A") + 1)
        return n

    @property
    def sort_key(self) -> tuple[int, int]:
        return (self.row, self.column_number)

    def __lt__(self, other: "CellRef") -> bool:
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        return f"{self.column}{self.row}"


@dataclass(frozen=True, slots=True)
class Label:
    """Identity of one operator application: owning cell + preorder index."""

    cell: CellRef
    index: int

    def __str__(self) -> str:
        return f"{self.cell}[{self.index}]"


# --------------------------------------------------------------------------
# operators

class PrimOp(enum.Enum):
    ADD = "+"
    SUB = "-"
    MUL = "*"
    DIV = "/"
    POW = "^"
    NEG = "neg"
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="
    EQ = "="
    LOG = "LOG"
    EXP = "EXP"
    SQRT = "SQRT"
    ABS = "ABS"
    MIN = "MIN"
    MAX = "MAX"


#: Operators written as FUNC(args) rather than infix.
PRIM_FUNCS = {
    "LOG": (PrimOp.LOG, 1),
    "EXP": (PrimOp.EXP, 1),
    "SQRT": (PrimOp.SQRT, 1),
    "ABS": (PrimOp.ABS, 1),
    "MIN": (PrimOp.MIN, 2),
    "MAX": (PrimOp.MAX, 2),
}

PRIM_ARITY = {
    PrimOp.NEG: 1, PrimOp.LOG: 1, PrimOp.EXP: 1, PrimOp.SQRT: 1, PrimOp.ABS: 1,
    PrimOp.ADD: 2, PrimOp.SUB: 2, PrimOp.MUL: 2, PrimOp.DIV: 2, PrimOp.POW: 2,
    PrimOp.LT: 2, PrimOp.LE: 2, PrimOp.GT: 2, PrimOp.GE: 2, PrimOp.EQ: 2,
    PrimOp.MIN: 2, PrimOp.MAX: 2,
}


class ErpKind(enum.Enum):
    """Named random quantities the language knows how to score."""

    GAUSSIAN = "GAUSSIAN"
    BETWEEN = "BETWEEN"
    CHOICE = "CHOICE"
    NEAR = "NEAR"


ERP_NAMES = {k.value: k for k in ErpKind}

#: Reserved call names that can never be black-box operators.
KEYWORDS = {"IF", "ACTUAL"} | set(ERP_NAMES) | set(PRIM_FUNCS)


def erp_arity_ok(kind: ErpKind, n: int) -> bool:
    if kind is ErpKind.CHOICE:
        return n >= 2 and n % 2 == 0
    return n == {ErpKind.GAUSSIAN: 2, ErpKind.BETWEEN: 2, ErpKind.NEAR: 1}[kind]


def erp_arity_doc(kind: ErpKind) -> str:
    if kind is ErpKind.CHOICE:
        return "an even number (>= 2) of arguments (value/weight pairs)"
    n = {ErpKind.GAUSSIAN: 2, ErpKind.BETWEEN: 2, ErpKind.NEAR: 1}[kind]
    return f"{n} argument{'s' if n != 1 else ''}"


# --------------------------------------------------------------------------
# expression trees

@dataclass(frozen=True, slots=True)
class Const:
    value: float


@dataclass(frozen=True, slots=True)
class Ref:
    ref: CellRef


@dataclass(frozen=True, slots=True)
class PrimApp:
    op: PrimOp
    label: Label | None
    args: tuple["Expr", ...]


@dataclass(frozen=True, slots=True)
class BlackApp:
    name: str
    label: Label | None
    args: tuple["Expr", ...]


@dataclass(frozen=True, slots=True)
class ErpApp:
    kind: ErpKind
    label: Label | None
    args: tuple["Expr", ...]


@dataclass(frozen=True, slots=True)
class If:
    cond: "Expr"
    then: "Expr"
    orelse: "Expr"


@dataclass(frozen=True, slots=True)
class Actual:
    """An observation: the cell's value IS datum; the distribution is scored at it."""

    datum: float
    kind: ErpKind
    label: Label | None
    args: tuple["Expr", ...]


Expr = Union[Const, Ref, PrimApp, BlackApp, ErpApp, If, Actual]


def iter_op_nodes(expr: Expr) -> Iterator[Expr]:
    """Yield every labeled operator node of `expr` in preorder."""
    stack = [expr]
    out = []
    # Explicit preorder walk; children pushed right-to-left so they pop in order.
    while stack:
        e = stack.pop()
        if isinstance(e, (PrimApp, BlackApp, ErpApp, Actual)):
            out.append(e)
            stack.extend(reversed(e.args))
        elif isinstance(e, If):
            stack.extend((e.orelse, e.then, e.cond))
    return iter(out)


def references_of(expr: Expr) -> set[CellRef]:
    """All cells mentioned anywhere in `expr`, including unexecuted branches."""
    refs: set[CellRef] = set()
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Ref):
            refs.add(e.ref)
        elif isinstance(e, (PrimApp, BlackApp, ErpApp, Actual)):
            stack.extend(e.args)
        elif isinstance(e, If):
            stack.extend((e.cond, e.then, e.orelse))
    return refs


# --------------------------------------------------------------------------
# lexer

@dataclass(frozen=True, slots=True)
class Token:
    kind: str      # "number", "ident", "ref", or the literal punctuation text
    text: str
    value: float | None
    offset: int


_NUMBER_RE = re.compile(r"(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_PUNCT = ("<=", ">=", "<", ">", "=", "+", "-", "*", "/", "^", "(", ")", ",")


def tokenize(text: str) -> list[Token]:
    """Split a cell's raw text into tokens.

    Raises LexError (with the byte offset) on any character that cannot start
    a token and on malformed names like "A0" or "X1Y".
    """
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in " \t":
            i += 1
            continue
        m = _NUMBER_RE.match(text, i)
        if m:
            tokens.append(Token("number", m.group(), float(m.group()), i))
            i = m.end()
            continue
        m = _NAME_RE.match(text, i)
        if m:
            word = m.group()
            ref_m = _REF_RE.match(word)
            if ref_m:
                if int(ref_m.group(2)) < 1:
                    raise LexError(f"cell reference {word!r} has row 0", i)
                tokens.append(Token("ref", word.upper(), None, i))
            elif not any(c.isdigit() for c in word):
                tokens.append(Token("ident", word.upper(), None, i))
            else:
                raise LexError(
                    f"{word!r} is neither a cell reference nor an operator name", i
                )
            i = m.end()
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                tokens.append(Token(p, p, None, i))
                i += len(p)
                break
        else:
            raise LexError(f"unexpected character {ch!r}", i)
    tokens.append(Token("eof", "", None, n))
    return tokens


# --------------------------------------------------------------------------
# parser
#
# Precedence, loosest to tightest:
#   comparisons (< <= > >= =)  <  + -  <  * /  <  unary -  <  ^
# Comparisons and the additive/multiplicative levels associate left; ^ is
# right-associative and its exponent re-admits unary minus, so 2^-3 parses
# while -2^2 means -(2^2).

class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            got = tok.text or "end of input"
            raise ParseError(f"expected {what}, got {got!r}", tok.offset)
        return self.advance()

    # -- grammar levels ----------------------------------------------------

    def comparison(self) -> Expr:
        left = self.additive()
        while self.peek().kind in ("<", "<=", ">", ">=", "="):
            op_tok = self.advance()
            right = self.additive()
            op = {"<": PrimOp.LT, "<=": PrimOp.LE, ">": PrimOp.GT,
                  ">=": PrimOp.GE, "=": PrimOp.EQ}[op_tok.kind]
            left = PrimApp(op, None, (left, right))
        return left

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.peek().kind in ("+", "-"):
            op_tok = self.advance()
            right = self.multiplicative()
            op = PrimOp.ADD if op_tok.kind == "+" else PrimOp.SUB
            left = PrimApp(op, None, (left, right))
        return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while self.peek().kind in ("*", "/"):
            op_tok = self.advance()
            right = self.unary()
            op = PrimOp.MUL if op_tok.kind == "*" else PrimOp.DIV
            left = PrimApp(op, None, (left, right))
        return left

    def unary(self) -> Expr:
        if self.peek().kind == "-":
            self.advance()
            return PrimApp(PrimOp.NEG, None, (self.unary(),))
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek().kind == "^":
            self.advance()
            return PrimApp(PrimOp.POW, None, (base, self.unary()))
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Const(tok.value)
        if tok.kind == "ref":
            self.advance()
            return Ref(CellRef.parse(tok.text))
        if tok.kind == "(":
            self.advance()
            inner = self.comparison()
            self.expect(")", "')'")
            return inner
        if tok.kind == "ident":
            return self.call()
        got = tok.text or "end of input"
        raise ParseError(f"expected a value, got {got!r}", tok.offset)

    def call(self) -> Expr:
        name_tok = self.advance()
        name = name_tok.text
        if name == "ACTUAL":
            raise ParseError(
                "ACTUAL must be the entire cell formula, not a sub-expression",
                name_tok.offset,
            )
        self.expect("(", f"'(' after {name}")
        args = self.args_until_rparen()
        if name == "IF":
            if len(args) != 3:
                raise ArityError("IF", f"takes 3 arguments, got {len(args)}",
                                 name_tok.offset)
            return If(args[0], args[1], args[2])
        if name in ERP_NAMES:
            kind = ERP_NAMES[name]
            if not erp_arity_ok(kind, len(args)):
                raise ArityError(name, f"takes {erp_arity_doc(kind)}, got {len(args)}",
                                 name_tok.offset)
            return ErpApp(kind, None, tuple(args))
        if name in PRIM_FUNCS:
            op, arity = PRIM_FUNCS[name]
            if len(args) != arity:
                raise ArityError(name, f"takes {arity} argument"
                                 f"{'s' if arity != 1 else ''}, got {len(args)}",
                                 name_tok.offset)
            return PrimApp(op, None, tuple(args))
        # Anything else is a black-box operator; its arity is checked against
        # the registry when the cell is evaluated.
        return BlackApp(name, None, tuple(args))

    def args_until_rparen(self) -> list[Expr]:
        args: list[Expr] = []
        if self.peek().kind == ")":
            self.advance()
            return args
        args.append(self.comparison())
        while self.peek().kind == ",":
            self.advance()
            args.append(self.comparison())
        self.expect(")", "',' or ')'")
        return args

    # -- observation form --------------------------------------------------

    def actual(self) -> Actual:
        name_tok = self.advance()           # the ACTUAL ident itself
        self.expect("(", "'(' after ACTUAL")
        datum = self.numeric_literal()
        if self.peek().kind in ("+", "-", "*", "/", "^",
                                "<", "<=", ">", ">=", "="):
            raise ActualDatumError(
                "the observed datum must be a numeric literal, not an expression"
            )
        self.expect(",", "',' after the observed datum")
        dist_tok = self.peek()
        if dist_tok.kind != "ident" or dist_tok.text not in ERP_NAMES:
            got = dist_tok.text or "end of input"
            raise ParseError(
                f"expected a distribution name (GAUSSIAN, BETWEEN, CHOICE, NEAR), "
                f"got {got!r}", dist_tok.offset)
        self.advance()
        kind = ERP_NAMES[dist_tok.text]
        args: list[Expr] = []
        while self.peek().kind == ",":
            self.advance()
            args.append(self.comparison())
        self.expect(")", "',' or ')'")
        if not erp_arity_ok(kind, len(args)):
            raise ArityError(dist_tok.text,
                             f"takes {erp_arity_doc(kind)}, got {len(args)}",
                             dist_tok.offset)
        return Actual(datum, kind, None, tuple(args))

    def numeric_literal(self) -> float:
        tok = self.peek()
        sign = 1.0
        if tok.kind == "-":
            self.advance()
            sign = -1.0
            tok = self.peek()
        if tok.kind != "number":
            raise ActualDatumError(
                "the observed datum must be a numeric literal, not an expression"
            )
        self.advance()
        return sign * tok.value


def parse_cell(cell: CellRef, text: str) -> Expr:
    """Parse one cell's text into a labeled expression tree.

    Bare numbers become constants; anything else must start with "=".  The
    returned tree has labels assigned to operator nodes in preorder, starting
    at index 0.
    """
    tokens = tokenize(text)
    if not tokens or tokens[0].kind == "eof":
        raise ParseError("cell is empty")
    p = _Parser(tokens)
    first = p.peek()
    if first.kind == "=":
        p.advance()
        nxt = p.peek()
        if nxt.kind == "ident" and nxt.text == "ACTUAL":
            expr: Expr = p.actual()
            trailing = p.peek()
            if trailing.kind != "eof":
                raise ParseError(
                    "an observation cannot be part of a larger formula",
                    trailing.offset)
        else:
            expr = p.comparison()
            trailing = p.peek()
            if trailing.kind != "eof":
                raise ParseError(f"unexpected input after formula: {trailing.text!r}",
                                 trailing.offset)
        labeled, _ = _assign_labels(expr, cell, 0)
        return labeled
    # Not a formula: the whole cell must be one (optionally negated) number.
    value = _bare_number(p)
    return Const(value)


def _bare_number(p: _Parser) -> float:
    sign = 1.0
    tok = p.peek()
    if tok.kind == "-":
        p.advance()
        sign = -1.0
        tok = p.peek()
    if tok.kind != "number":
        raise ParseError(
            "cell content must be a number or a formula starting with '='",
            tok.offset)
    p.advance()
    if p.peek().kind != "eof":
        raise ParseError("unexpected input after number", p.peek().offset)
    return sign * tok.value


def _assign_labels(expr: Expr, cell: CellRef, n: int) -> tuple[Expr, int]:
    """Rebuild `expr` with preorder labels; returns (labeled tree, next index)."""
    if isinstance(expr, (Const, Ref)):
        return expr, n
    if isinstance(expr, If):
        cond, n = _assign_labels(expr.cond, cell, n)
        then, n = _assign_labels(expr.then, cell, n)
        orelse, n = _assign_labels(expr.orelse, cell, n)
        return If(cond, then, orelse), n
    # Operator node: it takes the next index, then its children, left to right.
    label = Label(cell, n)
    n += 1
    new_args = []
    for a in expr.args:
        la, n = _assign_labels(a, cell, n)
        new_args.append(la)
    return dataclasses.replace(expr, label=label, args=tuple(new_args)), n


# --------------------------------------------------------------------------
# printing

_INFIX = {
    PrimOp.LT: ("<", 1), PrimOp.LE: ("<=", 1), PrimOp.GT: (">", 1),
    PrimOp.GE: (">=", 1), PrimOp.EQ: ("=", 1),
    PrimOp.ADD: ("+", 2), PrimOp.SUB: ("-", 2),
    PrimOp.MUL: ("*", 3), PrimOp.DIV: ("/", 3),
    PrimOp.POW: ("^", 5),
}
_NEG_PREC = 4
_ATOM_PREC = 6


def format_number(x: float) -> str:
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def format_expr(expr: Expr) -> str:
    text, _ = _fmt(expr)
    return text


def _fmt(expr: Expr) -> tuple[str, int]:
    """Render an expression; returns (text, precedence of the root)."""
    if isinstance(expr, Const):
        return format_number(expr.value), _ATOM_PREC
    if isinstance(expr, Ref):
        return str(expr.ref), _ATOM_PREC
    if isinstance(expr, If):
        parts = ", ".join(format_expr(a) for a in (expr.cond, expr.then, expr.orelse))
        return f"IF({parts})", _ATOM_PREC
    if isinstance(expr, ErpApp):
        parts = ", ".join(format_expr(a) for a in expr.args)
        return f"{expr.kind.value}({parts})", _ATOM_PREC
    if isinstance(expr, BlackApp):
        parts = ", ".join(format_expr(a) for a in expr.args)
        return f"{expr.name}({parts})", _ATOM_PREC
    if isinstance(expr, Actual):
        parts = ", ".join([format_number(expr.datum), expr.kind.value]
                          + [format_expr(a) for a in expr.args])
        return f"ACTUAL({parts})", _ATOM_PREC
    op = expr.op
    if op is PrimOp.NEG:
        inner, prec = _fmt(expr.args[0])
        if prec < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}", _NEG_PREC
    if op in _INFIX:
        sym, prec = _INFIX[op]
        left, lp = _fmt(expr.args[0])
        right, rp = _fmt(expr.args[1])
        if op is PrimOp.POW:
            # Right-associative: parenthesize an equally tight left child.
            if lp <= prec:
                left = f"({left})"
            if rp < _NEG_PREC:   # exponent admits unary minus
                right = f"({right})"
        else:
            if lp < prec:
                left = f"({left})"
            if rp <= prec:
                right = f"({right})"
        return f"{left}{sym}{right}", prec
    # Function-style primitive.
    name = {v[0]: k for k, v in PRIM_FUNCS.items()}[op]
    parts = ", ".join(format_expr(a) for a in expr.args)
    return f"{name}({parts})", _ATOM_PREC


def format_cell(expr: Expr) -> str:
    """Canonical cell text: bare number for constants, '=' formula otherwise."""
    if isinstance(expr, Const):
        return format_number(expr.value)
    return "=" + format_expr(expr)
