"""Sheet evaluation with importance-weight bookkeeping.

Evaluating an expression produces a value plus a Bookkeeping record:

  log_target    summed log density of every random draw under the model,
                plus the log likelihood of every observation passed
  log_proposal  summed log density of the same draws under whatever proposal
                produced them
  grads         per-label gradient of the proposal's log density at its draw,
                or None once a stochastic black-box operator destroyed
                gradient information
  labels        the labels of the sampling/observation nodes that ran, in
                execution order

Records combine associatively: sums add, label lists concatenate, gradient
maps merge (first writer wins, and None is contagious).  Under the prior
proposal the two log densities of a free draw coincide, so weights reduce to
accumulated observation likelihoods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Protocol

import numpy as np

from .blackbox import Registry, builtin_registry
from .dist import ErpParams, VariationalFamily, sample_erp, score_erp
from .errors import (
    AlreadyBoundError,
    ArityError,
    EvalError,
    ProbsheetError,
    UnboundRefError,
    UnsupportedModelError,
)
from .formula import (
    Actual,
    BlackApp,
    CellRef,
    Const,
    ErpApp,
    Expr,
    If,
    Label,
    PrimApp,
    PrimOp,
    Ref,
)
from .graph import CompiledSheet

State = dict[CellRef, float]


@dataclass
class Bookkeeping:
    log_target: float
    log_proposal: float
    grads: dict[Label, tuple[float, ...]] | None
    labels: tuple[Label, ...]

    @staticmethod
    def zero() -> "Bookkeeping":
        return Bookkeeping(0.0, 0.0, {}, ())


def combine(a: Bookkeeping, b: Bookkeeping) -> Bookkeeping:
    """Merge two bookkeeping records, left argument first."""
    if a.grads is None or b.grads is None:
        grads = None
    else:
        grads = dict(a.grads)
        for k, v in b.grads.items():
            if k not in grads:
                grads[k] = v
    return Bookkeeping(
        a.log_target + b.log_target,
        a.log_proposal + b.log_proposal,
        grads,
        a.labels + b.labels,
    )


# --------------------------------------------------------------------------
# proposal oracles

class ProposalOracle(Protocol):
    def for_label(self, label: Label):
        """Return (family, params) for a label, or None to draw from the prior."""


class PriorProposal:
    """Draw every random quantity from its own declared distribution."""

    def for_label(self, label: Label):
        return None


@dataclass
class VariationalProposal:
    """Draw each labeled random quantity from its fitted family."""

    factors: Mapping[Label, tuple[VariationalFamily, np.ndarray]]

    def for_label(self, label: Label):
        try:
            return self.factors[label]
        except KeyError:
            raise UnsupportedModelError(
                f"no variational factor exists for random choice {label}")


# --------------------------------------------------------------------------
# primitive application

def _apply_prim(op: PrimOp, a: tuple[float, ...]) -> float:
    try:
        if op is PrimOp.ADD:
            return a[0] + a[1]
        if op is PrimOp.SUB:
            return a[0] - a[1]
        if op is PrimOp.MUL:
            return a[0] * a[1]
        if op is PrimOp.DIV:
            return a[0] / a[1]
        if op is PrimOp.POW:
            return math.pow(a[0], a[1])
        if op is PrimOp.NEG:
            return -a[0]
        if op is PrimOp.LT:
            return 1.0 if a[0] < a[1] else 0.0
        if op is PrimOp.LE:
            return 1.0 if a[0] <= a[1] else 0.0
        if op is PrimOp.GT:
            return 1.0 if a[0] > a[1] else 0.0
        if op is PrimOp.GE:
            return 1.0 if a[0] >= a[1] else 0.0
        if op is PrimOp.EQ:
            return 1.0 if a[0] == a[1] else 0.0
        if op is PrimOp.LOG:
            return math.log(a[0])
        if op is PrimOp.EXP:
            return math.exp(a[0])
        if op is PrimOp.SQRT:
            return math.sqrt(a[0])
        if op is PrimOp.ABS:
            return abs(a[0])
        if op is PrimOp.MIN:
            return min(a[0], a[1])
        return max(a[0], a[1])
    except (ArithmeticError, ValueError) as exc:
        raise EvalError(f"{op.value}: {exc}") from exc


# --------------------------------------------------------------------------
# expression evaluation

class _Acc:
    """Mutable bookkeeping accumulator threaded through one evaluation."""

    __slots__ = ("log_target", "log_proposal", "grads", "labels")

    def __init__(self):
        self.log_target = 0.0
        self.log_proposal = 0.0
        self.grads: dict | None = {}
        self.labels: list[Label] = []

    def freeze(self) -> Bookkeeping:
        grads = None if self.grads is None else self.grads
        return Bookkeeping(self.log_target, self.log_proposal, grads,
                           tuple(self.labels))


def _eval(e: Expr, rho: State, acc: _Acc, oracle: ProposalOracle,
          registry: Registry, rng) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Ref):
        try:
            return rho[e.ref]
        except KeyError:
            raise UnboundRefError(str(e.ref))
    if isinstance(e, PrimApp):
        vals = tuple(_eval(a, rho, acc, oracle, registry, rng) for a in e.args)
        return _apply_prim(e.op, vals)
    if isinstance(e, If):
        cond = _eval(e.cond, rho, acc, oracle, registry, rng)
        branch = e.then if cond != 0.0 else e.orelse
        return _eval(branch, rho, acc, oracle, registry, rng)
    if isinstance(e, ErpApp):
        vals = tuple(_eval(a, rho, acc, oracle, registry, rng) for a in e.args)
        params = ErpParams(e.kind, vals)
        factor = oracle.for_label(e.label)
        if factor is None:
            x = sample_erp(params, rng)
            s = score_erp(params, x)
            acc.log_target += s
            acc.log_proposal += s
        else:
            family, lam = factor
            x = family.sample(lam, rng)
            acc.log_target += score_erp(params, x)
            acc.log_proposal += family.score(lam, x)
            if acc.grads is not None:
                g = family.grad(lam, x)
                if e.label not in acc.grads:
                    acc.grads[e.label] = g
        acc.labels.append(e.label)
        return x
    if isinstance(e, BlackApp):
        op = registry.lookup(e.name)
        if op.arity is not None and len(e.args) != op.arity:
            raise ArityError(e.name,
                             f"takes {op.arity} arguments, got {len(e.args)}")
        vals = tuple(_eval(a, rho, acc, oracle, registry, rng) for a in e.args)
        value = float(op.fn(vals, rng))
        if not op.deterministic:
            # An unscored draw: downstream gradient information is lost.
            acc.grads = None
            acc.labels.append(e.label)
        return value
    # Actual: the cell's value is the recorded datum; the model is scored at it.
    vals = tuple(_eval(a, rho, acc, oracle, registry, rng) for a in e.args)
    params = ErpParams(e.kind, vals)
    acc.log_target += score_erp(params, e.datum)
    acc.labels.append(e.label)
    return e.datum


def eval_expr(expr: Expr, rho: State, oracle: ProposalOracle | None = None,
              registry: Registry | None = None,
              rng: np.random.Generator | None = None) -> tuple[float, Bookkeeping]:
    """Evaluate one expression under `rho`; returns (value, bookkeeping).

    `rng` is only touched when the expression actually samples something.
    """
    acc = _Acc()
    value = _eval(expr, rho,
                  acc,
                  oracle if oracle is not None else PriorProposal(),
                  registry if registry is not None else builtin_registry(),
                  rng)
    return value, acc.freeze()


def step_cell(compiled: CompiledSheet, rho: State, r: CellRef,
              oracle: ProposalOracle, registry: Registry,
              rng) -> tuple[State, Bookkeeping]:
    """Evaluate cell `r` and bind its value, extending `rho` in place.

    Errors raised while evaluating are annotated with the cell name.
    """
    if r in rho:
        raise AlreadyBoundError(f"cell {r} was evaluated twice")
    try:
        value, bk = eval_expr(compiled.sheet.cells[r], rho, oracle, registry, rng)
    except ProbsheetError as exc:
        if exc.cell is None:
            exc.cell = str(r)
        raise
    rho[r] = value
    return rho, bk


def run_sheet(compiled: CompiledSheet, oracle: ProposalOracle | None = None,
              registry: Registry | None = None,
              rng: np.random.Generator | None = None
              ) -> tuple[State, Bookkeeping]:
    """Evaluate the whole sheet in its compiled order.

    Returns the complete cell-value binding and the combined bookkeeping of
    every cell, merged in evaluation order.
    """
    oracle = oracle if oracle is not None else PriorProposal()
    registry = registry if registry is not None else builtin_registry()
    rho: State = {}
    total = Bookkeeping.zero()
    for r in compiled.order:
        rho, bk = step_cell(compiled, rho, r, oracle, registry, rng)
        total = combine(total, bk)
    return rho, total
