"""Black-box operator registry.

Sheets can call host-language functions by name, e.g. "=IRR(-100, 60, 60)".
An operator declared deterministic is treated like ordinary arithmetic, so the
gradient-based engine stays usable; a stochastic one is treated as an opaque
sampler whose draw cannot be scored, which restricts inference to the
particle engine.

Two financial builtins ship with the package: NPV(rate, cf0, cf1, ...) and
IRR(cf0, cf1, ...).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ArityError,
    DomainError,
    DuplicateNameError,
    NoRootError,
    ParamError,
    ReservedNameError,
    UnknownOpError,
)
from .formula import KEYWORDS

_NAME_OK = re.compile(r"[A-Za-z_]+\Z")


@dataclass(frozen=True)
class BlackOpDef:
    """One registered operator.

    arity is an exact argument count, or None for variadic.  fn receives the
    evaluated argument tuple and a random generator; a deterministic fn must
    ignore the generator.
    """

    name: str
    arity: int | None
    deterministic: bool
    fn: Callable[[tuple[float, ...], np.random.Generator | None], float]


@dataclass(frozen=True)
class Registry:
    ops: dict[str, BlackOpDef]

    def register(self, op: BlackOpDef) -> "Registry":
        """Return a registry extended with `op`; never mutates the receiver."""
        name = op.name.upper()
        if not _NAME_OK.match(name):
            raise ParamError(
                f"operator name {op.name!r} must be letters/underscores only")
        if name in KEYWORDS:
            raise ReservedNameError(
                f"{name} is a reserved language name and cannot be registered")
        if name in self.ops:
            raise DuplicateNameError(f"an operator named {name} already exists")
        return Registry({**self.ops, name: replace(op, name=name)})

    def lookup(self, name: str) -> BlackOpDef:
        try:
            return self.ops[name.upper()]
        except KeyError:
            raise UnknownOpError(f"no black-box operator named {name} is registered")

    def with_determinism(self, name: str, deterministic: bool) -> "Registry":
        """Re-flag an existing operator (used by sheet-file declarations)."""
        op = self.lookup(name)
        return Registry({**self.ops, op.name: replace(op, deterministic=deterministic)})


# --------------------------------------------------------------------------
# builtins

def npv(rate: float, flows: Sequence[float]) -> float:
    """Net present value of `flows` (flows[t] arrives at period t) at `rate`."""
    if rate <= -1.0:
        raise DomainError(f"NPV rate must be greater than -1, got {rate}")
    total = 0.0
    growth = 1.0
    for cf in flows:
        total += cf / growth
        growth *= 1.0 + rate
    return total


_IRR_TOL = 1e-10
_SCAN_LO = -0.9999
_SCAN_HI = 10.0
_SCAN_STEP = 0.01


def irr(flows: Sequence[float]) -> float:
    """Smallest internal rate of return in [-0.9999, 10].

    The range is scanned at 0.01 for the first sign change of the NPV, then
    the bracket is bisected until |NPV| < 1e-10.  Raises NoRootError when the
    scan finds no sign change.
    """
    grid = [_SCAN_LO + _SCAN_STEP * k
            for k in range(int((_SCAN_HI - _SCAN_LO) / _SCAN_STEP) + 1)]
    if grid[-1] < _SCAN_HI:
        grid.append(_SCAN_HI)
    prev_r = grid[0]
    prev_v = npv(prev_r, flows)
    if prev_v == 0.0:
        return prev_r
    for r in grid[1:]:
        v = npv(r, flows)
        if v == 0.0:
            return r
        if (prev_v < 0.0) != (v < 0.0):
            return _bisect(prev_r, r, prev_v, flows)
        prev_r, prev_v = r, v
    raise NoRootError(
        "IRR: net present value has no sign change for rates in "
        f"[{_SCAN_LO}, {_SCAN_HI}]")


def _bisect(lo: float, hi: float, lo_val: float, flows: Sequence[float]) -> float:
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        v = npv(mid, flows)
        if abs(v) < _IRR_TOL:
            return mid
        if (v < 0.0) == (lo_val < 0.0):
            lo, lo_val = mid, v
        else:
            hi = mid
    return mid


def _irr_op(args: tuple[float, ...], rng) -> float:
    if len(args) < 2:
        raise ArityError("IRR", f"needs at least 2 cash flows, got {len(args)}")
    return irr(args)


def _npv_op(args: tuple[float, ...], rng) -> float:
    if len(args) < 2:
        raise ArityError("NPV", "needs a rate and at least one cash flow")
    return npv(args[0], args[1:])


def builtin_registry() -> Registry:
    """A fresh registry holding the deterministic financial builtins."""
    reg = Registry({})
    reg = reg.register(BlackOpDef("IRR", None, True, _irr_op))
    reg = reg.register(BlackOpDef("NPV", None, True, _npv_op))
    return reg
