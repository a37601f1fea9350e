"""Variational inference over compiled sheets.

Every labeled random quantity gets an independent fitting family (mean-field).
One iteration draws a handful of whole-sheet evaluations with all quantities
sampled from their current families, forms the score-function gradient
estimate

    delta(l) = mean over samples of  grad log q_l(x_l) * (log target - log q)

and applies an adaptive-step update: per-coordinate step size
learning_rate / sqrt(sum of squared past gradient estimates).  Iteration
stops when the parameter vector moves less than the tolerance in L2, or when
the iteration budget runs out (reported as non-convergence, not an error).

Families whose support depends on sheet values (BETWEEN bounds, CHOICE value
lists) must get those values from deterministic cells; anything else is
rejected up front.  A stochastic black-box operator anywhere in the trace
makes the gradient estimator unusable, which is reported as
GradientUnavailableError — the particle engine still handles such models.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .blackbox import Registry, builtin_registry
from .dist import (
    ErpParams,
    GaussianFamily,
    ScaledBetaFamily,
    SoftmaxChoiceFamily,
    VariationalFamily,
)
from .errors import ConfigError, GradientUnavailableError, UnsupportedModelError
from .evaluator import VariationalProposal, _apply_prim, run_sheet
from .formula import (
    Actual,
    BlackApp,
    CellRef,
    Const,
    ErpApp,
    ErpKind,
    Expr,
    If,
    Label,
    PrimApp,
    Ref,
    iter_op_nodes,
)
from .graph import CompiledSheet

logger = logging.getLogger(__name__)


@dataclass
class VariationalState:
    """Per-label families and their unconstrained parameters."""

    families: dict[Label, VariationalFamily]
    lam: dict[Label, np.ndarray]
    accum: dict[Label, np.ndarray]   # squared-gradient accumulator
    step: int = 0


@dataclass
class GradientEstimate:
    delta: dict[Label, np.ndarray]
    fired: dict[Label, int]          # samples in which each label ran
    mean_log_target: float
    mean_log_proposal: float


@dataclass
class BbviConfig:
    samples: int = 10
    max_iterations: int = 1000
    learning_rate: float = 0.1
    tolerance: float = 1e-4
    seed: int = 0
    init: str = "zero"               # "zero" or "prior" (moment matching)

    def validate(self) -> None:
        if self.samples < 1:
            raise ConfigError(f"samples per iteration must be >= 1, got {self.samples}")
        if self.max_iterations < 1:
            raise ConfigError(
                f"iteration budget must be >= 1, got {self.max_iterations}")
        if not self.learning_rate > 0.0:
            raise ConfigError(
                f"learning rate must be positive, got {self.learning_rate}")
        if not self.tolerance > 0.0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if self.init not in ("zero", "prior"):
            raise ConfigError(f"unknown initialization {self.init!r}")


@dataclass
class IterationRow:
    iteration: int
    elbo: float
    grad_norm: float
    change: float


@dataclass
class FamilySummary:
    """A fitted family with its analytic moments."""

    label: Label
    family: VariationalFamily
    lam: np.ndarray
    mean: float
    stddev: float

    def grid(self, points: int = 201):
        return self.family.grid(self.lam, points)


@dataclass
class BbviResult:
    state: VariationalState
    summaries: dict[Label, FamilySummary]
    converged: bool
    iterations: int
    trace: list[IterationRow] = field(repr=False, default_factory=list)


# --------------------------------------------------------------------------
# static (deterministic) evaluation for freezing family supports

class _NotStatic(Exception):
    pass


def _static_value(e: Expr, env: dict[CellRef, float], registry: Registry) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Ref):
        try:
            return env[e.ref]
        except KeyError:
            raise _NotStatic()
    if isinstance(e, PrimApp):
        vals = tuple(_static_value(a, env, registry) for a in e.args)
        return _apply_prim(e.op, vals)
    if isinstance(e, If):
        cond = _static_value(e.cond, env, registry)
        return _static_value(e.then if cond != 0.0 else e.orelse, env, registry)
    if isinstance(e, BlackApp):
        op = registry.lookup(e.name)
        if not op.deterministic:
            raise _NotStatic()
        vals = tuple(_static_value(a, env, registry) for a in e.args)
        return float(op.fn(vals, None))
    if isinstance(e, Actual):
        # The cell's value is the recorded datum, a constant.
        return e.datum
    raise _NotStatic()   # ErpApp: a random draw


def _deterministic_env(compiled: CompiledSheet, registry: Registry
                       ) -> dict[CellRef, float]:
    """Values of every cell that is a pure function of constants."""
    env: dict[CellRef, float] = {}
    for r in compiled.order:
        try:
            env[r] = _static_value(compiled.sheet.cells[r], env, registry)
        except _NotStatic:
            pass
    return env


def init_state(compiled: CompiledSheet, registry: Registry | None = None,
               init: str = "zero") -> VariationalState:
    """Build zero-initialized families for every labeled random quantity.

    Raises UnsupportedModelError when a BETWEEN bound or CHOICE value list
    depends on random cells, since the family's support could not be fixed.
    Raises GradientUnavailableError when the sheet applies a black-box
    operator registered as non-deterministic: its draws carry no score, so
    every gradient estimate would be undefined no matter which samples fire.
    """
    registry = registry if registry is not None else builtin_registry()
    for r in compiled.order:
        for node in iter_op_nodes(compiled.sheet.cells[r]):
            if isinstance(node, BlackApp) and not registry.lookup(node.name).deterministic:
                raise GradientUnavailableError(
                    f"cell {r} applies the random black-box operator "
                    f"{node.name}, whose draws cannot be scored; "
                    "use the particle engine (smc) for this model")
    env = _deterministic_env(compiled, registry)

    nodes: list[ErpApp] = []
    for r in sorted(compiled.sheet.cells, key=lambda c: c.sort_key):
        for node in iter_op_nodes(compiled.sheet.cells[r]):
            if isinstance(node, ErpApp):
                nodes.append(node)
    nodes.sort(key=lambda n: (n.label.cell.sort_key, n.label.index))

    families: dict[Label, VariationalFamily] = {}
    lam: dict[Label, np.ndarray] = {}
    accum: dict[Label, np.ndarray] = {}
    for node in nodes:
        label = node.label
        if node.kind in (ErpKind.GAUSSIAN, ErpKind.NEAR):
            family: VariationalFamily = GaussianFamily()
        elif node.kind is ErpKind.BETWEEN:
            try:
                low = _static_value(node.args[0], env, registry)
                high = _static_value(node.args[1], env, registry)
            except _NotStatic:
                raise UnsupportedModelError(
                    f"the bounds of BETWEEN at {label} depend on random cells, "
                    "so its fitting family cannot be fixed")
            family = ScaledBetaFamily(low, high)
        else:
            try:
                values = tuple(_static_value(a, env, registry)
                               for a in node.args[0::2])
            except _NotStatic:
                raise UnsupportedModelError(
                    f"the value list of CHOICE at {label} depends on random "
                    "cells, so its fitting family cannot be fixed")
            family = SoftmaxChoiceFamily(values)
        families[label] = family
        lam[label] = _initial_params(node, family, env, registry, init)
        accum[label] = np.zeros(family.dim())
    return VariationalState(families, lam, accum)


def _initial_params(node: ErpApp, family: VariationalFamily,
                    env: dict[CellRef, float], registry: Registry,
                    init: str) -> np.ndarray:
    zeros = np.zeros(family.dim())
    if init == "zero":
        return zeros
    # Best-effort moment matching against the declared distribution; fall
    # back to zeros when its parameters are not deterministic.
    try:
        args = tuple(_static_value(a, env, registry) for a in node.args)
    except _NotStatic:
        return zeros
    if node.kind is ErpKind.GAUSSIAN:
        return np.array([args[0], math.log(args[1])])
    if node.kind is ErpKind.NEAR:
        return np.array([args[0], math.log(0.1 * args[0])])
    if node.kind is ErpKind.CHOICE:
        params = ErpParams(node.kind, args)
        total = sum(params.choice_weights)
        return np.log(np.maximum(np.asarray(params.choice_weights) / total,
                                 1e-300))
    return zeros   # BETWEEN: zero parameters already give the uniform density


# --------------------------------------------------------------------------
# gradient estimation and the update step

def _proposal(state: VariationalState) -> VariationalProposal:
    return VariationalProposal(
        {l: (state.families[l], state.lam[l]) for l in state.lam})


def estimate_gradient(compiled: CompiledSheet, state: VariationalState,
                      samples: int, registry: Registry | None = None,
                      rng: np.random.Generator | None = None
                      ) -> GradientEstimate:
    """Score-function gradient averaged over `samples` sheet evaluations.

    A label inside an untaken IF branch fires in none (or only some) of the
    samples; its estimate averages over the samples where it actually ran.
    """
    registry = registry if registry is not None else builtin_registry()
    rng = rng if rng is not None else np.random.default_rng(0)
    oracle = _proposal(state)
    sums: dict[Label, np.ndarray] = {}
    fired: dict[Label, int] = {}
    target_total = 0.0
    proposal_total = 0.0
    for _ in range(samples):
        _, bk = run_sheet(compiled, oracle, registry, rng)
        if bk.grads is None:
            raise GradientUnavailableError(
                "a stochastic black-box operator appears in the model, so "
                "log-density gradients cannot be formed; use the particle "
                "engine (smc) for this sheet")
        diff = bk.log_target - bk.log_proposal
        target_total += bk.log_target
        proposal_total += bk.log_proposal
        for label, g in bk.grads.items():
            contribution = np.asarray(g) * diff
            if label in sums:
                sums[label] += contribution
                fired[label] += 1
            else:
                sums[label] = contribution
                fired[label] = 1
    delta = {label: sums[label] / fired[label] for label in sums}
    return GradientEstimate(delta, fired,
                            target_total / samples, proposal_total / samples)


def adagrad_step(state: VariationalState, estimate: GradientEstimate,
                 learning_rate: float) -> VariationalState:
    """Apply one adaptive update in place; coordinates with no history stay put."""
    for label, delta in estimate.delta.items():
        acc = state.accum[label]
        acc += delta * delta
        lam = state.lam[label]
        moving = acc > 0.0
        lam[moving] += learning_rate * delta[moving] / np.sqrt(acc[moving])
    state.step += 1
    return state


def run_bbvi(compiled: CompiledSheet, config: BbviConfig | None = None,
             registry: Registry | None = None) -> BbviResult:
    """Fit all families; returns fitted parameters, moments, and a trace."""
    config = config if config is not None else BbviConfig()
    config.validate()
    registry = registry if registry is not None else builtin_registry()
    state = init_state(compiled, registry, config.init)
    if not state.lam:
        return BbviResult(state, {}, True, 0, [])
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    trace: list[IterationRow] = []
    converged = False
    for t in range(1, config.max_iterations + 1):
        estimate = estimate_gradient(compiled, state, config.samples,
                                     registry, rng)
        previous = {l: v.copy() for l, v in state.lam.items()}
        adagrad_step(state, estimate, config.learning_rate)
        change = math.sqrt(sum(
            float(((state.lam[l] - previous[l]) ** 2).sum())
            for l in state.lam))
        grad_norm = math.sqrt(sum(
            float((d * d).sum()) for d in estimate.delta.values()))
        elbo = estimate.mean_log_target - estimate.mean_log_proposal
        trace.append(IterationRow(t, elbo, grad_norm, change))
        logger.debug("iteration %d: elbo %.6g, gradient norm %.4g, change %.4g",
                     t, elbo, grad_norm, change)
        if change < config.tolerance:
            converged = True
            break
    summaries: dict[Label, FamilySummary] = {}
    for label in state.lam:
        family = state.families[label]
        lam = state.lam[label]
        mean, stddev = family.moments(lam)
        summaries[label] = FamilySummary(label, family, lam.copy(), mean, stddev)
    return BbviResult(state, summaries, converged, len(trace), trace)


def elbo_estimate(compiled: CompiledSheet, state: VariationalState,
                  samples: int, registry: Registry | None = None,
                  rng: np.random.Generator | None = None) -> float:
    """Monte Carlo evidence lower bound at the given parameters."""
    registry = registry if registry is not None else builtin_registry()
    rng = rng if rng is not None else np.random.default_rng(0)
    oracle = _proposal(state)
    total = 0.0
    for _ in range(samples):
        _, bk = run_sheet(compiled, oracle, registry, rng)
        total += bk.log_target - bk.log_proposal
    return total / samples
