"""Particle inference over compiled sheets.

Each island runs an independent particle population.  Particles draw every
free random quantity from its declared distribution, so a particle's weight
for one observation round is exp of the accumulated observation
log-likelihood of that round.  After each observation the population is
resampled (multinomial by default) and the per-round mean weight is folded
into the island's running evidence estimate; after the last observation the
remaining unobserved cells are filled in by plain forward simulation.

Islands never share state, and each gets its own random stream derived from
(seed, island index), so runs are reproducible for a fixed configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blackbox import Registry, builtin_registry
from .errors import AllZeroWeightsError, ConfigError, UnboundTargetError
from .evaluator import PriorProposal, State, step_cell
from .formula import CellRef
from .graph import CompiledSheet


@dataclass
class ParticleStore:
    """One island's particles: complete cell bindings plus a common weight."""

    databases: list[State]
    weights: np.ndarray
    evidence: float = 1.0
    log_evidence: float = 0.0

    def __len__(self) -> int:
        return len(self.databases)


@dataclass
class PosteriorMixture:
    """All islands of one run, with combination weights summing to one."""

    islands: list[ParticleStore]
    weights: np.ndarray


def island_sizes(particles: int, islands: int) -> list[int]:
    """Split a particle budget: equal shares, remainder on the last island."""
    if islands < 1:
        raise ConfigError(f"need at least one island, got {islands}")
    if particles < 1:
        raise ConfigError(f"need at least one particle, got {particles}")
    if particles < islands:
        raise ConfigError(
            f"cannot spread {particles} particles over {islands} islands")
    base = particles // islands
    sizes = [base] * islands
    sizes[-1] += particles % islands
    return sizes


def resample(store: ParticleStore, rng: np.random.Generator,
             scheme: str = "multinomial") -> ParticleStore:
    """Draw a fresh equally-weighted population in proportion to weight.

    The default draws particle slots independently; "systematic" and
    "stratified" are lower-variance alternatives.  The returned weights are
    all equal to the incoming mean, so total weight is preserved.
    """
    w = np.asarray(store.weights, dtype=float)
    total = w.sum()
    if not total > 0.0:
        raise AllZeroWeightsError("every particle weight is zero")
    probs = w / total
    n = len(w)
    if scheme == "multinomial":
        idx = rng.choice(n, size=n, replace=True, p=probs)
    elif scheme in ("systematic", "stratified"):
        if scheme == "systematic":
            positions = (np.arange(n) + rng.uniform()) / n
        else:
            positions = (np.arange(n) + rng.uniform(size=n)) / n
        idx = np.searchsorted(np.cumsum(probs), positions)
        idx = np.minimum(idx, n - 1)
    else:
        raise ConfigError(f"unknown resampling scheme {scheme!r}")
    databases = [dict(store.databases[int(i)]) for i in idx]
    mean = total / n
    return ParticleStore(databases, np.full(n, mean),
                         store.evidence, store.log_evidence)


def run_island(compiled: CompiledSheet, particles: int,
               registry: Registry | None = None,
               rng: np.random.Generator | None = None
               ) -> tuple[ParticleStore, float]:
    """Run one particle population through every observation.

    Returns the store (complete databases, equal weights) and its evidence
    estimate: the product over observation rounds of the mean round weight.
    """
    registry = registry if registry is not None else builtin_registry()
    rng = rng if rng is not None else np.random.default_rng(0)
    oracle = PriorProposal()
    dbs: list[State] = [{} for _ in range(particles)]
    log_evidence = 0.0

    for i, obs in enumerate(compiled.observed):
        cells = compiled.pred_blocks[i] + (obs,)
        frontier = compiled.frontier_blocks[i]
        logw = np.empty(particles)
        for s in range(particles):
            db = dbs[s]
            rho: State = {r: db[r] for r in frontier}
            log_target = 0.0
            log_proposal = 0.0
            for r in cells:
                rho, bk = step_cell(compiled, rho, r, oracle, registry, rng)
                log_target += bk.log_target
                log_proposal += bk.log_proposal
            logw[s] = log_target - log_proposal
            for r in cells:
                db[r] = rho[r]
        top = logw.max()
        if top == -math.inf:
            raise AllZeroWeightsError(
                f"every particle weight is zero at observation {obs}")
        shifted = np.exp(logw - top)
        log_evidence += top + math.log(shifted.sum() / particles)
        probs = shifted / shifted.sum()
        idx = rng.choice(particles, size=particles, replace=True, p=probs)
        dbs = [dict(dbs[int(z)]) for z in idx]

    # Forward-simulate whatever no observation depends on.
    for s in range(particles):
        db = dbs[s]
        rho = {r: db[r] for r in compiled.residual_frontier}
        for r in compiled.residual:
            rho, _ = step_cell(compiled, rho, r, oracle, registry, rng)
            db[r] = rho[r]

    evidence = float(np.exp(log_evidence))
    store = ParticleStore(dbs, np.full(particles, evidence),
                          evidence, log_evidence)
    return store, evidence


def run_smc(compiled: CompiledSheet, particles: int = 5000, islands: int = 10,
            registry: Registry | None = None, seed: int = 0) -> PosteriorMixture:
    """Run all islands and weight them by their evidence estimates."""
    sizes = island_sizes(particles, islands)
    streams = np.random.SeedSequence(seed).spawn(islands)
    stores: list[ParticleStore] = []
    for j, size in enumerate(sizes):
        store, _ = run_island(compiled, size, registry,
                              np.random.default_rng(streams[j]))
        stores.append(store)
    log_z = np.array([s.log_evidence for s in stores])
    top = log_z.max()
    if top == -math.inf:
        raise AllZeroWeightsError("every island produced zero evidence")
    rel = np.exp(log_z - top)
    return PosteriorMixture(stores, rel / rel.sum())


def combined_log_evidence(mix: PosteriorMixture) -> float:
    """Log of the particle-count-weighted mean of the island evidences."""
    sizes = np.array([len(s) for s in mix.islands], dtype=float)
    log_z = np.array([s.log_evidence for s in mix.islands])
    top = log_z.max()
    if top == -math.inf:
        return -math.inf
    return float(top + np.log(np.exp(log_z - top) @ sizes / sizes.sum()))


def particle_values(mix: PosteriorMixture, target: CellRef
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Every particle's value for `target`, with per-particle mixture weights."""
    values: list[float] = []
    weights: list[float] = []
    found = False
    for island_weight, store in zip(mix.weights, mix.islands):
        share = float(island_weight) / len(store)
        for db in store.databases:
            if target in db:
                found = True
                values.append(db[target])
                weights.append(share)
    if not found:
        raise UnboundTargetError(f"cell {target} is not in any particle database")
    return np.asarray(values), np.asarray(weights)


@dataclass
class Histogram:
    """An equal-width weighted histogram with summary moments."""

    edges: np.ndarray     # bins + 1 ascending edges
    masses: np.ndarray    # bins non-negative masses summing to 1
    mean: float
    stddev: float


def posterior_histogram(mix: PosteriorMixture, target: CellRef,
                        bins: int = 40) -> Histogram:
    """Weighted posterior histogram of one cell across all islands."""
    if bins < 1:
        raise ConfigError(f"need at least one histogram bin, got {bins}")
    values, weights = particle_values(mix, target)
    total = weights.sum()
    mean = float(values @ weights / total)
    var = float(((values - mean) ** 2) @ weights / total)
    lo = float(values.min())
    hi = float(values.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    masses, edges = np.histogram(values, bins=bins, range=(lo, hi),
                                 weights=weights)
    return Histogram(edges, masses / total, mean, math.sqrt(var))
