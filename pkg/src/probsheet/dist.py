"""Random quantities and the variational families used to fit them.

The language's named random quantities (GAUSSIAN, BETWEEN, CHOICE, NEAR) are
represented as ErpParams and support exact-density scoring and sampling.
Each one has a matching variational family parameterized by an unconstrained
real vector, with closed-form log-density gradients for score-function
gradient estimation:

  GaussianFamily      mean lam[0], stddev exp(lam[1])
  ScaledBetaFamily    (high-low) * Beta(exp(lam[0]), exp(lam[1])) + low
  SoftmaxChoiceFamily softmax(lam) over a fixed value list

NEAR(c) abbreviates a Gaussian centred at c with a 10% relative spread, so it
shares the Gaussian family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, DomainError, ParamError, SupportError
from .formula import ErpKind

_LOG_2PI = math.log(2.0 * math.pi)


def digamma(x: float) -> float:
    """Logarithmic derivative of the gamma function, for x > 0.

    Small arguments are shifted up with psi(x) = psi(x+1) - 1/x until the
    asymptotic series applies; with the shift threshold at 6 the truncation
    error stays below 1e-11.
    """
    if x <= 0.0:
        raise DomainError(f"digamma requires a positive argument, got {x}")
    acc = 0.0
    while x < 6.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    # ln x - 1/(2x) - sum of Bernoulli terms B_2n / (2n x^(2n))
    series = (
        math.log(x)
        - 0.5 / x
        - inv2 * (1.0 / 12.0
                  - inv2 * (1.0 / 120.0
                            - inv2 * (1.0 / 252.0
                                      - inv2 * (1.0 / 240.0
                                                - inv2 / 132.0))))
    )
    return series + acc


def _gauss_logpdf(x: float, mu: float, sigma: float) -> float:
    z = (x - mu) / sigma
    return -0.5 * z * z - math.log(sigma) - 0.5 * _LOG_2PI


# --------------------------------------------------------------------------
# the language's random quantities

@dataclass(frozen=True)
class ErpParams:
    """A random quantity with fully evaluated numeric parameters."""

    kind: ErpKind
    args: tuple[float, ...]

    def __post_init__(self):
        from .formula import erp_arity_ok

        k, a = self.kind, self.args
        if not erp_arity_ok(k, len(a)):
            raise ParamError(f"{k.value} got {len(a)} parameters")
        if k is ErpKind.GAUSSIAN:
            if a[1] <= 0.0:
                raise ParamError(f"GAUSSIAN needs a positive spread, got {a[1]}")
        elif k is ErpKind.BETWEEN:
            if not a[0] < a[1]:
                raise ParamError(
                    f"BETWEEN needs low < high, got ({a[0]}, {a[1]})")
        elif k is ErpKind.NEAR:
            if a[0] <= 0.0:
                raise ParamError(f"NEAR needs a positive centre, got {a[0]}")
        elif k is ErpKind.CHOICE:
            weights = a[1::2]
            if any(w < 0.0 for w in weights):
                raise ParamError("CHOICE weights must be non-negative")
            if not sum(weights) > 0.0:
                raise ParamError("CHOICE weights must not all be zero")

    @property
    def choice_values(self) -> tuple[float, ...]:
        return self.args[0::2]

    @property
    def choice_weights(self) -> tuple[float, ...]:
        return self.args[1::2]


def sample_erp(p: ErpParams, rng: np.random.Generator) -> float:
    k, a = p.kind, p.args
    if k is ErpKind.GAUSSIAN:
        return float(rng.normal(a[0], a[1]))
    if k is ErpKind.NEAR:
        return float(rng.normal(a[0], 0.1 * a[0]))
    if k is ErpKind.BETWEEN:
        return float(rng.uniform(a[0], a[1]))
    values = p.choice_values
    w = np.asarray(p.choice_weights, dtype=float)
    idx = rng.choice(len(values), p=w / w.sum())
    return float(values[int(idx)])


def score_erp(p: ErpParams, x: float) -> float:
    """Log density (or log mass) of `p` at `x`; -inf off support."""
    k, a = p.kind, p.args
    if k is ErpKind.GAUSSIAN:
        return _gauss_logpdf(x, a[0], a[1])
    if k is ErpKind.NEAR:
        return _gauss_logpdf(x, a[0], 0.1 * a[0])
    if k is ErpKind.BETWEEN:
        if a[0] <= x <= a[1]:
            return -math.log(a[1] - a[0])
        return -math.inf
    total = sum(p.choice_weights)
    mass = sum(w for v, w in zip(p.choice_values, p.choice_weights) if v == x)
    if mass <= 0.0:
        return -math.inf
    return math.log(mass / total)


# --------------------------------------------------------------------------
# variational families

def _softmax(lam: Sequence[float]) -> np.ndarray:
    z = np.asarray(lam, dtype=float)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True)
class GaussianFamily:
    """Unbounded real values: mean lam[0], stddev exp(lam[1])."""

    def dim(self) -> int:
        return 2

    def sample(self, lam: Sequence[float], rng: np.random.Generator) -> float:
        _check_dim(self, lam)
        return float(rng.normal(lam[0], math.exp(lam[1])))

    def score(self, lam: Sequence[float], x: float) -> float:
        _check_dim(self, lam)
        return _gauss_logpdf(x, lam[0], math.exp(lam[1]))

    def grad(self, lam: Sequence[float], x: float) -> tuple[float, ...]:
        _check_dim(self, lam)
        s = math.exp(lam[1])
        z = (x - lam[0]) / s
        return (z / s, z * z - 1.0)

    def moments(self, lam: Sequence[float]) -> tuple[float, float]:
        _check_dim(self, lam)
        return (float(lam[0]), math.exp(lam[1]))

    def grid(self, lam: Sequence[float], points: int = 201):
        mean, sd = self.moments(lam)
        xs = np.linspace(mean - 4.0 * sd, mean + 4.0 * sd, points)
        ys = np.array([math.exp(self.score(lam, x)) for x in xs])
        return xs, ys


@dataclass(frozen=True)
class ScaledBetaFamily:
    """Bounded values on [low, high]: a Beta stretched over the interval.

    Both shape parameters live on a log scale; the interval is fixed when the
    family is created and never optimized.
    """

    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ParamError(
                f"scaled-beta support needs low < high, got ({self.low}, {self.high})")

    def dim(self) -> int:
        return 2

    def _shapes(self, lam: Sequence[float]) -> tuple[float, float]:
        return math.exp(lam[0]), math.exp(lam[1])

    def sample(self, lam: Sequence[float], rng: np.random.Generator) -> float:
        _check_dim(self, lam)
        alpha, beta = self._shapes(lam)
        return self.low + (self.high - self.low) * float(rng.beta(alpha, beta))

    def score(self, lam: Sequence[float], x: float) -> float:
        _check_dim(self, lam)
        width = self.high - self.low
        u = (x - self.low) / width
        if u <= 0.0 or u >= 1.0:
            return -math.inf
        alpha, beta = self._shapes(lam)
        log_beta_fn = (math.lgamma(alpha) + math.lgamma(beta)
                       - math.lgamma(alpha + beta))
        return ((alpha - 1.0) * math.log(u) + (beta - 1.0) * math.log1p(-u)
                - log_beta_fn - math.log(width))

    def grad(self, lam: Sequence[float], x: float) -> tuple[float, ...]:
        _check_dim(self, lam)
        u = (x - self.low) / (self.high - self.low)
        if u <= 0.0 or u >= 1.0:
            raise SupportError(
                f"{x} is outside the family support ({self.low}, {self.high})")
        alpha, beta = self._shapes(lam)
        shared = digamma(alpha + beta)
        return (
            alpha * (math.log(u) - digamma(alpha) + shared),
            beta * (math.log1p(-u) - digamma(beta) + shared),
        )

    def moments(self, lam: Sequence[float]) -> tuple[float, float]:
        _check_dim(self, lam)
        alpha, beta = self._shapes(lam)
        width = self.high - self.low
        total = alpha + beta
        mean = self.low + width * alpha / total
        var = width * width * alpha * beta / (total * total * (total + 1.0))
        return (mean, math.sqrt(var))

    def grid(self, lam: Sequence[float], points: int = 201):
        xs = np.linspace(self.low, self.high, points + 2)[1:-1]
        ys = np.array([math.exp(self.score(lam, x)) for x in xs])
        return xs, ys


@dataclass(frozen=True)
class SoftmaxChoiceFamily:
    """A fixed finite value list with softmax-parameterized masses."""

    values: tuple[float, ...]

    def dim(self) -> int:
        return len(self.values)

    def probs(self, lam: Sequence[float]) -> np.ndarray:
        _check_dim(self, lam)
        return _softmax(lam)

    def sample(self, lam: Sequence[float], rng: np.random.Generator) -> float:
        idx = rng.choice(len(self.values), p=self.probs(lam))
        return float(self.values[int(idx)])

    def _mass(self, lam: Sequence[float], x: float) -> tuple[np.ndarray, float]:
        p = self.probs(lam)
        mask = np.array([v == x for v in self.values])
        return p, float(p[mask].sum())

    def score(self, lam: Sequence[float], x: float) -> float:
        _, mass = self._mass(lam, x)
        if mass <= 0.0:
            return -math.inf
        return math.log(mass)

    def grad(self, lam: Sequence[float], x: float) -> tuple[float, ...]:
        p, mass = self._mass(lam, x)
        if mass <= 0.0:
            raise SupportError(f"{x} is not one of the family's values")
        out = []
        for j, v in enumerate(self.values):
            hit = p[j] / mass if v == x else 0.0
            out.append(hit - p[j])
        return tuple(out)

    def moments(self, lam: Sequence[float]) -> tuple[float, float]:
        p = self.probs(lam)
        vals = np.asarray(self.values)
        mean = float(p @ vals)
        var = float(p @ (vals * vals)) - mean * mean
        return (mean, math.sqrt(max(var, 0.0)))

    def grid(self, lam: Sequence[float], points: int = 201):
        return np.asarray(self.values), self.probs(lam)


VariationalFamily = GaussianFamily | ScaledBetaFamily | SoftmaxChoiceFamily


def _check_dim(family: VariationalFamily, lam: Sequence[float]) -> None:
    if len(lam) != family.dim():
        raise DimensionError(
            f"{type(family).__name__} expects {family.dim()} parameters, "
            f"got {len(lam)}")


def default_family(p: ErpParams) -> VariationalFamily:
    """The fitting family conventionally paired with each random quantity."""
    if p.kind in (ErpKind.GAUSSIAN, ErpKind.NEAR):
        return GaussianFamily()
    if p.kind is ErpKind.BETWEEN:
        return ScaledBetaFamily(p.args[0], p.args[1])
    return SoftmaxChoiceFamily(p.choice_values)


def sample_q(family: VariationalFamily, lam, rng: np.random.Generator) -> float:
    return family.sample(lam, rng)


def score_q(family: VariationalFamily, lam, x: float) -> float:
    return family.score(lam, x)


def grad_log_q(family: VariationalFamily, lam, x: float) -> tuple[float, ...]:
    return family.grad(lam, x)
