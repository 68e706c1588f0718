"""Antipodal phase metric, antipodal priors and exact expected-MSE evaluation.

Phases are reals in units of pi radians, always normalized into [0, 2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np
from scipy import integrate

PHASE_TOL = 1e-9
WEIGHT_TOL = 1e-12
QUAD_EPSABS = 1e-12


def wrap_phase(r: float) -> float:
    """Reduce ``r`` modulo 2 into [0, 2)."""
    r = float(r)
    if not math.isfinite(r):
        raise ValueError(f"phase must be finite, got {r!r}")
    w = r % 2.0
    # tiny negative inputs round up to exactly 2.0
    return 0.0 if w >= 2.0 else w


def wrap_phases(r) -> np.ndarray:
    """Vectorized :func:`wrap_phase`."""
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("phases must be finite")
    w = np.mod(r, 2.0)
    return np.where(w >= 2.0, 0.0, w)


def antipode(x: float) -> float:
    return wrap_phase(x + 1.0)


@dataclass(frozen=True)
class AntipodalMetric:
    """d(x, y) = diameter * |sin(pi (x - y) / 2)|."""

    diameter: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.diameter) and self.diameter > 0):
            raise ValueError("diameter must be a positive finite real")

    def distance(self, x, y):
        """Distance between phases; accepts scalars or broadcastable arrays."""
        if np.ndim(x) == 0 and np.ndim(y) == 0:
            return self.diameter * abs(math.sin(math.pi * (wrap_phase(x) - wrap_phase(y)) / 2))
        return self.diameter * np.abs(np.sin(np.pi * (wrap_phases(x) - wrap_phases(y)) / 2))

    def sq_distance(self, x, y):
        d = self.distance(x, y)
        return d * d


UNIT = AntipodalMetric()


def distance(x: float, y: float, m: AntipodalMetric = UNIT) -> float:
    return m.distance(x, y)


# -- priors -------------------------------------------------------------------


class PriorSpec:
    """Base class for antipodal priors over [0, 2)."""

    is_discrete: bool = True

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(phases, weights)`` for a discrete prior."""
        raise TypeError(f"{type(self).__name__} has no finite support")


@dataclass(frozen=True)
class ContinuousUniform(PriorSpec):
    """Uniform density 1/2 on [0, 2)."""

    is_discrete = False

    def density(self, theta: float) -> float:
        return 0.5

    def describe(self) -> dict:
        return {"kind": "uniform"}


def _check_antipodal(phases: np.ndarray, weights: np.ndarray) -> None:
    for p, w in zip(phases, weights):
        q = wrap_phase(p + 1.0)
        gap = np.abs(phases - q)
        gap = np.minimum(gap, 2.0 - gap)
        mass = weights[gap < PHASE_TOL].sum()
        if abs(mass - w) > WEIGHT_TOL:
            raise ValueError(
                f"prior is not antipodal: p({p:.12g}) = {w:.12g} but p({q:.12g}) = {mass:.12g}"
            )


def _check_weights(weights: np.ndarray) -> None:
    if np.any(weights < 0):
        raise ValueError("prior weights must be nonnegative")
    if abs(weights.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"prior weights sum to {weights.sum():.15g}, not 1")


@dataclass(frozen=True)
class GridPrior(PriorSpec):
    """Uniform prior on the even-N grid {eps + 2k/N mod 2 : k = 0..N-1}."""

    n: int
    eps: float = 0.0
    phases: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n:
            raise ValueError(f"grid size must be an integer, got {self.n!r}")
        n = int(self.n)
        if n <= 2 or n % 2:
            raise ValueError(f"grid size must be even and greater than 2, got {n}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "eps", float(self.eps))
        phases = wrap_phases(self.eps + 2.0 * np.arange(n) / n)
        phases.setflags(write=False)
        object.__setattr__(self, "phases", phases)
        if abs(np.exp(2j * np.pi * phases).sum()) >= 1e-9:
            raise ValueError("grid points do not satisfy sum(exp(2 pi i theta_k)) = 0")

    def support(self):
        return self.phases, np.full(self.n, 1.0 / self.n)

    def point(self, k: int) -> float:
        return float(self.phases[k % self.n])

    def describe(self) -> dict:
        return {"kind": "grid", "n": self.n, "eps": self.eps}


@dataclass(frozen=True)
class ExplicitPrior(PriorSpec):
    """Finite weighted list of phases; must be normalized and antipodal."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((wrap_phase(p), float(w)) for p, w in self.points)
        if not pts:
            raise ValueError("explicit prior needs at least one point")
        object.__setattr__(self, "points", pts)
        phases, weights = self.support()
        _check_weights(weights)
        _check_antipodal(phases, weights)

    def support(self):
        phases = np.array([p for p, _ in self.points])
        weights = np.array([w for _, w in self.points])
        return phases, weights

    def describe(self) -> dict:
        return {"kind": "explicit", "points": [list(p) for p in self.points]}


def make_grid_prior(n: int, eps: float = 0.0) -> GridPrior:
    return GridPrior(n, eps)


# -- expected mean squared error ------------------------------------------------

# An estimate law maps theta to the distribution of the estimate: either a
# sequence of (phase, probability) pairs or ContinuousUniform().
EstimateDist = Union[Sequence[tuple[float, float]], ContinuousUniform]
EstimateLaw = Callable[[float], EstimateDist]


def constant_law(dist: EstimateDist) -> EstimateLaw:
    """Estimate law that ignores theta."""
    return lambda theta: dist


def point_law(r: float) -> EstimateLaw:
    return constant_law(((r, 1.0),))


def _expected_sq_error(theta: float, dist: EstimateDist, m: AntipodalMetric) -> float:
    if isinstance(dist, ContinuousUniform):
        val, _ = integrate.quad(
            lambda r: 0.5 * m.sq_distance(theta, r), 0.0, 2.0, epsabs=QUAD_EPSABS, limit=200
        )
        return val
    pairs = list(dist)
    probs = np.array([p for _, p in pairs], dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > PHASE_TOL:
        raise ValueError(f"estimate law at theta={theta:.12g} is not a probability distribution")
    ests = np.array([r for r, _ in pairs], dtype=float)
    return float(np.dot(probs, m.sq_distance(theta, ests)))


def emse(prior: PriorSpec, estimate_law: EstimateLaw, m: AntipodalMetric = UNIT) -> float:
    """Prior-averaged mean squared error of an estimate law.

    Discrete priors are summed exactly; the continuous uniform prior is
    integrated adaptively.
    """
    if prior.is_discrete:
        phases, weights = prior.support()
        return float(
            sum(w * _expected_sq_error(t, estimate_law(t), m) for t, w in zip(phases, weights))
        )
    val, _ = integrate.quad(
        lambda t: 0.5 * _expected_sq_error(t, estimate_law(t), m),
        0.0,
        2.0,
        epsabs=QUAD_EPSABS,
        limit=200,
    )
    return val


def prior_from_description(desc: dict) -> PriorSpec:
    kind = desc.get("kind")
    if kind == "uniform":
        return ContinuousUniform()
    if kind == "grid":
        return GridPrior(desc["n"], desc.get("eps", 0.0))
    if kind == "explicit":
        return ExplicitPrior(tuple(tuple(p) for p in desc["points"]))
    raise ValueError(f"unknown prior kind {kind!r}")


def iter_support(prior: PriorSpec) -> Iterable[tuple[float, float]]:
    phases, weights = prior.support()
    return zip(phases.tolist(), weights.tolist())
