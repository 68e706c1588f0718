"""Numerical oracles for the antipodal estimation bounds.

Everything here is a pure function. Discrete priors are summed exactly. The
continuous uniform prior is integrated with a periodic trapezoid rule: every
integrand below is a trigonometric polynomial of degree <= 2 in exp(i pi theta),
so an M-point rule with M > 2 is exact up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np
from scipy import integrate

from .channel import GeneralProjective, Measurement, MeasurementModel
from .metric import (
    UNIT,
    AntipodalMetric,
    ContinuousUniform,
    EstimateDist,
    PriorSpec,
    constant_law,
    emse,
    wrap_phases,
)
from .prover import EstimatorMap

QUAD_NODES = 2048
BRUTE_NODES = 64
TIE_TOL = 1e-12

Nodes = tuple[np.ndarray, np.ndarray]


def _nodes(prior: Union[PriorSpec, Nodes], count: int = QUAD_NODES) -> Nodes:
    """Quadrature nodes and weights summing to 1 for a prior.

    A raw ``(phases, weights)`` pair is accepted unvalidated, which allows
    non-antipodal point sets.
    """
    if isinstance(prior, tuple):
        phases, weights = prior
        return np.asarray(phases, dtype=float), np.asarray(weights, dtype=float)
    if prior.is_discrete:
        return prior.support()
    return 2.0 * np.arange(count) / count, np.full(count, 1.0 / count)


def _outcome_table(theta: np.ndarray, measurement: Measurement) -> np.ndarray:
    """Rows p(1), p(0), p(null) evaluated at each theta."""
    if isinstance(measurement, GeneralProjective):
        c = measurement.Phi * np.cos(np.pi * (theta - measurement.phi))
        return np.stack([0.5 - c, 0.5 + c, np.zeros_like(theta)])
    s = np.sin(np.pi * (theta - measurement.phi) / 2) ** 2
    a, b = measurement.a, measurement.b
    pnull = max(0.0, 1.0 - a - 2 * b)
    return np.stack([a * s + b, a * (1.0 - s) + b, np.full_like(theta, pnull)])


# -- no-measurement bound ------------------------------------------------------


def no_measurement_emse(prior: PriorSpec, estimate_dist: EstimateDist, m: AntipodalMetric = UNIT) -> float:
    """EMSE of an estimate drawn independently of theta. Always diameter^2 / 2."""
    return emse(prior, constant_law(estimate_dist), m)


# -- measurement bound -----------------------------------------------------------


def emse_closed_uniform(g: EstimatorMap, phi: float) -> float:
    """EMSE for the ideal readout at phase phi and the uniform prior on [0, 2)."""
    return 0.5 + (math.cos(math.pi * (g.g1 - phi)) - math.cos(math.pi * (g.g0 - phi))) / 8


def emse_numeric(
    prior: Union[PriorSpec, Nodes],
    measurement: Measurement,
    g: EstimatorMap,
    m: AntipodalMetric = UNIT,
) -> float:
    """EMSE of the estimate g(x) where x is drawn from ``measurement``."""
    theta, w = _nodes(prior)
    probs = _outcome_table(theta, measurement)
    ests = np.array([g.g1, g.g0, g.null_est])[:, None]
    sq = m.sq_distance(theta[None, :], ests)
    return float(np.sum(w * np.sum(probs * sq, axis=0)))


@dataclass(frozen=True)
class BruteForceResult:
    min_emse: float
    phi: float
    Phi: float
    g: EstimatorMap
    resolution: tuple[float, float, float]
    minimizing_phis: tuple[float, ...] = field(default=(), repr=False)

    @property
    def argmin(self) -> tuple[float, float, EstimatorMap]:
        return self.phi, self.Phi, self.g


def _grid(step: float, stop: float) -> np.ndarray:
    count = int(round(stop / step))
    return np.arange(count) * step


def brute_force_min(
    prior: PriorSpec,
    phi_step: float = 1 / 720,
    Phi_step: float = 1 / 100,
    g_step: float = 1 / 720,
    radix2: bool = False,
    m: AntipodalMetric = UNIT,
) -> BruteForceResult:
    """Exhaustive minimum of the EMSE over readout phase, visibility and estimator.

    For a fixed (phi, Phi) the EMSE splits into one term per outcome, so each
    of g(0) and g(1) is minimized over its grid independently; the result is
    the exact minimum over the full product grid. Ties within 1e-12 are
    broken lexicographically on (phi, Phi, g0, g1).
    """
    if phi_step > 1 / 360 or g_step > 1 / 360:
        raise ValueError("phi and estimator grid steps must be <= 1/360")
    phis = _grid(phi_step, 2.0)
    Phis = np.arange(int(math.floor(0.5 / Phi_step + 1e-9)) + 1) * Phi_step
    if Phis[-1] < 0.5 - 1e-12:
        Phis = np.append(Phis, 0.5)
    base_g = np.array([0.0, 1.0]) if radix2 else _grid(g_step, 2.0)

    theta, w = _nodes(prior, BRUTE_NODES)
    wd = w[:, None] * m.sq_distance(theta[:, None], base_g[None, :])  # (nodes, g)
    cos_tp = np.cos(np.pi * (theta[None, :] - phis[:, None]))  # (phi, nodes)
    U = wd.sum(axis=0)  # (g,)
    V = cos_tp @ wd  # (phi, g)

    best = math.inf
    totals = np.empty((phis.size, Phis.size))
    per_phi = []
    for i, phi in enumerate(phis):
        gs, u, v = base_g, U, V[i]
        if not radix2:
            # the analytic minimizers (phi, phi + 1) join the grid
            extra = wrap_phases([phi, phi + 1.0])
            dx = w[:, None] * m.sq_distance(theta[:, None], extra[None, :])
            gs = np.concatenate([gs, extra])
            u = np.concatenate([u, dx.sum(axis=0)])
            v = np.concatenate([v, cos_tp[i] @ dx])
            order = np.argsort(gs, kind="stable")
            gs, u, v = gs[order], u[order], v[order]
        A = u[None, :] / 2 + Phis[:, None] * v[None, :]  # outcome 0 terms
        B = u[None, :] / 2 - Phis[:, None] * v[None, :]  # outcome 1 terms
        totals[i] = A.min(axis=1) + B.min(axis=1)
        per_phi.append((gs, A, B))
        best = min(best, totals[i].min())

    hit = np.argwhere(totals <= best + TIE_TOL)  # row-major = lexicographic
    i, j = hit[0]
    gs, A, B = per_phi[i]
    a_row, b_row = A[j], B[j]
    k0 = int(np.nonzero(a_row + b_row.min() <= best + TIE_TOL)[0][0])
    k1 = int(np.nonzero(a_row[k0] + b_row <= best + TIE_TOL)[0][0])
    minimizing = tuple(float(p) for p in phis[np.any(totals <= best + TIE_TOL, axis=1)])
    return BruteForceResult(
        min_emse=float(best),
        phi=float(phis[i]),
        Phi=float(Phis[j]),
        g=EstimatorMap(float(gs[k0]), float(gs[k1])),
        resolution=(phi_step, Phi_step, g_step),
        minimizing_phis=minimizing,
    )


# -- fidelity and cherry-picking ---------------------------------------------------


def prop1_curve(alpha: float, emse_meas: float) -> float:
    """EMSE when a fraction 1 - alpha of the data is replaced by theta-blind guesses."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * emse_meas + (1.0 - alpha) * 0.5


class Witness(NamedTuple):
    r: float
    error: float
    mass: float


def conditional_errors(
    likelihood: Callable[[np.ndarray], np.ndarray],
    prior: PriorSpec,
    rs: np.ndarray,
    m: AntipodalMetric = UNIT,
) -> tuple[np.ndarray, float]:
    """Outcome-weighted errors  E_prior[p(x; theta) d(theta, r)^2]  for each r, and the outcome mass."""
    rs = np.asarray(rs, dtype=float)
    if prior.is_discrete:
        theta, w = prior.support()
        px = np.asarray(likelihood(theta), dtype=float) * w
        return px @ m.sq_distance(theta[:, None], rs[None, :]), float(px.sum())

    def integrand(t):
        return 0.5 * float(likelihood(np.array([t]))[0]) * m.sq_distance(t, rs)

    errs, _ = integrate.quad_vec(integrand, 0.0, 2.0, epsabs=1e-11, epsrel=0.0)
    mass, _ = integrate.quad(lambda t: 0.5 * float(likelihood(np.array([t]))[0]), 0.0, 2.0, epsabs=1e-12)
    return np.asarray(errs), mass


def prop2_witness(
    likelihood: Callable[[np.ndarray], np.ndarray],
    prior: PriorSpec,
    m: AntipodalMetric = UNIT,
    step: float = 1 / 720,
) -> Witness:
    """Best fixed estimate for one outcome; its weighted error never exceeds mass * d^2 / 2."""
    rs = _grid(step, 2.0)
    errs, mass = conditional_errors(likelihood, prior, rs, m)
    k = int(np.argmin(errs))
    return Witness(float(rs[k]), float(errs[k]), mass)


# -- Fisher information ------------------------------------------------------------


def outcome_derivatives(theta: float, measurement: Measurement) -> tuple[np.ndarray, np.ndarray]:
    """Outcome probabilities and their analytic theta-derivatives."""
    if isinstance(measurement, GeneralProjective):
        x = math.pi * (theta - measurement.phi)
        Phi = measurement.Phi
        # 1/2 -+ Phi cos x written without cancellation near x = 0, pi
        p1 = (0.5 - Phi) + 2 * Phi * math.sin(x / 2) ** 2
        p0 = (0.5 - Phi) + 2 * Phi * math.cos(x / 2) ** 2
        dp0 = -math.pi * Phi * math.sin(x)
        return np.array([p1, p0]), np.array([-dp0, dp0])
    u = math.pi * (theta - measurement.phi) / 2
    a, b = measurement.a, measurement.b
    s = math.sin(u) ** 2
    ds = (math.pi / 2) * math.sin(2 * u)
    pnull = max(0.0, 1.0 - a - 2 * b)
    return np.array([a * s + b, a * (1 - s) + b, pnull]), np.array([a * ds, -a * ds, 0.0])


def fisher_from(probs: Sequence[float], dprobs: Sequence[float]) -> float:
    total = 0.0
    for p, dp in zip(probs, dprobs):
        if p > 0:
            total += dp * dp / p
        elif dp != 0:
            return math.inf
    return total


def fisher_info(theta: float, measurement: Measurement) -> float:
    """Classical Fisher information of one measurement outcome about theta.

    A zero-probability outcome with nonzero slope makes it infinite; one with
    zero slope contributes nothing, so at the points where an outcome becomes
    certain the value is 0 rather than the limit of its neighbours.
    """
    return fisher_from(*outcome_derivatives(theta, measurement))


# -- oracle-check table ---------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    expected: float
    tol: float
    op: str = "=="

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "expected", float(self.expected))

    @property
    def passed(self) -> bool:
        if self.op == "<=":
            return self.value <= self.expected + self.tol
        return abs(self.value - self.expected) <= self.tol

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "expected": self.expected,
            "tol": self.tol,
            "op": self.op,
            "passed": self.passed,
        }


def run_oracle_checks(seed: int = 0, brute_force: bool = True) -> list[Check]:
    """Evaluate every oracle assertion and return one row per check."""
    from .metric import GridPrior

    rng = np.random.default_rng(seed)
    uniform = ContinuousUniform()
    priors = {"uniform": uniform, "grid4": GridPrior(4), "grid6": GridPrior(6)}
    checks: list[Check] = []

    worst = {name: 0.0 for name in priors}
    for _ in range(20):
        k = int(rng.integers(1, 6))
        dist = tuple(zip(2 * rng.random(k), rng.dirichlet(np.ones(k))))
        for name, prior in priors.items():
            worst[name] = max(worst[name], abs(no_measurement_emse(prior, dist) - 0.5))
    for name, err in worst.items():
        checks.append(Check(f"no-measurement EMSE = 1/2 ({name})", 0.5 + err, 0.5, 1e-10))
    checks.append(
        Check("no-measurement EMSE = d^2/2 (d=2)", no_measurement_emse(uniform, ((1.0, 1.0),), AntipodalMetric(2.0)), 2.0, 1e-10)
    )

    ideal = MeasurementModel()
    gap = 0.0
    for _ in range(200):
        g0, g1, phi = rng.integers(0, 1440, size=3) / 720
        g = EstimatorMap(g0, g1)
        gap = max(gap, abs(emse_closed_uniform(g, phi) - emse_numeric(uniform, MeasurementModel(phi=phi), g)))
    checks.append(Check("closed form vs numeric EMSE", gap, 0.0, 1e-9))
    for name, prior in [("uniform", uniform), ("grid6", GridPrior(6)), ("grid10", GridPrior(10, 0.05))]:
        checks.append(Check(f"ideal readout EMSE = 1/4 ({name})", emse_numeric(prior, ideal, EstimatorMap(0, 1)), 0.25, 1e-9))
    for a in (0.01, 0.52, 1.0):
        for b in (0.0, 0.04, 0.09):
            if a + 2 * b > 1:
                continue
            value = emse_numeric(uniform, MeasurementModel(a, b), EstimatorMap(0, 1, 0))
            checks.append(Check(f"noisy readout EMSE = 1/2 - a/4 (a={a}, b={b})", value, 0.5 - a / 4, 1e-9))

    if brute_force:
        for name, prior in [("uniform", uniform), ("grid4", GridPrior(4)), ("grid6", GridPrior(6)), ("grid10", GridPrior(10, 0.05))]:
            res = brute_force_min(prior)
            checks.append(Check(f"brute-force minimum EMSE ({name})", res.min_emse, 0.25, 1e-6))

    w = prop2_witness(lambda t: np.cos(np.pi * t / 2) ** 2, uniform)
    checks.append(Check("cherry-picking witness error <= mass/2", w.error, w.mass / 2, 1e-12, "<="))

    checks.append(Check("Fisher information at Phi=1/2 equals pi^2", fisher_info(0.3, GeneralProjective(0.5, 0.0)), math.pi**2, 1e-9))
    odd = (2.0 * np.arange(5) / 5, np.full(5, 0.2))
    spread = max(abs(emse_numeric(odd, MeasurementModel(phi=p), EstimatorMap(p, p + 1)) - 0.25) for p in np.arange(36) / 18)
    checks.append(Check("odd N=5 grid EMSE = 1/4 for every phi", 0.25 + spread, 0.25, 1e-9))
    return checks
