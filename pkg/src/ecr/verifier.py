"""Verifier: theta selection, round scoring and the k-sigma certification test.

Under the null hypothesis (estimates independent of theta) every antipodal
prior gives E[d^2] = diameter^2 / 2. A session is certified when its posterior
MSE departs from that value by at least ``k_sigma`` null standard errors.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .channel import Channel
from .metric import (
    UNIT,
    AntipodalMetric,
    ContinuousUniform,
    GridPrior,
    PriorSpec,
    wrap_phase,
)
from .prover import StrategySpec

DEFAULT_K_SIGMA = 5.0


# -- theta selection ----------------------------------------------------------


@dataclass(frozen=True)
class IIDContinuousUniform:
    @property
    def prior(self) -> PriorSpec:
        return ContinuousUniform()

    def describe(self) -> dict:
        return {"kind": "iid-uniform"}


@dataclass(frozen=True)
class IIDGrid:
    n: int = 6
    eps: float = 0.0
    prior: GridPrior = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "prior", GridPrior(self.n, self.eps))

    def describe(self) -> dict:
        return {"kind": "iid-grid", "n": self.n, "eps": self.eps}


@dataclass(frozen=True)
class RoundRobinGrid:
    """Visits grid[0], grid[1], ... cyclically; no randomness at all."""

    n: int = 6
    eps: float = 0.0
    prior: GridPrior = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "prior", GridPrior(self.n, self.eps))

    def describe(self) -> dict:
        return {"kind": "round-robin", "n": self.n, "eps": self.eps}


SelectionPolicy = Union[IIDContinuousUniform, IIDGrid, RoundRobinGrid]


def policy_from_description(desc: dict) -> SelectionPolicy:
    kind = desc.get("kind")
    if kind == "iid-uniform":
        return IIDContinuousUniform()
    if kind == "iid-grid":
        return IIDGrid(int(desc["n"]), float(desc.get("eps", 0.0)))
    if kind == "round-robin":
        return RoundRobinGrid(int(desc["n"]), float(desc.get("eps", 0.0)))
    raise ValueError(f"unknown selection policy {kind!r}")


def select_theta(policy: SelectionPolicy, i: int, rng: Optional[np.random.Generator] = None) -> float:
    if i < 0:
        raise ValueError("round index must be >= 0")
    if isinstance(policy, RoundRobinGrid):
        return policy.prior.point(i)
    if isinstance(policy, IIDGrid):
        return policy.prior.point(int(rng.integers(policy.n)))
    if isinstance(policy, IIDContinuousUniform):
        return wrap_phase(2.0 * rng.random())
    raise TypeError(f"unsupported policy {policy!r}")


# -- records and statistics ---------------------------------------------------


@dataclass(frozen=True)
class RoundRecord:
    index: int
    theta: float
    estimate: float
    sq_err: float

    @classmethod
    def score(cls, index: int, theta: float, estimate: float, m: AntipodalMetric = UNIT):
        return cls(index, theta, estimate, m.sq_distance(theta, estimate))


def posterior_mse(records: Sequence[RoundRecord]) -> float:
    if not records:
        raise ValueError("posterior MSE of an empty session is undefined")
    return math.fsum(r.sq_err for r in records) / len(records)


def null_mean(m: AntipodalMetric = UNIT) -> float:
    return m.diameter**2 / 2


def _sq_err_variance(prior: PriorSpec, estimate: float, m: AntipodalMetric) -> float:
    if prior.is_discrete:
        phases, weights = prior.support()
        sq = m.sq_distance(phases, estimate)
        mean = np.dot(weights, sq)
        return float(np.dot(weights, (sq - mean) ** 2))
    # uniform prior: integrate d^4 exactly with a periodic trapezoid rule
    theta = 2.0 * np.arange(64) / 64
    sq = m.sq_distance(theta, estimate)
    return float(np.mean(sq**2) - np.mean(sq) ** 2)


def null_variance(prior: PriorSpec, m: AntipodalMetric = UNIT, estimate: Optional[float] = None) -> float:
    """Per-round variance of d(theta, est)^2 when the estimate ignores theta.

    Uniform priors (continuous or an even grid with N >= 4) give diameter^4 / 8
    whatever the estimate. For other priors the variance depends on the
    estimate, and without one the largest value over a 1/720 grid is returned.
    """
    if estimate is not None:
        return _sq_err_variance(prior, wrap_phase(estimate), m)
    if isinstance(prior, (ContinuousUniform, GridPrior)):
        return m.diameter**4 / 8
    grid = np.arange(1440) / 720
    return max(_sq_err_variance(prior, r, m) for r in grid)


def z_score(mse, n, null_var: float, mean: float = 0.5):
    """(mse - mean) * sqrt(n / null_var); vectorizes over numpy inputs."""
    return (np.asarray(mse) - mean) * np.sqrt(np.asarray(n) / null_var)


class Decision(str, enum.Enum):
    CERTIFIED_RANDOM = "CertifiedRandom"
    NOT_CERTIFIED = "NotCertified"


class Direction(str, enum.Enum):
    BELOW = "Below"
    ABOVE = "Above"
    WITHIN = "Within"


@dataclass(frozen=True)
class CertificationReport:
    n: int
    mse: float
    null_mean: float
    null_var: float
    z: float
    k_sigma: float
    decision: Decision
    direction: Direction
    entropy_bound_bits: float

    @property
    def certified(self) -> bool:
        return self.decision is Decision.CERTIFIED_RANDOM

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decision"] = self.decision.value
        d["direction"] = self.direction.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CertificationReport":
        d = dict(d)
        d["decision"] = Decision(d["decision"])
        d["direction"] = Direction(d["direction"])
        return cls(**d)


def certify(
    records: Sequence[RoundRecord],
    k_sigma: float = DEFAULT_K_SIGMA,
    prior: PriorSpec = GridPrior(6),
    m: AntipodalMetric = UNIT,
) -> CertificationReport:
    """Two-sided k-sigma test of the session MSE against the no-measurement value."""
    n = len(records)
    mse = posterior_mse(records)
    mean = null_mean(m)
    var = null_variance(prior, m)
    z = float(z_score(mse, n, var, mean))
    if z <= -k_sigma:
        direction = Direction.BELOW
    elif z >= k_sigma:
        direction = Direction.ABOVE
    else:
        direction = Direction.WITHIN
    decision = Decision.NOT_CERTIFIED if direction is Direction.WITHIN else Decision.CERTIFIED_RANDOM
    return CertificationReport(
        n=n,
        mse=mse,
        null_mean=mean,
        null_var=var,
        z=z,
        k_sigma=float(k_sigma),
        decision=decision,
        direction=direction,
        # at most half a certifiable bit per round
        entropy_bound_bits=n / 2,
    )


def crossing_round(sq_errs, k_sigma: float = DEFAULT_K_SIGMA, null_var: float = 1 / 8, mean: float = 0.5):
    """First n after which the running MSE stays outside the k-sigma null band.

    Returns None when the final round is still inside the band.
    """
    sq = np.asarray(sq_errs, dtype=float)
    n = np.arange(1, sq.size + 1)
    inside = np.abs(z_score(np.cumsum(sq) / n, n, null_var, mean)) < k_sigma
    if sq.size == 0 or inside[-1]:
        return None
    if not inside.any():
        return 1
    return int(np.nonzero(inside)[0][-1]) + 2


REPORT_FORMAT = 1


def report_document(scenario: dict, report: CertificationReport) -> dict:
    """Report as a plain document; the scenario description carries the seed."""
    return {"format": REPORT_FORMAT, "scenario": scenario, "certification": report.to_dict()}


# -- sessions -----------------------------------------------------------------


class SessionAborted(RuntimeError):
    """A round failed; ``records`` holds the rounds completed before it."""

    def __init__(self, message: str, records: list):
        super().__init__(message)
        self.records = records


def session_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (selection, channel) generators derived from one seed."""
    sel, chan = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(sel), np.random.default_rng(chan)


def run_session(
    policy: SelectionPolicy,
    strategy: StrategySpec,
    n: int,
    seed: int,
    k_sigma: float = DEFAULT_K_SIGMA,
    m: AntipodalMetric = UNIT,
) -> tuple[list[RoundRecord], CertificationReport]:
    """Run ``n`` rounds in process: select theta, prepare, collect estimate, score."""
    if n < 1:
        raise ValueError("a session needs at least one round")
    select_rng, channel_rng = session_streams(seed)
    channel = Channel(channel_rng)
    prover = strategy.start()
    records: list[RoundRecord] = []
    for i in range(n):
        theta = select_theta(policy, i, select_rng)
        handle = channel.prepare(theta, i)
        try:
            estimate = prover.next_estimate(lambda req: channel.measure(handle, req))
        except Exception as exc:
            raise SessionAborted(f"round {i} failed: {exc}", records) from exc
        records.append(RoundRecord.score(i, theta, estimate, m))
    return records, certify(records, k_sigma, policy.prior, m)
