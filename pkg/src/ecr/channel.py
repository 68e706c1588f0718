"""Simulated single-qubit phase channel.

The verifier prepares |theta> = (|up> + exp(i pi theta)|down>)/sqrt(2) and the
prover may measure it exactly once. Outcomes are drawn with the Born rule from
a seeded numpy Generator: this is a reproducible simulator of quantum
measurement, NOT a source of randomness.

theta never leaves this module through a prover-facing accessor. A
:class:`StateHandle` is an opaque single-use token; the phase it refers to is
held by the :class:`Channel` that issued it.
"""
from __future__ import annotations

import enum
import itertools
import math
import threading
from dataclasses import dataclass
from typing import Hashable, Union

import numpy as np

from .metric import wrap_phase


class AlreadyConsumed(RuntimeError):
    """A state was measured a second time."""


class DuplicateRound(ValueError):
    pass


class Outcome(enum.Enum):
    ONE = 1
    ZERO = 0
    NULL = None

    @property
    def wire(self):
        return self.value

    @classmethod
    def from_wire(cls, value) -> "Outcome":
        return cls(value)


@dataclass(frozen=True)
class MeasurementModel:
    """Detection model p(1) = a sin^2(pi(theta - phi)/2) + b, p(0) = a cos^2(...) + b.

    The remaining mass 1 - a - 2b is a no-detection (NULL) outcome.
    """

    a: float = 1.0
    b: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)) or a < 0 or b < 0:
            raise ValueError(f"need a, b >= 0, got a={a}, b={b}")
        if a + 2 * b > 1 + 1e-12:
            raise ValueError(f"need a + 2b <= 1, got a + 2b = {a + 2 * b}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "phi", wrap_phase(self.phi))

    def describe(self) -> dict:
        return {"model": "detection", "a": self.a, "b": self.b, "phi": self.phi}


@dataclass(frozen=True)
class GeneralProjective:
    """Two-outcome projective family p(0) = Phi cos(pi(theta - phi)) + 1/2."""

    Phi: float = 0.5
    phi: float = 0.0

    def __post_init__(self):
        Phi = float(self.Phi)
        if not (0.0 <= Phi <= 0.5):
            raise ValueError(f"need 0 <= Phi <= 1/2, got {Phi}")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "phi", wrap_phase(self.phi))

    def describe(self) -> dict:
        return {"model": "projective", "Phi": self.Phi, "phi": self.phi}


Measurement = Union[MeasurementModel, GeneralProjective]

IDEAL = MeasurementModel(a=1.0, b=0.0)
HIGH_FIDELITY = MeasurementModel(a=0.52, b=0.09)
LOW_FIDELITY = MeasurementModel(a=0.01, b=0.04)


def measurement_from_description(desc: dict) -> Measurement:
    kind = desc.get("model")
    if kind == "detection":
        return MeasurementModel(desc["a"], desc["b"], desc["phi"])
    if kind == "projective":
        return GeneralProjective(desc["Phi"], desc["phi"])
    raise ValueError(f"unknown measurement model {kind!r}")


def outcome_probs(theta: float, model: MeasurementModel) -> tuple[float, float, float]:
    """Return (p1, p0, pnull)."""
    u = math.pi * (theta - model.phi) / 2
    s = math.sin(u) ** 2
    p1 = model.a * s + model.b
    p0 = model.a * (1.0 - s) + model.b
    pnull = max(0.0, 1.0 - model.a - 2 * model.b)
    return p1, p0, pnull


def general_probs(theta: float, g: GeneralProjective) -> tuple[float, float]:
    """Return (p1, p0) for the projective family."""
    c = g.Phi * math.cos(math.pi * (theta - g.phi))
    return 0.5 - c, 0.5 + c


def povm_extended_probs(theta: float, model: MeasurementModel, extra: int) -> np.ndarray:
    """[p1, p0, q, ..., q]: the NULL mass split over ``extra`` theta-independent outcomes."""
    if extra < 0:
        raise ValueError("extra must be >= 0")
    p1, p0, pnull = outcome_probs(theta, model)
    if extra == 0:
        return np.array([p1, p0, pnull])
    if pnull == 0:
        raise ValueError("no NULL mass to split: a + 2b = 1")
    return np.array([p1, p0] + [pnull / extra] * extra)


class StateHandle:
    """Opaque single-use token for one prepared state."""

    __slots__ = ("id", "_consumed", "_lock")

    def __init__(self, round_id: Hashable):
        self.id = round_id
        self._consumed = False
        self._lock = threading.Lock()

    @property
    def consumed(self) -> bool:
        return self._consumed

    def _consume(self) -> None:
        with self._lock:
            if self._consumed:
                raise AlreadyConsumed(f"state {self.id!r} was already measured")
            self._consumed = True

    def __repr__(self):
        return f"StateHandle(id={self.id!r}, consumed={self._consumed})"


class Channel:
    """Per-session state store and Born-rule sampler."""

    def __init__(self, rng: np.random.Generator | int | None = None):
        self._rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._phases: dict[Hashable, float] = {}
        self._handles: dict[Hashable, StateHandle] = {}
        self._lock = threading.Lock()
        self._auto_ids = itertools.count()

    def prepare(self, theta: float, round_id: Hashable = None) -> StateHandle:
        if round_id is None:
            round_id = ("auto", next(self._auto_ids))
        theta = wrap_phase(theta)
        with self._lock:
            if round_id in self._phases:
                raise DuplicateRound(f"round id {round_id!r} already used in this session")
            self._phases[round_id] = theta
            handle = StateHandle(round_id)
            self._handles[round_id] = handle
        return handle

    def handle(self, round_id: Hashable) -> StateHandle:
        return self._handles[round_id]

    def _take(self, handle: StateHandle) -> float:
        if self._handles.get(handle.id) is not handle:
            raise KeyError(f"handle {handle.id!r} was not issued by this channel")
        handle._consume()
        return self._phases[handle.id]

    def _draw(self) -> float:
        with self._lock:
            return float(self._rng.random())

    def sample(self, handle: StateHandle, model: MeasurementModel) -> Outcome:
        theta = self._take(handle)
        p1, p0, pnull = outcome_probs(theta, model)
        u = self._draw()
        if u < p1:
            return Outcome.ONE
        if pnull == 0 or u < p1 + p0:
            return Outcome.ZERO
        return Outcome.NULL

    def sample_general(self, handle: StateHandle, g: GeneralProjective) -> Outcome:
        theta = self._take(handle)
        _, p0 = general_probs(theta, g)
        return Outcome.ZERO if self._draw() < p0 else Outcome.ONE

    def measure(self, handle: StateHandle, measurement: Measurement) -> Outcome:
        if isinstance(measurement, GeneralProjective):
            return self.sample_general(handle, measurement)
        return self.sample(handle, measurement)

