"""Prover strategies.

A prover never sees theta. Each round it receives a ``measure`` callable which
performs the single permitted measurement on the round's state and returns an
:class:`~ecr.channel.Outcome`. Strategies are immutable specs; ``start()``
returns a session-bound prover carrying the bit-stream position.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Iterator, Optional, Union

import numpy as np

from .channel import Measurement, MeasurementModel, Outcome
from .metric import wrap_phase

MeasureFn = Callable[[Measurement], Outcome]


class BitSourceExhausted(RuntimeError):
    pass


@functools.lru_cache(maxsize=1)
def _epi_table() -> np.ndarray:
    raw = resources.files("ecr").joinpath("data/epi_bits.bin").read_bytes()
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
    bits.setflags(write=False)
    return bits


def epi_capacity() -> int:
    return int(_epi_table().size)


def epi_bits(n: int) -> str:
    """First ``n`` fractional binary digits of e**pi as a '0'/'1' string."""
    if n < 0:
        raise ValueError("n must be >= 0")
    table = _epi_table()
    if n > table.size:
        raise BitSourceExhausted(f"only {table.size} digits of e**pi are stored, asked for {n}")
    return "".join("01"[b] for b in table[:n])


@dataclass(frozen=True)
class EPiDigits:
    """Bits of e**pi, optionally reordered block-wise by a fixed index permutation.

    With permutation p of length L, bit i is digit ``(i // L) * L + p[i % L]``.
    """

    permutation: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.permutation is not None:
            perm = tuple(int(k) for k in self.permutation)
            if sorted(perm) != list(range(len(perm))):
                raise ValueError("permutation must be a rearrangement of 0..L-1")
            object.__setattr__(self, "permutation", perm)

    def stream(self) -> Iterator[int]:
        table = _epi_table()
        if not self.permutation:
            for b in table:
                yield int(b)
        else:
            size = len(self.permutation)
            usable = table.size - table.size % size
            for start in range(0, usable, size):
                for k in self.permutation:
                    yield int(table[start + k])
        raise BitSourceExhausted("ran out of stored e**pi digits")

    def describe(self) -> dict:
        d = {"kind": "epi"}
        if self.permutation:
            d["permutation"] = list(self.permutation)
        return d


@dataclass(frozen=True)
class ExplicitList:
    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def stream(self) -> Iterator[int]:
        yield from self.bits
        raise BitSourceExhausted(f"explicit bit list of length {len(self.bits)} exhausted")

    def describe(self) -> dict:
        return {"kind": "list", "bits": "".join(map(str, self.bits))}


BitSource = Union[EPiDigits, ExplicitList]


def bit_source_from_description(desc: dict) -> BitSource:
    if desc.get("kind") == "epi":
        perm = desc.get("permutation")
        return EPiDigits(tuple(perm) if perm else None)
    if desc.get("kind") == "list":
        return ExplicitList(tuple(int(c) for c in desc["bits"]))
    raise ValueError(f"unknown bit source {desc!r}")


def _next_bit(bits: Iterator[int]) -> int:
    try:
        return next(bits)
    except StopIteration:
        raise BitSourceExhausted("bit source exhausted") from None


# -- strategies -----------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorMap:
    """Outcome -> estimate. ``null_est`` is used on a no-detection outcome."""

    g0: float
    g1: float
    null_est: float = 0.0

    def __post_init__(self):
        for name in ("g0", "g1", "null_est"):
            object.__setattr__(self, name, wrap_phase(getattr(self, name)))

    def __call__(self, outcome: Outcome) -> float:
        if outcome is Outcome.ONE:
            return self.g1
        if outcome is Outcome.ZERO:
            return self.g0
        return self.null_est


@dataclass(frozen=True)
class DeterministicSequence:
    """Returns the next bit of a fixed sequence; never touches the state."""

    bits: BitSource = EPiDigits()

    def start(self) -> "Prover":
        return _SequenceProver(self.bits.stream())

    def describe(self) -> dict:
        return {"kind": "deterministic", "bits": self.bits.describe()}


@dataclass(frozen=True)
class MeasureAndMap:
    """Measure once, answer (phi + x) mod 2; on NULL answer the next fallback bit."""

    model: MeasurementModel = MeasurementModel()
    fallback: BitSource = EPiDigits()

    def start(self) -> "Prover":
        return _MeasureAndMapProver(self.model, self.fallback.stream())

    def describe(self) -> dict:
        return {
            "kind": "measure-and-map",
            "measurement": self.model.describe(),
            "fallback": self.fallback.describe(),
        }


@dataclass(frozen=True)
class GeneralEstimator:
    g: EstimatorMap
    measurement: Measurement = MeasurementModel()

    def start(self) -> "Prover":
        return _GeneralProver(self.g, self.measurement)

    def describe(self) -> dict:
        return {
            "kind": "general",
            "measurement": self.measurement.describe(),
            "g": [self.g.g0, self.g.g1, self.g.null_est],
        }


StrategySpec = Union[DeterministicSequence, MeasureAndMap, GeneralEstimator]


class Prover:
    """Session-bound strategy instance; used sequentially, one call per round."""

    def next_estimate(self, measure: MeasureFn) -> float:
        raise NotImplementedError

    def fallback_estimate(self) -> float:
        """Estimate to return when the round's measurement was refused."""
        raise NotImplementedError


class _SequenceProver(Prover):
    def __init__(self, bits: Iterator[int]):
        self._bits = bits

    def next_estimate(self, measure: MeasureFn) -> float:
        return self.fallback_estimate()

    def fallback_estimate(self) -> float:
        return float(_next_bit(self._bits))


class _MeasureAndMapProver(Prover):
    def __init__(self, model: MeasurementModel, bits: Iterator[int]):
        self._model = model
        self._bits = bits

    def next_estimate(self, measure: MeasureFn) -> float:
        x = measure(self._model)
        if x is Outcome.NULL:
            return self.fallback_estimate()
        return wrap_phase(self._model.phi + x.value)

    def fallback_estimate(self) -> float:
        return float(_next_bit(self._bits))


class _GeneralProver(Prover):
    def __init__(self, g: EstimatorMap, measurement: Measurement):
        self._g = g
        self._measurement = measurement

    def next_estimate(self, measure: MeasureFn) -> float:
        return self._g(measure(self._measurement))

    def fallback_estimate(self) -> float:
        return self._g.null_est


def next_estimate(prover: Prover, measure: MeasureFn) -> float:
    return prover.next_estimate(measure)


def strategy_from_description(desc: dict) -> StrategySpec:
    from .channel import measurement_from_description

    kind = desc.get("kind")
    if kind == "deterministic":
        return DeterministicSequence(bit_source_from_description(desc["bits"]))
    if kind == "measure-and-map":
        model = measurement_from_description(desc["measurement"])
        if not isinstance(model, MeasurementModel):
            raise ValueError("measure-and-map needs a detection model")
        return MeasureAndMap(model, bit_source_from_description(desc["fallback"]))
    if kind == "general":
        g0, g1, null_est = desc["g"]
        return GeneralEstimator(
            EstimatorMap(g0, g1, null_est), measurement_from_description(desc["measurement"])
        )
    raise ValueError(f"unknown strategy kind {kind!r}")

