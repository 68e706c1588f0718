from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecr.channel import HIGH_FIDELITY, GeneralProjective, MeasurementModel, Outcome
from ecr.prover import (
    BitSourceExhausted,
    DeterministicSequence,
    EPiDigits,
    EstimatorMap,
    ExplicitList,
    GeneralEstimator,
    MeasureAndMap,
    _epi_table,
    epi_bits,
    epi_capacity,
    strategy_from_description,
)

def reference_epi_bits(n: int) -> int:
    """Fractional bits of e**pi as an integer, computed with MPFR."""
    gmpy2 = pytest.importorskip("gmpy2")
    gmpy2.get_context().precision = n + 128
    x = gmpy2.exp(gmpy2.const_pi())
    return int(gmpy2.floor((x - gmpy2.floor(x)) * gmpy2.mpz(2) ** n))


class TestEPiDigits:
    def test_leading_bits(self):
        # e**pi = 23.1406926..., 0.1406926 = 0.00100100...b
        assert epi_bits(8) == "00100100"

    def test_stored_table_matches_mpfr(self):
        n = epi_capacity()
        assert n == 2**20
        stored = int.from_bytes(np.packbits(_epi_table()).tobytes(), "big")
        assert stored == reference_epi_bits(n)

    def test_stream_matches_table(self):
        first = list(itertools.islice(EPiDigits().stream(), 64))
        assert "".join(map(str, first)) == epi_bits(64)

    def test_permutation_reorders_blocks(self):
        digits = epi_bits(12)
        got = list(itertools.islice(EPiDigits((2, 0, 1)).stream(), 12))
        want = [int(digits[3 * (i // 3) + (2, 0, 1)[i % 3]]) for i in range(12)]
        assert got == want

    def test_bad_permutation(self):
        with pytest.raises(ValueError):
            EPiDigits((0, 0, 1))

    def test_exhaustion_is_reported(self):
        with pytest.raises(BitSourceExhausted):
            epi_bits(epi_capacity() + 1)


class TestExplicitList:
    def test_exhausts(self):
        prover = DeterministicSequence(ExplicitList((1, 0))).start()
        assert [prover.next_estimate(None), prover.next_estimate(None)] == [1.0, 0.0]
        with pytest.raises(BitSourceExhausted):
            prover.next_estimate(None)

    def test_rejects_non_bits(self):
        with pytest.raises(ValueError):
            ExplicitList((0, 2))


def stub_measure(outcomes):
    """A stand-in channel returning scripted outcomes and recording the requests."""
    seen = []
    it = iter(outcomes)

    def measure(request):
        seen.append(request)
        return next(it)

    return measure, seen


class ScriptedChannel:
    """Channel stand-in: stores prepared phases but answers with scripted outcomes."""

    def __init__(self, outcomes):
        self._outcomes = iter(outcomes)
        self.phases = []

    def prepare(self, theta, round_id):
        self.phases.append(theta)
        return round_id

    def measure(self, handle, request):
        return next(self._outcomes)


def play(strategy, thetas, outcomes):
    channel = ScriptedChannel(outcomes)
    prover = strategy.start()
    estimates = []
    for i, theta in enumerate(thetas):
        handle = channel.prepare(theta, i)
        estimates.append(prover.next_estimate(lambda req: channel.measure(handle, req)))
    return estimates


blind_strategies = st.sampled_from(
    [
        DeterministicSequence(),
        MeasureAndMap(HIGH_FIDELITY, EPiDigits()),
        MeasureAndMap(MeasurementModel(1.0, 0.0, 0.3), ExplicitList((1,) * 40)),
        GeneralEstimator(EstimatorMap(0.2, 1.7, 0.9), GeneralProjective(0.4, 0.1)),
    ]
)


class TestThetaBlindness:
    """With the channel stubbed, substituting theta cannot change any estimate."""

    @given(blind_strategies, st.data())
    @settings(max_examples=100)
    def test_invariant_under_theta_substitution(self, strategy, data):
        n = data.draw(st.integers(1, 40))
        outcomes = data.draw(st.lists(st.sampled_from(list(Outcome)), min_size=n, max_size=n))
        if isinstance(strategy, GeneralEstimator):
            outcomes = [o if o is not Outcome.NULL else Outcome.ZERO for o in outcomes]
        thetas = st.lists(st.floats(0, 2, exclude_max=True), min_size=n, max_size=n)
        first = play(strategy, data.draw(thetas), outcomes)
        second = play(strategy, data.draw(thetas), outcomes)
        assert first == second

    def test_deterministic_never_measures(self):
        prover = DeterministicSequence().start()

        def forbidden(request):
            raise AssertionError("deterministic strategy touched the state")

        est = [prover.next_estimate(forbidden) for _ in range(32)]
        assert "".join(str(int(e)) for e in est) == epi_bits(32)

    def test_general_estimator_requests_one_measurement(self):
        g = EstimatorMap(0.25, 1.25, 0.5)
        prover = GeneralEstimator(g, GeneralProjective(0.5, 0.25)).start()
        measure, seen = stub_measure([Outcome.ZERO, Outcome.ONE])
        assert prover.next_estimate(measure) == 0.25
        assert prover.next_estimate(measure) == 1.25
        assert seen == [GeneralProjective(0.5, 0.25)] * 2


class TestMeasureAndMap:
    def test_maps_outcomes(self):
        prover = MeasureAndMap(MeasurementModel(0.52, 0.09, 0.5), ExplicitList((1, 1))).start()
        measure, seen = stub_measure([Outcome.ONE, Outcome.ZERO, Outcome.NULL])
        assert prover.next_estimate(measure) == 1.5
        assert prover.next_estimate(measure) == 0.5
        assert prover.next_estimate(measure) == 1.0
        assert len(seen) == 3

    def test_fallback_consumes_bits(self):
        prover = MeasureAndMap(MeasurementModel(0.0, 0.0), EPiDigits()).start()
        measure, _ = stub_measure([Outcome.NULL] * 16)
        est = [prover.next_estimate(measure) for _ in range(16)]
        assert "".join(str(int(e)) for e in est) == epi_bits(16)

    def test_estimator_map_wraps(self):
        g = EstimatorMap(-0.5, 2.25)
        assert (g.g0, g.g1) == (1.5, 0.25)


@pytest.mark.parametrize(
    "strategy",
    [
        DeterministicSequence(),
        DeterministicSequence(ExplicitList((0, 1, 1))),
        MeasureAndMap(HIGH_FIDELITY, EPiDigits((1, 0))),
        GeneralEstimator(EstimatorMap(0, 1, 0.5), GeneralProjective(0.3, 0.1)),
    ],
)
def test_description_round_trip(strategy):
    assert strategy_from_description(strategy.describe()) == strategy
