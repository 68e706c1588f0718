from __future__ import annotations

import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from ecr.channel import (
    HIGH_FIDELITY,
    AlreadyConsumed,
    Channel,
    DuplicateRound,
    GeneralProjective,
    MeasurementModel,
    Outcome,
    general_probs,
    measurement_from_description,
    outcome_probs,
    povm_extended_probs,
)


def test_outcome_probs_examples():
    p1, p0, pn = outcome_probs(1.0, MeasurementModel())
    assert (p1, p0, pn) == pytest.approx((1.0, 0.0, 0.0))
    p1, p0, pn = outcome_probs(0.0, HIGH_FIDELITY)
    assert (p1, p0, pn) == pytest.approx((0.09, 0.61, 0.30))


@given(
    st.floats(0, 1),
    st.floats(0, 0.5),
    st.floats(0, 2, exclude_max=True),
    st.floats(0, 2, exclude_max=True),
)
def test_probabilities_normalized(a, b, phi, theta):
    if a + 2 * b > 1:
        with pytest.raises(ValueError):
            MeasurementModel(a, b, phi)
        return
    probs = outcome_probs(theta, MeasurementModel(a, b, phi))
    assert min(probs) >= 0
    assert sum(probs) == pytest.approx(1.0, abs=1e-12)


def test_general_family():
    assert general_probs(0.0, GeneralProjective(0.5, 0.0)) == pytest.approx((0.0, 1.0))
    assert general_probs(0.3, GeneralProjective(0.0, 0.0)) == pytest.approx((0.5, 0.5))
    with pytest.raises(ValueError):
        GeneralProjective(0.6)


def test_povm_extension_keeps_mass():
    probs = povm_extended_probs(0.4, HIGH_FIDELITY, 3)
    assert probs.size == 5
    assert probs.sum() == pytest.approx(1.0)
    assert probs[2] == probs[3] == probs[4]


def test_descriptions_round_trip():
    for m in (HIGH_FIDELITY, GeneralProjective(0.3, 1.2)):
        assert measurement_from_description(m.describe()) == m


class TestSingleUse:
    def test_second_measure_raises(self):
        ch = Channel(0)
        h = ch.prepare(0.5, 0)
        ch.measure(h, HIGH_FIDELITY)
        with pytest.raises(AlreadyConsumed):
            ch.measure(h, HIGH_FIDELITY)
        with pytest.raises(AlreadyConsumed):
            ch.measure(h, GeneralProjective(0.5))

    @given(st.lists(st.sampled_from(["ideal", "projective"]), min_size=2, max_size=6))
    def test_any_repeat_raises(self, kinds):
        ch = Channel(1)
        h = ch.prepare(1.3, "r")
        models = {"ideal": MeasurementModel(), "projective": GeneralProjective(0.4)}
        ch.measure(h, models[kinds[0]])
        for kind in kinds[1:]:
            with pytest.raises(AlreadyConsumed):
                ch.measure(h, models[kind])

    def test_duplicate_round_id(self):
        ch = Channel(0)
        ch.prepare(0.0, 7)
        with pytest.raises(DuplicateRound):
            ch.prepare(1.0, 7)

    def test_foreign_handle_rejected(self):
        a, b = Channel(0), Channel(0)
        h = a.prepare(0.0, 0)
        b.prepare(0.0, 0)
        with pytest.raises(KeyError):
            b.measure(h, MeasurementModel())

    def test_concurrent_measures_succeed_once(self):
        for trial in range(50):
            ch = Channel(trial)
            h = ch.prepare(0.7, 0)
            barrier = threading.Barrier(8)
            results = []

            def attempt():
                barrier.wait()
                try:
                    results.append(ch.measure(h, MeasurementModel()))
                except AlreadyConsumed:
                    results.append("refused")

            threads = [threading.Thread(target=attempt) for _ in range(8)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert sum(r != "refused" for r in results) == 1

    def test_handle_exposes_no_phase(self):
        h = Channel(0).prepare(0.123456, 0)
        assert "0.123456" not in repr(h)
        assert not any("theta" in name or "phase" in name for name in dir(h))


class TestBornRule:
    @pytest.mark.parametrize("theta", [0.0, 0.4, 1.0, 1.7])
    @pytest.mark.parametrize("model", [MeasurementModel(), HIGH_FIDELITY, MeasurementModel(0.01, 0.04, 0.3)])
    def test_chi_square(self, theta, model):
        ch = Channel(np.random.default_rng(12345))
        n = 20_000
        counts = {o: 0 for o in Outcome}
        for i in range(n):
            counts[ch.measure(ch.prepare(theta, i), model)] += 1
        p1, p0, pn = outcome_probs(theta, model)
        expected = np.array([p1, p0, pn]) * n
        observed = np.array([counts[Outcome.ONE], counts[Outcome.ZERO], counts[Outcome.NULL]])
        keep = expected > 0
        assert observed[~keep].sum() == 0
        if keep.sum() > 1:
            assert stats.chisquare(observed[keep], expected[keep]).pvalue > 1e-4

    @pytest.mark.slow
    def test_chi_square_million(self):
        rng = np.random.default_rng(99)
        model = HIGH_FIDELITY
        thetas = 2.0 * np.arange(6) / 6
        n = 1_000_000
        ch = Channel(rng)
        idx = np.arange(n) % 6
        observed = np.zeros((6, 3))
        col = {Outcome.ONE: 0, Outcome.ZERO: 1, Outcome.NULL: 2}
        for i in range(n):
            observed[idx[i], col[ch.measure(ch.prepare(thetas[idx[i]], i), model)]] += 1
        for k, theta in enumerate(thetas):
            expected = np.array(outcome_probs(theta, model)) * observed[k].sum()
            assert stats.chisquare(observed[k], expected).pvalue > 1e-4

    def test_seeded_reproducible(self):
        def run(seed):
            ch = Channel(seed)
            return [ch.measure(ch.prepare(0.5, i), HIGH_FIDELITY) for i in range(200)]

        assert run(3) == run(3)
        assert run(3) != run(4)

    def test_wire_values(self):
        assert [o.wire for o in Outcome] == [1, 0, None]
        assert Outcome.from_wire(None) is Outcome.NULL
