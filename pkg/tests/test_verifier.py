from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ecr.channel import MeasurementModel
from ecr.metric import UNIT, AntipodalMetric, ContinuousUniform, ExplicitPrior, GridPrior
from ecr.prover import DeterministicSequence, ExplicitList, MeasureAndMap
from ecr.verifier import (
    CertificationReport,
    Decision,
    Direction,
    IIDContinuousUniform,
    IIDGrid,
    RoundRecord,
    RoundRobinGrid,
    SessionAborted,
    certify,
    crossing_round,
    null_variance,
    policy_from_description,
    posterior_mse,
    run_session,
    select_theta,
)


def records_from(sq_errs):
    return [RoundRecord(i, 0.0, 0.0, s) for i, s in enumerate(sq_errs)]


class TestSelection:
    def test_round_robin_cycles(self):
        policy = RoundRobinGrid(6)
        got = [select_theta(policy, i) for i in range(8)]
        assert got == pytest.approx([0, 1 / 3, 2 / 3, 1, 4 / 3, 5 / 3, 0, 1 / 3])

    def test_iid_grid_lands_on_grid(self):
        rng = np.random.default_rng(0)
        policy = IIDGrid(10, 0.05)
        pts = {select_theta(policy, i, rng) for i in range(500)}
        assert pts <= set(policy.prior.phases.tolist())
        assert len(pts) == 10

    def test_iid_uniform_range(self):
        rng = np.random.default_rng(0)
        vals = [select_theta(IIDContinuousUniform(), i, rng) for i in range(1000)]
        assert 0.0 <= min(vals) and max(vals) < 2.0

    @pytest.mark.parametrize("policy", [IIDContinuousUniform(), IIDGrid(4, 0.1), RoundRobinGrid(8)])
    def test_description_round_trip(self, policy):
        assert policy_from_description(policy.describe()) == policy


class TestNullStatistics:
    @pytest.mark.parametrize("prior", [ContinuousUniform(), GridPrior(4), GridPrior(6), GridPrior(10, 0.05)])
    @pytest.mark.parametrize("r", [0.0, 0.37, 1.0, 1.5])
    def test_variance_is_one_eighth_for_any_estimate(self, prior, r):
        assert null_variance(prior, estimate=r) == pytest.approx(1 / 8, abs=1e-12)

    def test_variance_scales_with_diameter(self):
        assert null_variance(GridPrior(6), AntipodalMetric(2.0)) == pytest.approx(2.0)

    def test_explicit_prior_uses_worst_estimate(self):
        prior = ExplicitPrior(((0.0, 0.5), (1.0, 0.5)))
        # two antipodal points: d^2 in {s, 1 - s}, variance (1 - 2s)^2 / 4, largest at s = 0
        assert null_variance(prior) == pytest.approx(0.25)
        assert null_variance(prior, estimate=0.5) == pytest.approx(0.0, abs=1e-15)

    def test_posterior_mse_empty(self):
        with pytest.raises(ValueError):
            posterior_mse([])


class TestCertify:
    def test_z_score_formula(self):
        rep = certify(records_from([0.25] * 100))
        assert rep.z == pytest.approx(-0.25 * math.sqrt(800))
        assert rep.decision is Decision.CERTIFIED_RANDOM
        assert rep.direction is Direction.BELOW
        assert rep.entropy_bound_bits == 50

    def test_above_band_certifies(self):
        rep = certify(records_from([1.0] * 20))
        assert rep.direction is Direction.ABOVE and rep.certified

    def test_within_band(self):
        rep = certify(records_from([0.5] * 1000))
        assert rep.z == 0.0
        assert rep.decision is Decision.NOT_CERTIFIED and rep.direction is Direction.WITHIN

    def test_dict_round_trip(self):
        rep = certify(records_from([0.1, 0.9, 0.4]))
        assert CertificationReport.from_dict(rep.to_dict()) == rep

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=200), st.floats(0.5, 8))
    def test_decision_matches_z(self, sq, k):
        rep = certify(records_from(sq), k)
        assert rep.certified == (abs(rep.z) >= k)


class TestCrossing:
    def test_never_leaves(self):
        assert crossing_round([0.5] * 100) is None

    def test_always_outside(self):
        assert crossing_round([0.0] * 100, null_var=1e-6) == 1

    def test_perfect_estimates(self):
        # |z| = 0.5 sqrt(8n) first reaches 5 at n = 13
        assert crossing_round([0.0] * 100) == 13

    def test_last_exit(self):
        # re-enters the band at round 3, leaves for good afterwards
        sq = [0.0, 0.0, 1.0] + [0.0] * 200
        z = [(np.mean(sq[:n]) - 0.5) * math.sqrt(8 * n) for n in range(1, len(sq) + 1)]
        last_inside = max(i for i, v in enumerate(z) if abs(v) < 5)
        assert crossing_round(sq) == last_inside + 2

    def test_ends_inside(self):
        assert crossing_round([0.0] * 100 + [1.0] * 100) is None


class TestSessions:
    def test_seeded_sessions_repeat(self):
        strategy = MeasureAndMap(MeasurementModel(0.52, 0.09))
        a = run_session(IIDContinuousUniform(), strategy, 200, 11)
        b = run_session(IIDContinuousUniform(), strategy, 200, 11)
        c = run_session(IIDContinuousUniform(), strategy, 200, 12)
        assert a == b
        assert a[0] != c[0]

    def test_records_are_scored(self):
        records, _ = run_session(IIDGrid(6), DeterministicSequence(), 50, 3)
        for r in records:
            assert r.sq_err == pytest.approx(UNIT.sq_distance(r.theta, r.estimate), abs=1e-15)

    def test_exhausted_bits_abort_with_partial_records(self):
        with pytest.raises(SessionAborted) as info:
            run_session(RoundRobinGrid(6), DeterministicSequence(ExplicitList((0, 1, 1))), 10, 0)
        assert len(info.value.records) == 3

    def test_ideal_readout_has_quarter_error(self):
        records, rep = run_session(IIDContinuousUniform(), MeasureAndMap(), 20_000, 5)
        assert rep.mse == pytest.approx(0.25, abs=3 * math.sqrt(1 / 8 / 20_000))
        assert rep.certified and rep.direction is Direction.BELOW

    def test_rejects_empty_session(self):
        with pytest.raises(ValueError):
            run_session(RoundRobinGrid(6), DeterministicSequence(), 0, 0)
