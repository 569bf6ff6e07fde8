"""Tests for the privatization channel and its privacy audit."""

import math

import numpy as np
import pytest

from app.models.schemas import Distribution
from app.services.measurement import generate_biased, generate_hadamard, generate_rademacher
from app.services.mechanism import (
    Mechanism,
    audit_privacy,
    bits_per_report,
    channel_matrix,
    channel_prob,
    output_distribution,
    privatize,
    privatize_many,
)

LOG3 = math.log(3.0)


@pytest.fixture
def half_column(sign_matrix) -> Mechanism:
    """m=4, a single column with n_x = 2 and e^eps = 3."""
    return Mechanism(sign_matrix([[1], [1], [-1], [-1]]), LOG3)


class TestChannel:
    def test_inside_probability(self, half_column):
        assert channel_prob(half_column, 0, 0) == pytest.approx(3 / 8)

    def test_outside_probability(self, half_column):
        assert channel_prob(half_column, 3, 0) == pytest.approx(1 / 8)

    def test_rows_sum_to_one(self):
        mech = Mechanism(generate_rademacher(40, 25, seed=1), 0.5)
        q = channel_matrix(mech)
        assert q.shape == (40, 25)
        np.testing.assert_allclose(q.sum(axis=0), 1.0, atol=1e-12)
        totals = mech.matrix.plus_counts * mech.exp_epsilon * mech.d + (40 - mech.matrix.plus_counts) * mech.d
        np.testing.assert_allclose(totals, 1.0, atol=1e-12)

    def test_index_errors(self, half_column):
        with pytest.raises(IndexError):
            channel_prob(half_column, 4, 0)
        with pytest.raises(IndexError):
            channel_prob(half_column, 0, 1)
        with pytest.raises(IndexError):
            privatize(half_column, 5, seed=0)

    @pytest.mark.parametrize("seed", range(20))
    def test_output_distribution_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        for mech in (
            Mechanism(generate_rademacher(8, 16, seed=seed), 0.5),
            Mechanism(generate_biased(8, 16, 1.5, seed=seed), 1.5),
        ):
            p = Distribution(probs=rng.dirichlet(np.ones(16)))
            brute = np.array([
                sum(channel_prob(mech, y, x) * p.probs[x] for x in range(16)) for y in range(8)
            ])
            np.testing.assert_allclose(output_distribution(mech, p), brute, atol=1e-10)
            np.testing.assert_allclose(channel_matrix(mech) @ p.probs, brute, atol=1e-10)

    def test_rejects_epsilon_above_log_m_in_medium_regime(self):
        matrix = generate_biased(4, 3, 1.2, seed=0)
        with pytest.raises(ValueError):
            Mechanism(matrix, 2.0)

    def test_rejects_epsilon_above_log_m(self):
        with pytest.raises(ValueError, match="exceeds ln m"):
            Mechanism(generate_rademacher(4, 3, seed=0), 1.5)

    def test_hand_built_high_privacy_matrix_may_lift_range(self, two_by_two_mechanism):
        assert two_by_two_mechanism.exp_epsilon == pytest.approx(3.0)
        mech = Mechanism(generate_rademacher(4, 3, seed=0), 1.5, enforce_range=False)
        assert mech.epsilon == 1.5

    def test_medium_regime_always_enforces_range(self):
        with pytest.raises(ValueError):
            Mechanism(generate_biased(4, 3, 1.2, seed=0), 2.0, enforce_range=False)

    def test_single_output_takes_any_epsilon(self, sign_matrix):
        assert Mechanism(sign_matrix([[1, -1]]), 5.0).m == 1

    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(ValueError):
            Mechanism(generate_rademacher(4, 3, seed=0), 0.0)


class TestPrivatize:
    def test_inside_mass(self, half_column):
        reports = privatize_many(half_column, np.zeros(1_000_000, dtype=np.int64), seed=12)
        inside = np.isin(reports, [0, 1]).mean()
        assert abs(inside - 0.75) <= 0.0013

    def test_single_output(self, sign_matrix):
        mech = Mechanism(sign_matrix([[1, -1]]), 0.5)
        assert privatize(mech, 0, seed=1) == 0
        assert privatize(mech, 1, seed=2) == 0

    def test_deterministic(self):
        mech = Mechanism(generate_rademacher(64, 30, seed=4), 0.5)
        assert privatize(mech, 17, seed=99) == privatize(mech, 17, seed=99)
        xs = np.arange(30).repeat(10)
        np.testing.assert_array_equal(privatize_many(mech, xs, seed=5), privatize_many(mech, xs, seed=5))

    def test_batch_matches_channel(self):
        mech = Mechanism(generate_rademacher(6, 3, seed=9), 0.7)
        reports = privatize_many(mech, np.full(400_000, 2), seed=3)
        observed = np.bincount(reports, minlength=6) / reports.size
        np.testing.assert_allclose(observed, channel_matrix(mech)[:, 2], atol=0.004)

    def test_bits_per_report(self):
        assert bits_per_report(1) == 0
        assert bits_per_report(2) == 1
        assert bits_per_report(300) == 9
        assert bits_per_report(512) == 9


class TestAudit:
    def test_balanced_columns_give_exact_epsilon(self):
        mech = Mechanism(generate_hadamard(20), 0.5)
        audit = audit_privacy(mech)
        assert audit.max_ratio == pytest.approx(math.exp(0.5), abs=1e-12)
        assert audit.epsilon_effective == pytest.approx(0.5, abs=1e-12)

    def test_closed_form_ratio(self, sign_matrix):
        mech = Mechanism(sign_matrix([[1, 1], [-1, 1], [-1, 1], [-1, -1]]), LOG3)
        audit = audit_privacy(mech)
        assert audit.max_ratio == pytest.approx(5.0)
        assert audit.epsilon_effective == pytest.approx(math.log(5))

    @pytest.mark.parametrize("seed", range(5))
    def test_closed_form_dominates_pairwise_ratios(self, seed):
        mech = Mechanism(generate_rademacher(8, 6, seed=seed), 0.5)
        q = channel_matrix(mech)
        brute = max(np.max(q[:, a] / q[:, b]) for a in range(6) for b in range(6))
        assert audit_privacy(mech).max_ratio >= brute - 1e-12

    def test_bound_holds_for_random_matrices(self):
        for seed in range(100):
            audit = audit_privacy(Mechanism(generate_rademacher(600, 100, seed=seed), 0.5))
            assert audit.within_bound, f"seed {seed}: {audit}"

    def test_strict_mode_meets_requested_epsilon(self):
        mech = Mechanism(generate_rademacher(600, 100, seed=2), 0.5, strict=True)
        assert mech.epsilon == pytest.approx(0.5 - 2 * mech.balance.beta_achieved)
        assert audit_privacy(mech).epsilon_effective <= 0.5 + 1e-12

    def test_strict_mode_without_budget(self, sign_matrix):
        with pytest.raises(ValueError, match="no budget"):
            Mechanism(sign_matrix([[1, 1], [1, -1], [1, 1], [-1, -1]]), 0.5, strict=True)
