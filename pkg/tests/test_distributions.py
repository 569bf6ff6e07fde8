"""Tests for distribution generators, sparsity utilities, sampling and error metrics."""

import math

import numpy as np
import pytest

from app.models.schemas import Distribution
from app.services.distributions import (
    approx_sparsity_slack,
    empirical_frequencies,
    error_l1,
    error_l2,
    load_distribution,
    make_geometric,
    make_sparse_uniform,
    sample,
    smallest_sparsity,
    sparsity_profile,
    top_s,
)


class TestDistributionModel:
    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError):
            Distribution(probs=[1.2, -0.2])

    def test_rejects_bad_total(self):
        with pytest.raises(ValueError):
            Distribution(probs=[0.5, 0.4])

    def test_probs_are_read_only(self):
        p = Distribution(probs=[0.5, 0.5])
        with pytest.raises(ValueError):
            p.probs[0] = 1.0


class TestGeometric:
    def test_two_terms_normalized(self):
        np.testing.assert_allclose(make_geometric(2, 0.5).probs, [2 / 3, 1 / 3])

    def test_single_point(self):
        np.testing.assert_allclose(make_geometric(1, 0.9).probs, [1.0])

    @pytest.mark.parametrize("lam", [0.0, 1.0, -0.1, 1.5])
    def test_rejects_lam_outside_unit_interval(self, lam):
        with pytest.raises(ValueError):
            make_geometric(10, lam)

    def test_geo_08_is_approximately_sparse(self):
        p = make_geometric(10_000, 0.8)
        s = smallest_sparsity(p, 0.1)
        # tail mass after s terms is 0.2^s
        assert s == 2
        assert approx_sparsity_slack(p, s) <= 0.1
        assert approx_sparsity_slack(p, s - 1) > 0.1


class TestSparseUniform:
    def test_full_support_is_uniform(self):
        np.testing.assert_allclose(make_sparse_uniform(4, 4, seed=123).probs, [0.25] * 4)

    def test_single_support_point(self):
        probs = make_sparse_uniform(10, 1, seed=7).probs
        assert np.count_nonzero(probs) == 1
        assert probs.max() == 1.0

    def test_unif_10_over_large_universe(self):
        probs = make_sparse_uniform(10_000, 10, seed=0).probs
        assert np.count_nonzero(probs) == 10
        np.testing.assert_allclose(probs[probs > 0], 0.1)

    def test_support_depends_only_on_seed(self):
        a = make_sparse_uniform(500, 10, seed=99).probs
        b = make_sparse_uniform(500, 10, seed=99).probs
        c = make_sparse_uniform(500, 10, seed=100).probs
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_rejects_s_above_k(self):
        with pytest.raises(ValueError):
            make_sparse_uniform(5, 6, seed=0)


class TestSparsity:
    def test_top_s_keeps_everything_when_s_covers_support(self):
        np.testing.assert_allclose(top_s([0.5, 0.3, 0.2], 3), [0.5, 0.3, 0.2])

    def test_top_s_keeps_largest(self):
        np.testing.assert_allclose(top_s([0.5, 0.3, 0.2], 1), [0.5, 0.0, 0.0])

    def test_top_s_breaks_ties_by_lowest_index(self):
        np.testing.assert_allclose(top_s([0.4, 0.4, 0.2], 1), [0.4, 0.0, 0.0])
        np.testing.assert_allclose(top_s([0.2, 0.4, 0.4], 1), [0.0, 0.4, 0.0])

    def test_slack_of_exactly_sparse_vector_is_zero(self):
        assert approx_sparsity_slack([0.0, 0.7, 0.0, 0.3], 2) == 0.0

    @pytest.mark.parametrize("s, expected", [(1, 0.5), (2, 0.2)])
    def test_slack_is_dropped_mass(self, s, expected):
        assert approx_sparsity_slack([0.5, 0.3, 0.2], s) == pytest.approx(expected)

    def test_slack_is_nonincreasing_and_vanishes_past_support(self):
        p = np.zeros(20)
        p[[1, 4, 7, 9, 15, 18]] = [0.35, 0.25, 0.15, 0.12, 0.08, 0.05]
        slacks = [approx_sparsity_slack(p, s) for s in range(1, 21)]
        assert all(later <= earlier for earlier, later in zip(slacks, slacks[1:]))
        assert slacks[5:] == [0.0] * 15

    def test_sparsity_profile(self):
        profile = sparsity_profile([0.5, 0.3, 0.2], 2)
        assert (profile.k, profile.s) == (3, 2)
        assert profile.lam == pytest.approx(0.2)


class TestSampling:
    def test_point_mass(self):
        p = Distribution(probs=[0, 0, 0, 1, 0])
        assert sample(p, 5, seed=1).tolist() == [3, 3, 3, 3, 3]

    def test_uniform_over_two(self):
        p = Distribution(probs=[0.5, 0.5])
        draws = sample(p, 1_000_000, seed=2024)
        assert abs(empirical_frequencies(draws, 2)[0] - 0.5) <= 0.002

    def test_deterministic(self):
        p = make_geometric(50, 0.3)
        np.testing.assert_array_equal(sample(p, 1000, seed=5), sample(p, 1000, seed=5))

    @pytest.mark.slow
    def test_frequencies_concentrate_within_three_sigma(self):
        p = make_geometric(200, 0.02)
        n = 1_000_000
        bound = 3 * np.sqrt(p.probs / n)
        within = [
            np.abs(empirical_frequencies(sample(p, n, seed=seed), p.k) - p.probs) <= bound
            for seed in range(10)
        ]
        assert np.mean(within) >= 0.99

    def test_never_draws_zero_probability_index(self):
        p = Distribution(probs=[0.5, 0.0, 0.5, 0.0])
        draws = sample(p, 100_000, seed=3)
        assert set(np.unique(draws).tolist()) == {0, 2}


class TestErrors:
    def test_identity(self):
        p = make_geometric(20, 0.4)
        assert error_l1(p, p) == 0.0
        assert error_l2(p, p) == 0.0

    def test_opposite_point_masses(self):
        assert error_l1([1, 0], [0, 1]) == pytest.approx(2.0)
        assert error_l2([1, 0], [0, 1]) == pytest.approx(math.sqrt(2))

    def test_l1_example(self):
        assert error_l1([0.6, 0.4], [0.5, 0.5]) == pytest.approx(0.2)

    @pytest.mark.parametrize("seed", range(8))
    def test_l1_bounded_by_root_k_times_l2(self, seed):
        rng = np.random.default_rng(seed)
        k = 1 + 7 * seed
        p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        assert error_l1(p, q) <= math.sqrt(k) * error_l2(p, q) + 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            error_l1([0.5, 0.5], [1.0])


class TestLoadDistribution:
    def test_reads_and_renormalizes(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("# weights\n0.5\n0.25\n0.2500001\n")
        p = load_distribution(path)
        assert p.k == 3
        assert p.probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_rejects_bad_total(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("0.5\n0.4\n")
        with pytest.raises(ValueError, match="sums to"):
            load_distribution(path)
