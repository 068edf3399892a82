import numpy as np
import pytest

from chansim.core_prob import (
    Channel,
    Distribution,
    JointDistribution,
    binary_entropy,
    channel_compose,
    conditional_entropy,
    entropy,
    entropy_continuity_bound,
    mutual_information,
    output_marginal,
    rate_lower_bound_defect,
    transpose_channel,
    tv_distance,
)
from chansim.errors import InvalidInputError

SEED = 20260819


def random_distribution(rng, a):
    return Distribution.from_probs(rng.dirichlet(np.ones(a)))


def random_channel(rng, a, b):
    return Channel.from_rows(rng.dirichlet(np.ones(b), size=a))


class TestConstruction:
    def test_renormalizes_small_deviation(self):
        p = Distribution.from_probs([0.5 + 2e-10, 0.5])
        assert abs(p.probs.sum() - 1.0) < 1e-15

    def test_rejects_large_deviation(self):
        with pytest.raises(InvalidInputError):
            Distribution.from_probs([0.5, 0.6])

    def test_rejects_negative_entry(self):
        with pytest.raises(InvalidInputError):
            Distribution.from_probs([1.1, -0.1])

    def test_clips_tiny_negative_drift(self):
        p = Distribution.from_probs([1.0 + 5e-13, -5e-13])
        assert p.probs[1] == 0.0

    def test_channel_shape_checked(self):
        with pytest.raises(InvalidInputError):
            Channel(2, 3, np.ones((2, 2)) / 2)

    def test_probs_read_only(self):
        p = Distribution.from_probs([0.5, 0.5])
        with pytest.raises(ValueError):
            p.probs[0] = 0.9

    def test_serialization_round_trip(self):
        rng = np.random.default_rng(SEED)
        p = random_distribution(rng, 5)
        w = random_channel(rng, 3, 4)
        assert np.allclose(Distribution.from_json_dict(p.to_json_dict()).probs, p.probs)
        assert np.allclose(Channel.from_json_dict(w.to_json_dict()).rows, w.rows)
        j = JointDistribution.from_source_and_channel(random_distribution(rng, 3), w)
        assert np.allclose(JointDistribution.from_json_dict(j.to_json_dict()).probs, j.probs)


class TestEntropy:
    def test_uniform(self):
        assert entropy(Distribution.uniform(8)) == pytest.approx(3.0, abs=1e-12)

    def test_point_mass(self):
        assert entropy(Distribution.from_probs([1.0, 0.0, 0.0])) == 0.0

    def test_binary_entropy_quarter(self):
        assert binary_entropy(0.25) == pytest.approx(0.8112781244591328, abs=1e-12)

    def test_zero_tolerance_entries_ignored(self):
        assert entropy(np.array([1.0, 1e-13])) == 0.0

    def test_bsc_mutual_information(self):
        p = Distribution.uniform(2)
        w = Channel.from_rows([[0.75, 0.25], [0.25, 0.75]])
        assert mutual_information(p, w) == pytest.approx(1 - binary_entropy(0.25), abs=1e-12)


class TestIdentities:
    """Information identities on random instances, alphabets 2..6."""

    def test_battery(self):
        rng = np.random.default_rng(SEED)
        for _ in range(1000):
            a = int(rng.integers(2, 7))
            b = int(rng.integers(2, 7))
            p = random_distribution(rng, a)
            w = random_channel(rng, a, b)
            joint = JointDistribution.from_source_and_channel(p, w)
            q, v = transpose_channel(p, w)

            hj = entropy(joint)
            assert hj == pytest.approx(entropy(p) + conditional_entropy(p, w), abs=1e-9)
            assert hj == pytest.approx(entropy(q) + conditional_entropy(q, v), abs=1e-9)

            i_fwd = mutual_information(p, w)
            i_bwd = mutual_information(q, v)
            assert i_fwd == pytest.approx(i_bwd, abs=1e-9)
            assert i_fwd == pytest.approx(entropy(p) + entropy(q) - hj, abs=1e-9)
            assert -1e-12 <= i_fwd <= min(entropy(p), entropy(q)) + 1e-9

            assert np.allclose(q.probs, output_marginal(p, w).probs)
            assert np.allclose(joint.x_marginal().probs, p.probs)

    def test_transpose_round_trip_reconstructs_joint(self):
        rng = np.random.default_rng(SEED + 1)
        for _ in range(100):
            p = random_distribution(rng, 4)
            w = random_channel(rng, 4, 3)
            q, v = transpose_channel(p, w)
            back = q.probs[:, None] * v.rows
            assert np.allclose(back.T, p.probs[:, None] * w.rows, atol=1e-12)

    def test_transpose_dead_output_uniform_and_flagged(self):
        p = Distribution.from_probs([0.5, 0.5])
        w = Channel.from_rows([[1.0, 0.0], [1.0, 0.0]])
        q, v, dead = transpose_channel(p, w, with_unreachable=True)
        assert dead == (1,)
        assert np.allclose(v.rows[1], [0.5, 0.5])
        assert q.probs[1] == 0.0


class TestTVDistance:
    def test_triangle_inequality(self):
        rng = np.random.default_rng(SEED + 2)
        for _ in range(2000):
            a = int(rng.integers(2, 9))
            p, q, r = (random_distribution(rng, a) for _ in range(3))
            assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12

    def test_range_and_symmetry(self):
        rng = np.random.default_rng(SEED + 3)
        for _ in range(500):
            a = int(rng.integers(2, 9))
            p, q = random_distribution(rng, a), random_distribution(rng, a)
            d = tv_distance(p, q)
            assert 0.0 <= d <= 1.0
            assert d == pytest.approx(tv_distance(q, p), abs=1e-15)

    def test_disjoint_supports(self):
        p = Distribution.from_probs([1.0, 0.0])
        q = Distribution.from_probs([0.0, 1.0])
        assert tv_distance(p, q) == 1.0


class TestContinuityBound:
    def test_dominates_entropy_difference(self):
        # 10,000 random pairs with sum|p-q| <= 1/2, alphabets 2..8
        rng = np.random.default_rng(SEED + 4)
        checked = 0
        while checked < 10000:
            a = int(rng.integers(2, 9))
            p = random_distribution(rng, a)
            t = rng.uniform(0, 0.25)
            q = Distribution.from_probs((1 - t) * p.probs + t * rng.dirichlet(np.ones(a)))
            lam = float(np.abs(p.probs - q.probs).sum())
            if lam > 0.5:
                continue
            bound = entropy_continuity_bound(p, q)
            assert abs(entropy(p) - entropy(q)) <= bound + 1e-9
            checked += 1

    def test_equal_inputs_give_zero(self):
        p = Distribution.uniform(4)
        assert entropy_continuity_bound(p, p) == 0.0

    def test_rejects_distant_pair(self):
        p = Distribution.from_probs([1.0, 0.0])
        q = Distribution.from_probs([0.0, 1.0])
        with pytest.raises(InvalidInputError):
            entropy_continuity_bound(p, q)


class TestCompose:
    def test_matches_matrix_product_and_is_stochastic(self):
        rng = np.random.default_rng(SEED + 5)
        for _ in range(200):
            e = random_channel(rng, 3, 5)
            d = random_channel(rng, 5, 4)
            c = channel_compose(e, d)
            assert np.allclose(c.rows, e.rows @ d.rows)
            assert np.allclose(c.rows.sum(axis=1), 1.0)

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(SEED + 6)
        with pytest.raises(InvalidInputError):
            channel_compose(random_channel(rng, 2, 3), random_channel(rng, 4, 2))


class TestRateDefect:
    def test_zero_at_zero(self):
        assert rate_lower_bound_defect(0.0, 4, 4) == 0.0

    def test_formula_value(self):
        lam = 0.1
        expect = 0.1 * (2 + 2 * 2) + 2 * binary_entropy(0.1)
        assert rate_lower_bound_defect(lam, 4, 4) == pytest.approx(expect, abs=1e-12)

    def test_monotone_on_valid_range(self):
        vals = [rate_lower_bound_defect(l, 3, 3) for l in np.linspace(0, 0.5, 21)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidInputError):
            rate_lower_bound_defect(0.6, 2, 2)
