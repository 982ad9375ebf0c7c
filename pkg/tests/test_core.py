import math

import numpy as np
import pytest

from lipagg import (
    Alphabet,
    LatentModel,
    Mechanism,
    Prior,
    PriorSet,
    optimal_lip,
    output_marginal,
    posterior,
)
from conftest import bayes_posterior


class TestAlphabet:
    def test_needs_two_symbols(self):
        with pytest.raises(ValueError):
            Alphabet(["a"], [1.0])

    def test_labels_distinct(self):
        with pytest.raises(ValueError):
            Alphabet(["a", "a"], [0.0, 1.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            Alphabet(["a", "b"], [0.0, 1.0, 2.0])

    def test_numeric_labels_become_values(self):
        alpha = Alphabet(["0", "2", "5"])
        assert alpha.values.tolist() == [0.0, 2.0, 5.0]

    def test_non_numeric_labels_get_indices(self):
        alpha = Alphabet(["low", "high"])
        assert alpha.values.tolist() == [0.0, 1.0]


class TestPrior:
    def test_rejects_large_sum_deviation(self):
        with pytest.raises(ValueError):
            Prior([0.5, 0.6])

    def test_renormalizes_tiny_deviation(self):
        p = Prior([0.5, 0.5 + 5e-10])
        assert p.probs.sum() == pytest.approx(1.0, abs=0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            Prior([-0.1, 1.1])

    def test_zero_entries_allowed(self):
        p = Prior([0.0, 0.4, 0.6])
        assert p.support.tolist() == [1, 2]

    def test_immutable(self):
        p = Prior([0.3, 0.7])
        with pytest.raises(ValueError):
            p.probs[0] = 0.5


class TestMechanism:
    def test_rejects_bad_row_sum(self):
        with pytest.raises(ValueError):
            Mechanism([[0.5, 0.5], [0.5, 0.5 + 2e-9]])

    def test_accepts_tolerable_row_sum(self):
        Mechanism([[0.5, 0.5], [0.5, 0.5 + 5e-10]])

    def test_rejects_negative_entry(self):
        with pytest.raises(ValueError):
            Mechanism([[1.1, -0.1], [0.5, 0.5]])

    def test_rectangular_allowed(self):
        m = Mechanism([[0.2, 0.3, 0.5], [0.5, 0.25, 0.25]])
        assert (m.d_in, m.d_out) == (2, 3)


class TestOutputMarginal:
    def test_identity_channel(self):
        p = Prior([0.5, 0.5])
        assert output_marginal(p, Mechanism.identity(2)).probs.tolist() == [0.5, 0.5]

    def test_lip_channel_preserves_prior(self):
        p = Prior([0.1, 0.2, 0.7])
        lam = output_marginal(p, optimal_lip(p, math.log(2)))
        np.testing.assert_allclose(lam.probs, p.probs, atol=1e-15)

    def test_constant_row_channel(self):
        p = Prior([0.3, 0.7])
        mech = Mechanism([[0.6, 0.4], [0.6, 0.4]])
        np.testing.assert_allclose(output_marginal(p, mech).probs, [0.6, 0.4])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            output_marginal(Prior([0.5, 0.5]), Mechanism.identity(3))


class TestPosterior:
    def test_identity_is_point_mass(self):
        post = posterior(Prior([0.5, 0.5]), Mechanism.identity(2), 0)
        assert post.probs.tolist() == [1.0, 0.0]

    def test_independent_channel_returns_prior(self):
        p = Prior([0.2, 0.8])
        mech = Mechanism([[0.2, 0.8], [0.2, 0.8]])
        for y in range(2):
            np.testing.assert_allclose(posterior(p, mech, y).probs, p.probs)

    def test_against_enumeration(self):
        p = Prior([0.2, 0.8])
        mech = optimal_lip(p, math.log(2))
        np.testing.assert_allclose(
            posterior(p, mech, 1).probs, bayes_posterior(p, mech, 1), atol=1e-14
        )

    def test_unreachable_output(self):
        p = Prior([1.0, 0.0])
        with pytest.raises(ValueError, match="unreachable"):
            posterior(p, Mechanism.identity(2), 1)

    def test_law_of_total_probability(self, rng):
        for _ in range(25):
            d = int(rng.integers(2, 5))
            p = Prior(rng.dirichlet(np.ones(d)))
            mech = Mechanism(rng.dirichlet(np.ones(d), size=d))
            lam = output_marginal(p, mech)
            recon = sum(
                lam.probs[y] * posterior(p, mech, y).probs for y in range(d)
            )
            np.testing.assert_allclose(recon, p.probs, atol=1e-9)


class TestLatentModel:
    def test_induced_prior(self):
        lat = LatentModel([0.5, 0.5], [[0.8, 0.2], [0.2, 0.8]], Alphabet(["0", "1"]))
        np.testing.assert_allclose(lat.x_prior.probs, [0.5, 0.5])

    def test_row_sum_validation(self):
        with pytest.raises(ValueError):
            LatentModel([0.5, 0.5], [[0.8, 0.1], [0.2, 0.8]], Alphabet(["0", "1"]))

    def test_identity_coupling(self):
        p = Prior([0.3, 0.7])
        lat = LatentModel.identity_coupling(p, Alphabet(["0", "1"]))
        np.testing.assert_allclose(lat.cond, np.eye(2))
        np.testing.assert_allclose(lat.x_prior.probs, p.probs)


class TestPriorSet:
    def test_box_feasibility_probe(self):
        with pytest.raises(ValueError):
            PriorSet.from_box([0.6, 0.6], [0.7, 0.7])  # sums exceed 1
        with pytest.raises(ValueError):
            PriorSet.from_box([0.0, 0.0], [0.3, 0.3])  # sums below 1

    def test_box_bounds_ordering(self):
        with pytest.raises(ValueError):
            PriorSet.from_box([0.5, 0.4], [0.4, 0.6])

    def test_binary_box_vertices(self):
        ps = PriorSet.from_box([0.0, 0.5], [0.5, 1.0])
        verts = sorted(tuple(np.round(v.probs, 9)) for v in ps.vertices())
        assert verts == [(0.0, 1.0), (0.5, 0.5)]

    def test_interior_member_in_box(self):
        ps = PriorSet.from_box([0.0, 0.5], [0.5, 1.0])
        member = ps.interior_member()
        assert np.all(member.probs >= ps.lows - 1e-12)
        assert np.all(member.probs <= ps.highs + 1e-12)

    def test_list_set(self):
        ps = PriorSet.from_list([Prior([0.4, 0.6]), Prior([0.6, 0.4])])
        assert len(ps.vertices()) == 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            PriorSet()
