import json
import math

import numpy as np
import pytest

from lipagg import (
    Alphabet,
    LatentModel,
    Mechanism,
    Prior,
    audit_channel,
    d_infinity,
    di_epsilon,
    latent_lip_epsilon,
    ldp_epsilon,
    lip_epsilon,
    max_leakage,
    mutual_information,
    optimal_latent_binary,
    optimal_ldp,
    optimal_lip,
)
from conftest import in_regime_prior, unit_alphabet

LN2 = math.log(2)
HALF = Prior([0.5, 0.5])


def random_pair(rng, d_lo=2, d_hi=5):
    d = int(rng.integers(d_lo, d_hi))
    prior = Prior(rng.dirichlet(np.ones(d)))
    mech = Mechanism(rng.dirichlet(np.ones(d), size=d))
    return prior, mech


class TestLipEpsilon:
    def test_identity_zero_posterior_is_infinite(self):
        # seeing y rules the other symbol out entirely
        assert lip_epsilon(HALF, Mechanism.identity(2)) == math.inf

    def test_independent_channel_is_zero(self):
        mech = Mechanism([[0.2, 0.8], [0.2, 0.8]])
        assert lip_epsilon(Prior([0.2, 0.8]), mech) == 0.0

    def test_tight_on_optimal_channel_in_regime(self):
        p = Prior([0.3, 0.3, 0.4])
        assert lip_epsilon(p, optimal_lip(p, 1.0)) == pytest.approx(1.0, abs=1e-9)

    def test_output_permutation_invariance(self, rng):
        prior, mech = random_pair(rng)
        perm = rng.permutation(mech.d_out)
        permuted = Mechanism(mech.matrix[:, perm])
        assert lip_epsilon(prior, permuted) == pytest.approx(
            lip_epsilon(prior, mech), abs=1e-12
        )


class TestLdpEpsilon:
    def test_identity_infinite(self):
        assert ldp_epsilon(Mechanism.identity(2)) == math.inf

    def test_tight_on_randomized_response(self):
        assert ldp_epsilon(optimal_ldp(3, 1.0)) == pytest.approx(1.0, abs=1e-9)

    def test_uniform_rows_zero(self):
        assert ldp_epsilon(Mechanism([[0.5, 0.5], [0.5, 0.5]])) == 0.0


class TestLatentLipEpsilon:
    def test_independent_latent_zero(self):
        lat = LatentModel([0.5, 0.5], [[0.3, 0.7], [0.3, 0.7]], unit_alphabet(2))
        assert latent_lip_epsilon(lat, optimal_ldp(2, 1.0)) == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_latent_matches_lip(self, rng):
        eps = 1.0
        p = in_regime_prior(rng, 2, eps)
        lat = LatentModel.identity_coupling(p, unit_alphabet(2))
        mech = optimal_lip(p, eps)
        assert latent_lip_epsilon(lat, mech) == pytest.approx(
            lip_epsilon(p, mech), abs=1e-12
        )

    def test_optimal_latent_channel_within_budget(self):
        lat = LatentModel([0.5, 0.5], [[0.8, 0.2], [0.2, 0.8]], unit_alphabet(2))
        mech = optimal_latent_binary(lat, LN2)
        assert latent_lip_epsilon(lat, mech) <= LN2 + 1e-9


class TestScalarMetrics:
    def test_mutual_information_independent(self):
        mech = Mechanism([[0.2, 0.8], [0.2, 0.8]])
        assert mutual_information(Prior([0.4, 0.6]), mech) == pytest.approx(0.0, abs=1e-12)

    def test_mutual_information_identity_is_entropy(self):
        assert mutual_information(HALF, Mechanism.identity(2)) == pytest.approx(LN2)

    def test_max_leakage_identity(self):
        assert max_leakage(HALF, Mechanism.identity(2)) == pytest.approx(LN2)

    def test_max_leakage_uniform_rows(self):
        assert max_leakage(HALF, Mechanism([[0.5, 0.5], [0.5, 0.5]])) == pytest.approx(0.0)

    def test_di_uniform(self):
        mech = Mechanism([[0.5, 0.5], [0.5, 0.5]])
        assert di_epsilon(HALF, mech) == pytest.approx(0.0, abs=1e-12)

    def test_di_identity_infinite(self):
        assert di_epsilon(HALF, Mechanism.identity(2)) == math.inf

    def test_d_infinity(self):
        assert d_infinity(Prior([1 / 3, 1 / 3, 1 / 3])) == pytest.approx(0.0)
        assert d_infinity(Prior([0.1, 0.2, 0.7])) == pytest.approx(math.log(7))
        assert d_infinity(HALF) == 0.0


class TestCrossNotionBounds:
    def test_relationship_suite(self, rng):
        # the pairwise implication bounds across 200 random full-support
        # channel/prior pairs
        for _ in range(200):
            prior, mech = random_pair(rng)
            lip = lip_epsilon(prior, mech)
            ldp = ldp_epsilon(mech)
            di = di_epsilon(prior, mech)
            dinf = d_infinity(prior)
            assert lip <= ldp + 1e-9
            if math.isfinite(ldp):
                assert ldp <= 2 * lip + 1e-9
            if math.isfinite(di):
                assert di <= 2 * lip + dinf + 1e-9
                assert lip <= di + dinf + 1e-9
            assert mutual_information(prior, mech) <= lip + 1e-9
            assert max_leakage(prior, mech) <= lip + 1e-9


class TestAuditReport:
    def test_json_fields(self):
        report = audit_channel(HALF, Mechanism.identity(2))
        payload = json.loads(report.to_json())
        assert set(payload) == {
            "lip_eps",
            "ldp_eps",
            "di_eps",
            "latent_lip_eps",
            "mutual_info",
            "max_leakage",
            "d_infinity",
        }
        assert payload["lip_eps"] == "inf"
        assert payload["latent_lip_eps"] is None
        assert payload["mutual_info"] == pytest.approx(LN2)

    def test_latent_field_populated(self):
        lat = LatentModel([0.5, 0.5], [[0.8, 0.2], [0.2, 0.8]], unit_alphabet(2))
        report = audit_channel(lat.x_prior, optimal_ldp(2, 1.0), latent=lat)
        assert report.latent_lip_eps is not None
        assert report.latent_lip_eps <= report.lip_eps + 1e-9
