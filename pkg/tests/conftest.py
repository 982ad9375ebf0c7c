"""Shared helpers: independent brute-force oracles and in-regime samplers."""

from __future__ import annotations

import math

import numpy as np
import pytest

from lipagg import Alphabet, Mechanism, Prior


def bayes_posterior(prior: Prior, mech: Mechanism, y: int) -> np.ndarray:
    """Posterior by direct enumeration of the joint table (test oracle)."""
    joint = prior.probs[:, None] * mech.matrix
    return joint[:, y] / joint[:, y].sum()


def variance_by_enumeration(prior: Prior, mech: Mechanism, values) -> float:
    """Var of the conditional-mean estimator, summing over the joint table."""
    values = np.asarray(values, dtype=float)
    joint = prior.probs[:, None] * mech.matrix
    lam = joint.sum(axis=0)
    total = 0.0
    mean = 0.0
    for y in range(mech.d_out):
        if lam[y] <= 1e-15:
            continue
        xhat = float(values @ joint[:, y]) / lam[y]
        total += lam[y] * xhat * xhat
        mean += lam[y] * xhat
    return total - mean * mean


def in_regime_prior(rng: np.random.Generator, d: int, eps: float) -> Prior:
    """Random prior with every entry above the closed form's validity
    threshold 1/(e^eps + 1), with margin."""
    m = 1.0 / (math.exp(eps) + 1.0) + 0.02
    if d * m >= 1.0:
        raise ValueError(f"no in-regime prior exists for d={d}, eps={eps}")
    return Prior(m + (1.0 - d * m) * rng.dirichlet(np.ones(d)))


def unit_alphabet(d: int) -> Alphabet:
    """Labels 0..d-1 with values spread over [0, 1]."""
    return Alphabet([str(i) for i in range(d)], np.linspace(0.0, 1.0, d))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
