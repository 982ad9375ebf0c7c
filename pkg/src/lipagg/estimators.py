"""MMSE estimation from perturbed outputs and analytic error formulas.

The conditional-mean estimator is unbiased, and its mean square error
decomposes as Var(X) - Var(E[X|Y]); both quantities are computed from the
channel and the prior alone, restricted to reachable outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Alphabet, Mechanism, Prior, REACHABLE_TOL, check_epsilon, posterior


@dataclass(frozen=True)
class UserConfig:
    """One contributor: prior, channel, alphabet, and summation weight/offset."""

    prior: Prior
    mech: Mechanism
    alphabet: Alphabet
    c: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.prior.d != self.mech.d_in or self.prior.d != self.alphabet.d:
            raise ValueError("prior, mechanism, and alphabet sizes disagree")
        if not (math.isfinite(self.c) and math.isfinite(self.b)):
            raise ValueError("weight and offset must be finite")


def prior_variance(prior: Prior, alphabet: Alphabet) -> float:
    a = alphabet.values
    mean = float(a @ prior.probs)
    return float(a * a @ prior.probs) - mean * mean


def local_mmse(user: UserConfig, y_index: int) -> float:
    """Conditional mean of the alphabet values given the observed output."""
    post = posterior(user.prior, user.mech, y_index)
    return float(user.alphabet.values @ post.probs)


def estimator_variance(user: UserConfig) -> float:
    """Var(E[X|Y]) of the raw (unweighted) conditional-mean estimator."""
    return _estimator_variance(user.prior.probs, user.mech.matrix, user.alphabet.values)


def _estimator_variance(p: np.ndarray, q: np.ndarray, a: np.ndarray) -> float:
    lam = p @ q
    w = (a * p) @ q
    live = lam > REACHABLE_TOL
    mean = float(a @ p)
    return max(float(np.sum(w[live] ** 2 / lam[live])) - mean * mean, 0.0)


def mse_analytic(user: UserConfig) -> float:
    """Per-user mean square error c^2 (Var(X) - Var(E[X|Y])); the offset
    cancels."""
    gap = prior_variance(user.prior, user.alphabet) - estimator_variance(user)
    return user.c * user.c * max(gap, 0.0)


def binary_mse_lip(p1: float, eps: float) -> float:
    """Closed-form binary error of the prior-aware channel:
    p1 (1-p1) (2 e^-eps - e^-2eps)."""
    if not 0 <= p1 <= 1:
        raise ValueError("p1 must lie in [0, 1]")
    eps = check_epsilon(eps)
    if math.isinf(eps):
        return 0.0
    return p1 * (1.0 - p1) * (2.0 * math.exp(-eps) - math.exp(-2.0 * eps))


def binary_mse_ldp(p1: float, eps: float) -> float:
    """Closed-form binary error of symmetric randomized response paired with
    the prior-aware conditional-mean estimator."""
    if not 0 <= p1 <= 1:
        raise ValueError("p1 must lie in [0, 1]")
    eps = check_epsilon(eps)
    if math.isinf(eps):
        return 0.0
    e = math.exp(eps)
    s = p1 * (1.0 - p1)
    return s - (s * (1.0 - e)) ** 2 / ((1.0 - p1 + p1 * e) * (e - p1 * e + p1))


def prior_free_estimate(y_sum: float, n: int, eps: float, d: int = 2) -> float:
    """Debiased count from the sum of binary randomized-response outputs:
    (y_sum - n p)/(1 - 2p) with flip probability p = 1/(e^eps + 1).

    Only the binary form is defined; for general d only the error formula
    :func:`prior_free_mse` is available.
    """
    if d != 2:
        raise ValueError("prior-free estimator is defined for d = 2 only")
    if not 0 <= y_sum <= n:
        raise ValueError("y_sum must lie in [0, n]")
    eps = check_epsilon(eps)
    p = 0.0 if math.isinf(eps) else 1.0 / (math.exp(eps) + 1.0)
    if abs(1.0 - 2.0 * p) < 1e-15:
        raise ValueError("estimator undefined at eps = 0")
    return (y_sum - n * p) / (1.0 - 2.0 * p)


def prior_free_mse(n: int, d: int, eps: float) -> float:
    """Error of the prior-free count estimator: n (d - 2 + e^eps)/(e^eps-1)^2."""
    if n < 1 or d < 2:
        raise ValueError("need n >= 1 and d >= 2")
    eps = check_epsilon(eps, allow_zero=False)
    if math.isinf(eps):
        return 0.0
    e = math.exp(eps)
    return n * (d - 2.0 + e) / (e - 1.0) ** 2


def _shared_alphabet(users: list[UserConfig]) -> Alphabet:
    if not users:
        raise ValueError("need at least one user")
    alpha = users[0].alphabet
    for u in users[1:]:
        if u.alphabet.labels != alpha.labels:
            raise ValueError("users must share one alphabet")
    return alpha


def histogram_estimate(users: list[UserConfig], ys: list[int]) -> np.ndarray:
    """Per-class expected counts: entry m sums Pr(X_i = a_m | Y_i = y_i)."""
    if len(users) != len(ys):
        raise ValueError("one output index per user required")
    alpha = _shared_alphabet(users)
    out = np.zeros(alpha.d)
    for user, y in zip(users, ys):
        out += posterior(user.prior, user.mech, y).probs
    return out


def weighted_sum_estimate(users: list[UserConfig], ys: list[int]) -> float:
    """Weighted aggregate sum_i (c_i E[X_i | Y_i = y_i] + b_i)."""
    if len(users) != len(ys):
        raise ValueError("one output index per user required")
    return math.fsum(
        user.c * local_mmse(user, y) + user.b for user, y in zip(users, ys)
    )


def histogram_mse_analytic(users: list[UserConfig]) -> float:
    """Total histogram error: per user and class,
    P_m (1 - P_m) - P_m^2 (sum_k q_mk^2 / lam_k - 1)."""
    _shared_alphabet(users)
    total = 0.0
    for user in users:
        p = user.prior.probs
        q = user.mech.matrix
        lam = p @ q
        live = lam > REACHABLE_TOL
        ratio = np.sum(q[:, live] ** 2 / lam[live], axis=1)
        total += float(np.sum(p * (1.0 - p) - p * p * (ratio - 1.0)))
    return max(total, 0.0)
