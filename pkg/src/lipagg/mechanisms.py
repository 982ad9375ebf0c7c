"""Closed-form optimal perturbation channels.

All constructors return validated :class:`~lipagg.core.Mechanism` values and
accept ``math.inf`` as the no-privacy budget, in which case they return the
identity channel.  Budgets are in nats.
"""

from __future__ import annotations

import math

import numpy as np

from .core import LatentModel, Mechanism, Prior, check_epsilon

# The prior-aware closed form below keeps each symbol on its own diagonal and
# spreads the leaked mass proportionally to the prior.  Its effective leakage
# equals the budget only while every supported prior entry is at least
# 1/(e^eps + 1); callers working with more skewed priors should check the
# channel with the audit module.


def lip_feasibility_threshold(eps: float) -> float:
    """Smallest supported prior entry for which ``optimal_lip`` is exact."""
    if math.isinf(eps):
        return 0.0
    return 1.0 / (math.exp(eps) + 1.0)


def optimal_lip(prior: Prior, eps: float) -> Mechanism:
    """Prior-aware channel with diagonal 1-(1-P_m)/e^eps and off-diagonal
    P_k/e^eps.

    Among the d! column permutations attaining the same estimator variance
    this is the identity-permutation representative, which leaves the output
    marginal equal to the input prior.  Zero-prior symbols pass through
    unperturbed (their rows are never used) and their columns are never
    emitted by supported symbols.
    """
    eps = check_epsilon(eps)
    p = prior.probs
    d = prior.d
    if math.isinf(eps):
        return Mechanism.identity(d)
    scale = math.exp(-eps)
    q = np.tile(p * scale, (d, 1))
    np.fill_diagonal(q, 1.0 - (1.0 - p) * scale)
    dead = np.flatnonzero(p <= 0)
    if dead.size:
        q[dead, :] = 0.0
        q[dead, dead] = 1.0
    return Mechanism(q)


def optimal_ldp(d: int, eps: float) -> Mechanism:
    """Symmetric randomized response: diagonal e^eps/(e^eps+d-1), rest equal."""
    if d < 2:
        raise ValueError("domain size must be at least 2")
    eps = check_epsilon(eps)
    if math.isinf(eps):
        return Mechanism.identity(d)
    e = math.exp(eps)
    q = np.full((d, d), 1.0 / (e + d - 1))
    np.fill_diagonal(q, e / (e + d - 1))
    return Mechanism(q)


def wc_lip(d: int, eps: float) -> Mechanism:
    """Worst-case-prior channel: with every prior admissible the constraints
    collapse to the prior-free likelihood-ratio bound, so this is exactly
    :func:`optimal_ldp`."""
    return optimal_ldp(d, eps)


def optimal_bp_lip_binary(a: float, b: float, eps: float) -> Mechanism:
    """Binary channel for a bounded prior family Pr(X=1) in [a, b].

    Returns the least-noise point of the family-wide constraints:
    q01 = b/(b-a+e^eps) and q10 = (1-a)/(b-a+e^eps).  A collapsed box a == b
    reduces to :func:`optimal_lip`; the full box [0, 1] reduces to
    :func:`optimal_ldp`.
    """
    if not 0 <= a <= b <= 1:
        raise ValueError("need 0 <= a <= b <= 1")
    eps = check_epsilon(eps)
    if math.isinf(eps):
        return Mechanism.identity(2)
    e = math.exp(eps)
    q01 = b / (b - a + e)
    q10 = (1.0 - a) / (b - a + e)
    return Mechanism([[1.0 - q01, q01], [q10, 1.0 - q10]])


def optimal_latent_binary(latent: LatentModel, eps: float) -> Mechanism:
    """Optimal binary channel protecting a correlated latent attribute.

    Only the extreme conditionals T_u = max_g Pr(X=1|G=g) and
    T_l = min_g Pr(X=1|G=g) over supported g can bind.  Writing
    u = 1 - q0 - q1 for the retained signal mass and lam0 for the output-0
    marginal, the four possibly-active constraints are linear in (u, lam0)
    and the estimator variance grows with u and with the skew of lam0, so
    the optimum sits where the tightest lower and upper envelopes meet:

        l = max((T_u - P1) k, (P1 - T_l)(k - 1), 1 - P1)
        r = max((P1 - T_l) k, (T_u - P1)(k - 1), P1),   k = e^eps/(e^eps - 1)

    giving u = 1/(l + r) and lam0 = l u.  When X = G this lands exactly on
    the fixed-prior channel of :func:`optimal_lip`; when X is independent of
    G every constraint is slack and the raw value is released.
    """
    if latent.alphabet.d != 2 or latent.cond.shape[1] != 2:
        raise ValueError("latent closed form requires binary X")
    eps = check_epsilon(eps)
    p1 = float(latent.x_prior.probs[1])
    t1 = latent.cond[latent.g_support, 1]
    t_up, t_lo = float(t1.max()), float(t1.min())
    hi = t_up - p1  # spread above the marginal
    lo = p1 - t_lo  # spread below the marginal
    if math.isinf(eps) or (hi <= 0 and lo <= 0):
        return Mechanism.identity(2)
    if eps == 0:
        # no information may flow: any input-independent row works; take the
        # zero-budget limit of the closed form for continuity
        lam0 = hi / (hi + lo)
        return Mechanism([[lam0, 1.0 - lam0], [lam0, 1.0 - lam0]])
    k = math.exp(eps) / (math.exp(eps) - 1.0)
    left = max(hi * k, lo * (k - 1.0), 1.0 - p1)
    right = max(lo * k, hi * (k - 1.0), p1)
    u = 1.0 / (left + right)
    lam0 = left * u
    q0 = 1.0 - lam0 - p1 * u
    q1 = lam0 - (1.0 - p1) * u
    q0, q1 = max(q0, 0.0), max(q1, 0.0)
    return Mechanism([[1.0 - q0, q0], [q1, 1.0 - q1]])


def direct_release_values(latent: LatentModel, eps: float) -> set[int]:
    """Value indices the optimal channel can pass through unperturbed.

    A value qualifies when both conditional-to-marginal ratios stay inside
    the budget: max(max_g T[g,a]/P_a, P_a/min_g T[g,a]) <= e^eps, with g
    ranging over the supported latent values.  Zero-prior values qualify
    vacuously; a zero conditional with a positive prior disqualifies.
    """
    eps = check_epsilon(eps)
    bound = math.inf if math.isinf(eps) else math.exp(eps)
    px = latent.x_prior.probs
    cond = latent.cond[latent.g_support, :]
    out = set()
    for a in range(latent.alphabet.d):
        if px[a] <= 0:
            out.add(a)
            continue
        hi = cond[:, a].max() / px[a]
        low = cond[:, a].min()
        ratio = max(hi, px[a] / low) if low > 0 else math.inf
        if ratio <= bound:
            out.add(a)
    return out
