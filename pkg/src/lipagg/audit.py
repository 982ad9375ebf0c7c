"""Effective privacy level of an arbitrary channel under each notion.

All quantities are in nats.  Conventions:

* Outputs with marginal probability below ``REACHABLE_TOL`` are unreachable
  and skipped.
* A pair (x, y) with positive prior but zero posterior yields ``inf`` for the
  posterior-ratio notions: the observer rules x out with certainty, which is
  unbounded information gain under a two-sided bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import LatentModel, Mechanism, Prior, REACHABLE_TOL


def lip_epsilon(prior: Prior, mech: Mechanism) -> float:
    """Smallest eps such that every prior-to-posterior ratio on the support
    lies within [e^-eps, e^eps]."""
    lam = prior.probs @ mech.matrix
    worst = 0.0
    for y in np.flatnonzero(lam > REACHABLE_TOL):
        post = prior.probs * mech.matrix[:, y] / lam[y]
        for x in prior.support:
            if post[x] <= 0.0:
                return math.inf
            worst = max(worst, abs(math.log(post[x] / prior.probs[x])))
    return worst


def ldp_epsilon(mech: Mechanism) -> float:
    """Largest log likelihood ratio between any two rows, prior-free."""
    worst = 0.0
    for y in range(mech.d_out):
        col = mech.matrix[:, y]
        hi = col.max()
        if hi <= 0.0:
            continue
        lo = col.min()
        if lo <= 0.0:
            return math.inf
        worst = max(worst, math.log(hi / lo))
    return worst


def latent_lip_epsilon(latent: LatentModel, mech: Mechanism) -> float:
    """Prior-to-posterior bound on the latent attribute G after observing the
    channel output (X marginalized out through the conditional table)."""
    px = latent.x_prior.probs
    lam = px @ mech.matrix
    # Pr(Y=y | G=g) rows; the posterior ratio Pr(G|y)/Pr(G) equals their
    # ratio to the marginal.
    given_g = latent.cond @ mech.matrix
    worst = 0.0
    for y in np.flatnonzero(lam > REACHABLE_TOL):
        for g in latent.g_support:
            ratio = given_g[g, y] / lam[y]
            if ratio <= 0.0:
                return math.inf
            worst = max(worst, abs(math.log(ratio)))
    return worst


def mutual_information(prior: Prior, mech: Mechanism) -> float:
    """I(X; Y) in nats; zero-probability cells contribute nothing."""
    joint = prior.probs[:, None] * mech.matrix
    lam = joint.sum(axis=0)
    total = 0.0
    for x in prior.support:
        for y in np.flatnonzero(joint[x] > 0):
            total += joint[x, y] * math.log(joint[x, y] / (prior.probs[x] * lam[y]))
    return max(total, 0.0)


def max_leakage(prior: Prior, mech: Mechanism) -> float:
    """log sum_y max_x Pr(y|x), the max restricted to supported inputs."""
    rows = mech.matrix[prior.support, :]
    return math.log(rows.max(axis=0).sum())


def di_epsilon(prior: Prior, mech: Mechanism) -> float:
    """Largest log ratio between two posterior masses on the support."""
    lam = prior.probs @ mech.matrix
    worst = 0.0
    for y in np.flatnonzero(lam > REACHABLE_TOL):
        post = (prior.probs * mech.matrix[:, y] / lam[y])[prior.support]
        hi, lo = post.max(), post.min()
        if lo <= 0.0 < hi:
            return math.inf
        if hi > 0.0:
            worst = max(worst, math.log(hi / lo))
    return worst


def d_infinity(prior: Prior) -> float:
    """Largest log ratio between two prior masses on the support."""
    p = prior.probs[prior.support]
    return math.log(p.max() / p.min())


@dataclass(frozen=True)
class AuditReport:
    lip_eps: float
    ldp_eps: float
    di_eps: float
    latent_lip_eps: float | None
    mutual_info: float
    max_leakage: float
    d_infinity: float

    def to_json(self) -> str:
        def enc(v):
            if v is None:
                return None
            return "inf" if math.isinf(v) else v

        return json.dumps({k: enc(v) for k, v in asdict(self).items()})


def audit_channel(
    prior: Prior, mech: Mechanism, latent: LatentModel | None = None
) -> AuditReport:
    """Run every notion against one channel and collect the results."""
    return AuditReport(
        lip_eps=lip_epsilon(prior, mech),
        ldp_eps=ldp_epsilon(mech),
        di_eps=di_epsilon(prior, mech),
        latent_lip_eps=None if latent is None else latent_lip_epsilon(latent, mech),
        mutual_info=mutual_information(prior, mech),
        max_leakage=max_leakage(prior, mech),
        d_infinity=d_infinity(prior),
    )
