"""Validated probability objects and the Bayes machinery shared by all modules.

Every type is an immutable value after construction (backing arrays are
frozen), so instances can be shared freely across threads or workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Absolute tolerance for all stochasticity checks.  Constructors renormalize
# only when the deviation is below this tolerance; larger deviations are
# rejected because silent renormalization hides data bugs.
PROB_TOL = 1e-9

# Outputs whose marginal probability falls below this cutoff are treated as
# unreachable and skipped by posterior computations and audits.
REACHABLE_TOL = 1e-15

INF_EPS = math.inf


def check_epsilon(eps: float, *, allow_zero: bool = True) -> float:
    """Validate a privacy budget in nats.  ``math.inf`` means no constraint."""
    eps = float(eps)
    if math.isnan(eps) or eps < 0 or (eps == 0 and not allow_zero):
        raise ValueError(f"invalid privacy budget: {eps!r}")
    return eps


def _frozen(values, shape_name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{shape_name} contains non-finite entries")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


def _check_distribution(p: np.ndarray, what: str) -> np.ndarray:
    if p.ndim != 1:
        raise ValueError(f"{what} must be one-dimensional")
    if np.any(p < -PROB_TOL) or np.any(p > 1 + PROB_TOL):
        raise ValueError(f"{what} entries must lie in [0, 1]")
    total = p.sum()
    if abs(total - 1.0) > PROB_TOL:
        raise ValueError(f"{what} sums to {total!r}, expected 1 within {PROB_TOL}")
    return np.clip(p, 0.0, 1.0) / np.clip(p, 0.0, 1.0).sum()


@dataclass(frozen=True)
class Alphabet:
    """Finite value domain: display labels plus the real values used in sums."""

    labels: tuple
    values: np.ndarray

    def __init__(self, labels, values=None):
        labels = tuple(str(s) for s in labels)
        if values is None:
            values = _numeric_or_index(labels)
        values = _frozen(values, "alphabet values")
        if len(labels) != values.size:
            raise ValueError("labels and values must have the same length")
        if values.size < 2:
            raise ValueError("alphabet needs at least two symbols")
        if len(set(labels)) != len(labels):
            raise ValueError("alphabet labels must be distinct")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return self.values.size

    def index_of(self, label) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown label {label!r}") from None


def _numeric_or_index(labels):
    try:
        return [float(s) for s in labels]
    except ValueError:
        return list(range(len(labels)))


@dataclass(frozen=True)
class Prior:
    """Probability vector over an alphabet.  Zero entries are permitted;
    downstream operations restrict themselves to the support."""

    probs: np.ndarray

    def __init__(self, probs):
        p = _check_distribution(_frozen(probs, "prior"), "prior")
        object.__setattr__(self, "probs", _frozen(p, "prior"))

    @property
    def d(self) -> int:
        return self.probs.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def __iter__(self):
        return iter(self.probs)


@dataclass(frozen=True)
class Mechanism:
    """Row-stochastic perturbation channel; row x is the law of Y given X=x."""

    matrix: np.ndarray

    def __init__(self, matrix):
        q = _frozen(matrix, "mechanism")
        if q.ndim != 2:
            raise ValueError("mechanism matrix must be two-dimensional")
        if np.any(q < -PROB_TOL) or np.any(q > 1 + PROB_TOL):
            raise ValueError("mechanism entries must lie in [0, 1]")
        sums = q.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL)
        if bad.size:
            raise ValueError(
                f"mechanism row {bad[0]} sums to {sums[bad[0]]!r}, expected 1"
            )
        q = np.clip(q, 0.0, 1.0)
        q = q / q.sum(axis=1, keepdims=True)
        object.__setattr__(self, "matrix", _frozen(q, "mechanism"))

    @property
    def d_in(self) -> int:
        return self.matrix.shape[0]

    @property
    def d_out(self) -> int:
        return self.matrix.shape[1]

    @staticmethod
    def identity(d: int) -> "Mechanism":
        return Mechanism(np.eye(d))


@dataclass(frozen=True)
class LatentModel:
    """Latent attribute G coupled to the collected value X.

    ``cond[g, x]`` is Pr(X = x | G = g); the induced marginal on X is
    ``x_prior``.  Privacy constraints are placed on G while utility is
    measured on X.
    """

    g_prior: np.ndarray
    cond: np.ndarray
    alphabet: Alphabet

    def __init__(self, g_prior, cond, alphabet: Alphabet):
        gp = _check_distribution(_frozen(g_prior, "latent prior"), "latent prior")
        t = _frozen(cond, "conditional matrix")
        if t.ndim != 2 or t.shape[0] != gp.size:
            raise ValueError("conditional matrix shape must be |G| x d")
        if t.shape[1] != alphabet.d:
            raise ValueError("conditional matrix width must match the alphabet")
        sums = t.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > PROB_TOL):
            raise ValueError("conditional matrix rows must sum to 1")
        if np.any(t < -PROB_TOL) or np.any(t > 1 + PROB_TOL):
            raise ValueError("conditional entries must lie in [0, 1]")
        t = np.clip(t, 0.0, 1.0)
        t = t / t.sum(axis=1, keepdims=True)
        object.__setattr__(self, "g_prior", _frozen(gp, "latent prior"))
        object.__setattr__(self, "cond", _frozen(t, "conditional matrix"))
        object.__setattr__(self, "alphabet", alphabet)
        # the induced x-marginal must itself be a distribution
        _check_distribution(self.g_prior @ self.cond, "induced x-prior")

    @property
    def n_latent(self) -> int:
        return self.g_prior.size

    @property
    def x_prior(self) -> Prior:
        return Prior(self.g_prior @ self.cond)

    @property
    def g_support(self) -> np.ndarray:
        return np.flatnonzero(self.g_prior > 0)

    @staticmethod
    def identity_coupling(prior: Prior, alphabet: Alphabet) -> "LatentModel":
        """The degenerate G = X model (protecting the value itself)."""
        return LatentModel(prior.probs, np.eye(prior.d), alphabet)


@dataclass(frozen=True)
class PriorSet:
    """Bounded family of priors: a per-coordinate interval box or a finite list."""

    lows: np.ndarray | None
    highs: np.ndarray | None
    members: tuple

    def __init__(self, lows=None, highs=None, members=()):
        members = tuple(members)
        if (lows is None) != (highs is None):
            raise ValueError("box needs both lower and upper bounds")
        if lows is None and not members:
            raise ValueError("prior set is empty")
        if lows is not None:
            lows = _frozen(lows, "box lower bounds")
            highs = _frozen(highs, "box upper bounds")
            if lows.shape != highs.shape or lows.ndim != 1:
                raise ValueError("box bounds must be vectors of equal length")
            if np.any(lows < -PROB_TOL) or np.any(highs > 1 + PROB_TOL):
                raise ValueError("box bounds must lie in [0, 1]")
            if np.any(lows > highs + PROB_TOL):
                raise ValueError("box has low > high")
            # feasibility probe: a normalized member exists iff the bound sums
            # bracket 1
            if lows.sum() > 1 + PROB_TOL or highs.sum() < 1 - PROB_TOL:
                raise ValueError("box contains no normalized prior")
        for m in members:
            if not isinstance(m, Prior):
                raise ValueError("list prior sets must contain Prior values")
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)
        object.__setattr__(self, "members", members)

    @staticmethod
    def from_box(lows, highs) -> "PriorSet":
        return PriorSet(lows=lows, highs=highs)

    @staticmethod
    def from_list(priors) -> "PriorSet":
        return PriorSet(members=tuple(priors))

    @property
    def is_box(self) -> bool:
        return self.lows is not None

    @property
    def d(self) -> int:
        return self.lows.size if self.is_box else self.members[0].d

    def vertices(self) -> list[Prior]:
        """Extreme priors of the set.

        For a box these are the normalized vertices: all but one coordinate
        pinned at a bound, the free coordinate absorbing the slack.  For a
        list set, the members themselves.
        """
        if not self.is_box:
            return list(self.members)
        d = self.d
        out = []
        seen = set()
        for free in range(d):
            others = [m for m in range(d) if m != free]
            for bits in range(2 ** len(others)):
                p = np.empty(d)
                for j, m in enumerate(others):
                    p[m] = self.highs[m] if (bits >> j) & 1 else self.lows[m]
                slack = 1.0 - p[others].sum()
                if slack < self.lows[free] - PROB_TOL or slack > self.highs[free] + PROB_TOL:
                    continue
                p[free] = min(max(slack, 0.0), 1.0)
                key = tuple(np.round(p, 12))
                if key not in seen:
                    seen.add(key)
                    out.append(Prior(p))
        if not out:
            raise ValueError("box contains no normalized prior")
        return out

    def interior_member(self) -> Prior:
        """A representative member, preferring full support when available."""
        if not self.is_box:
            full = [m for m in self.members if m.support.size == m.d]
            return full[0] if full else self.members[0]
        mid = (self.lows + self.highs) / 2.0
        # scale the midpoint toward a normalized point while staying in the box
        p = np.clip(mid, self.lows, self.highs)
        slack = 1.0 - p.sum()
        room = (self.highs - p) if slack > 0 else (p - self.lows)
        total = room.sum()
        if total > 0:
            p = p + slack * room / total
        return Prior(np.clip(p, 0.0, 1.0))


def output_marginal(prior: Prior, mech: Mechanism) -> Prior:
    """Marginal law of the mechanism output under the given input prior."""
    if prior.d != mech.d_in:
        raise ValueError("prior dimension does not match mechanism input size")
    return Prior(prior.probs @ mech.matrix)


def posterior(prior: Prior, mech: Mechanism, y_index: int) -> Prior:
    """Posterior over inputs given the observed output index, by Bayes rule."""
    if prior.d != mech.d_in:
        raise ValueError("prior dimension does not match mechanism input size")
    if not 0 <= y_index < mech.d_out:
        raise ValueError(f"output index {y_index} out of range")
    lam = float(prior.probs @ mech.matrix[:, y_index])
    if lam <= REACHABLE_TOL:
        raise ValueError(f"unreachable output {y_index}")
    return Prior(prior.probs * mech.matrix[:, y_index] / lam)
