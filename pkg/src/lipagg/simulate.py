"""Seeded Monte Carlo harness for utility-privacy tradeoff curves.

Populations are sampled, perturbed through a channel family, aggregated with
the matching estimator, and scored against the per-trial true aggregate.
Randomness comes from counter-based streams keyed by (seed, role), with a
fixed trial chunk size, so results are bit-identical across runs and every
(family, epsilon) point of one seed consumes the same underlying draws -
curves from a single seed are paired comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Alphabet,
    LatentModel,
    Mechanism,
    Prior,
    PriorSet,
    REACHABLE_TOL,
    check_epsilon,
)
from .estimators import UserConfig, mse_analytic, prior_free_mse
from .mechanisms import optimal_bp_lip_binary, optimal_latent_binary, optimal_ldp, optimal_lip
from .solver import SolverOptions, solve_bp_lip_mimo, solve_latent_mimo

_CHUNK = 250

FAMILIES = (
    "lip",
    "ldp",
    "wc_lip",
    "bp_lip",
    "latent_binary",
    "latent_mimo",
    "prior_free_ldp",
)


@dataclass(frozen=True)
class TradeoffPoint:
    epsilon: float
    analytic_mse: float
    empirical_mse: float
    root_avg_mse: float
    trials: int


@dataclass(frozen=True)
class SimConfig:
    """One sweep: a population, a channel family, and an epsilon grid."""

    priors: np.ndarray  # (N, d) one prior row per user
    values: np.ndarray  # (d,) alphabet values
    family: str = "lip"
    application: str = "weighted_sum"
    epsilon_grid: tuple = (1.0,)
    trials: int = 10000
    seed: int = 0
    weights: np.ndarray | None = None
    offsets: np.ndarray | None = None
    latent: LatentModel | None = None
    prior_set: PriorSet | None = None

    def __post_init__(self):
        p = np.asarray(self.priors, dtype=float)
        if p.ndim != 2 or p.shape[0] < 1:
            raise ValueError("priors must be an (N, d) array")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9) or np.any(p < 0):
            raise ValueError("each prior row must be a distribution")
        object.__setattr__(self, "priors", p)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.size != p.shape[1]:
            raise ValueError("values length must match prior width")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown mechanism family {self.family!r}")
        if self.application not in ("weighted_sum", "histogram"):
            raise ValueError(f"unknown application {self.application!r}")
        if self.trials < 1 or not self.epsilon_grid:
            raise ValueError("need trials >= 1 and a nonempty epsilon grid")
        for eps in self.epsilon_grid:
            check_epsilon(eps)
        n = p.shape[0]
        w = np.ones(n) if self.weights is None else np.asarray(self.weights, float)
        b = np.zeros(n) if self.offsets is None else np.asarray(self.offsets, float)
        if w.size != n or b.size != n:
            raise ValueError("weights/offsets must have one entry per user")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "offsets", b)
        if self.family in ("latent_binary", "latent_mimo"):
            if self.latent is None:
                raise ValueError(f"family {self.family!r} needs a latent model")
            induced = self.latent.x_prior.probs
            if np.any(np.abs(p - induced[None, :]) > 1e-9):
                raise ValueError("latent families need priors equal to the induced marginal")
        if self.family == "bp_lip" and self.prior_set is None:
            raise ValueError("family 'bp_lip' needs a prior set")
        if self.family == "prior_free_ldp":
            if self.application != "weighted_sum" or p.shape[1] != 2:
                raise ValueError("prior-free family is the binary count setting")
            if np.any(w != 1.0) or np.any(b != 0.0) or not np.array_equal(
                self.values, np.array([0.0, 1.0])
            ):
                raise ValueError("prior-free family needs unit weights and 0/1 values")

    @property
    def n_users(self) -> int:
        return self.priors.shape[0]

    @property
    def d(self) -> int:
        return self.priors.shape[1]


def make_population(
    n_users: int,
    d: int,
    seed: int,
    shared_prior: Prior | None = None,
    values=None,
) -> np.ndarray:
    """Per-user priors: one shared row or seeded random Dirichlet rows."""
    if shared_prior is not None:
        return np.tile(shared_prior.probs, (n_users, 1))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(11,)))
    return rng.dirichlet(np.ones(d), size=n_users)


def perturb(mech: Mechanism, x_index: int, rng: np.random.Generator) -> int:
    """Draw one output index from row x via inverse CDF on the row cumsum."""
    cum = np.cumsum(mech.matrix[x_index])
    return int(np.searchsorted(cum, rng.random(), side="right").clip(0, mech.d_out - 1))


def _family_mechanisms(config: SimConfig, eps: float) -> np.ndarray:
    """(N, d, d) stack of per-user channel matrices for one grid point."""
    n, d = config.n_users, config.d
    if config.family == "lip":
        return np.stack(
            [optimal_lip(Prior(row), eps).matrix for row in config.priors]
        )
    if config.family in ("ldp", "wc_lip", "prior_free_ldp"):
        return np.tile(optimal_ldp(d, eps).matrix, (n, 1, 1))
    if config.family == "bp_lip":
        ps = config.prior_set
        if d == 2 and ps.is_box:
            mech = optimal_bp_lip_binary(ps.lows[1], ps.highs[1], eps)
        else:
            alpha = Alphabet([str(i) for i in range(d)], config.values)
            mech = solve_bp_lip_mimo(ps, alpha, eps, SolverOptions(seed=config.seed)).mechanism
        return np.tile(mech.matrix, (n, 1, 1))
    if config.family == "latent_binary":
        mech = optimal_latent_binary(config.latent, eps)
        return np.tile(mech.matrix, (n, 1, 1))
    if config.family == "latent_mimo":
        if math.isinf(eps):
            return np.tile(np.eye(d), (n, 1, 1))
        mech = solve_latent_mimo(config.latent, eps, SolverOptions(seed=config.seed)).mechanism
        return np.tile(mech.matrix, (n, 1, 1))
    raise AssertionError(config.family)


def _analytic_total(config: SimConfig, mechs: np.ndarray, eps: float) -> float:
    p = config.priors
    a = config.values
    if config.family == "prior_free_ldp":
        if math.isinf(eps):
            return 0.0
        return prior_free_mse(config.n_users, config.d, eps)
    lam = np.einsum("nd,ndk->nk", p, mechs)
    live = lam > REACHABLE_TOL
    safe = np.where(live, lam, 1.0)
    if config.application == "weighted_sum":
        w = np.einsum("nd,ndk->nk", p * a[None, :], mechs)
        var_hat = np.sum(np.where(live, w * w / safe, 0.0), axis=1) - (p @ a) ** 2
        var_x = p @ (a * a) - (p @ a) ** 2
        per_user = np.clip(var_x - var_hat, 0.0, None)
        return float(np.sum(config.weights**2 * per_user))
    ratio = np.sum(np.where(live[:, None, :], mechs**2 / safe[:, None, :], 0.0), axis=2)
    per_user = np.sum(p * (1.0 - p) - p * p * (ratio - 1.0), axis=1)
    return float(np.sum(np.clip(per_user, 0.0, None)))


def _posterior_tables(config: SimConfig, mechs: np.ndarray):
    p = config.priors
    lam = np.einsum("nd,ndk->nk", p, mechs)
    live = lam > REACHABLE_TOL
    safe = np.where(live, lam, 1.0)
    post = p[:, None, :] * np.swapaxes(mechs, 1, 2) / safe[:, :, None]
    post[~live] = 0.0  # unreachable outputs are never drawn
    xhat = post @ config.values
    return post, xhat


def _stream(seed: int, role: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(role,)))
    )


def _empirical_mse(config: SimConfig, mechs: np.ndarray, eps: float) -> float:
    n, d = config.n_users, config.d
    a = config.values
    gx, gy = _stream(config.seed, 0), _stream(config.seed, 1)
    prior_cum = np.cumsum(config.priors, axis=1)
    mech_cum = np.cumsum(mechs, axis=2)
    post, xhat = _posterior_tables(config, mechs)
    users = np.arange(n)
    w, b = config.weights, config.offsets
    offset_total = float(b.sum())
    if config.family == "prior_free_ldp":
        flip = 0.0 if math.isinf(eps) else 1.0 / (math.exp(eps) + 1.0)
    total = []
    done = 0
    while done < config.trials:
        t = min(_CHUNK, config.trials - done)
        ux = gx.random((t, n))
        uy = gy.random((t, n))
        x = np.minimum((ux[:, :, None] > prior_cum[None, :, :]).sum(axis=2), d - 1)
        row_cum = mech_cum[users[None, :], x]
        y = np.minimum((uy[:, :, None] > row_cum).sum(axis=2), mechs.shape[2] - 1)
        if config.family == "prior_free_ldp":
            truth = x.sum(axis=1)
            est = (y.sum(axis=1) - n * flip) / (1.0 - 2.0 * flip)
            err = (est - truth) ** 2
        elif config.application == "weighted_sum":
            truth = (w[None, :] * a[x]).sum(axis=1) + offset_total
            est = (w[None, :] * xhat[users[None, :], y]).sum(axis=1) + offset_total
            err = (est - truth) ** 2
        else:
            est = post[users[None, :], y].sum(axis=1)
            truth = np.zeros((t, d))
            np.add.at(truth, (np.arange(t)[:, None], x), 1.0)
            err = ((est - truth) ** 2).sum(axis=1)
        total.append(float(err.sum()))
        done += t
    return math.fsum(total) / config.trials


def run_simulation(config: SimConfig) -> list[TradeoffPoint]:
    """One TradeoffPoint per grid epsilon, in ascending epsilon order."""
    points = []
    for eps in sorted(config.epsilon_grid):
        mechs = _family_mechanisms(config, eps)
        analytic = _analytic_total(config, mechs, eps)
        empirical = _empirical_mse(config, mechs, eps)
        points.append(
            TradeoffPoint(
                epsilon=float(eps),
                analytic_mse=analytic,
                empirical_mse=empirical,
                root_avg_mse=math.sqrt(analytic / config.n_users),
                trials=config.trials,
            )
        )
    return points


@dataclass(frozen=True)
class DecompositionReport:
    global_mse: float
    sum_local_mse: float
    max_abs_deviation: float


def decomposition_check(users: list[UserConfig]) -> DecompositionReport:
    """Exact enumeration check that the aggregate weighted-sum error equals
    the sum of per-user errors.  Only small instances are enumerable."""
    if not 1 <= len(users) <= 3 or any(u.prior.d > 3 for u in users):
        raise ValueError("instance too large for exact enumeration")
    post_means = []
    for u in users:
        lam = u.prior.probs @ u.mech.matrix
        live = lam > REACHABLE_TOL
        safe = np.where(live, lam, 1.0)
        w = (u.alphabet.values * u.prior.probs) @ u.mech.matrix
        post_means.append(np.where(live, w / safe, 0.0))
    global_mse = 0.0
    shapes_x = [u.prior.d for u in users]
    shapes_y = [u.mech.d_out for u in users]
    for xs in np.ndindex(*shapes_x):
        px = math.prod(u.prior.probs[x] for u, x in zip(users, xs))
        if px == 0.0:
            continue
        s_true = math.fsum(
            u.c * u.alphabet.values[x] + u.b for u, x in zip(users, xs)
        )
        for ys in np.ndindex(*shapes_y):
            py = math.prod(u.mech.matrix[x, y] for u, x, y in zip(users, xs, ys))
            if py == 0.0:
                continue
            s_hat = math.fsum(
                u.c * pm[y] + u.b for u, pm, y in zip(users, post_means, ys)
            )
            global_mse += px * py * (s_true - s_hat) ** 2
    local = math.fsum(mse_analytic(u) for u in users)
    return DecompositionReport(global_mse, local, abs(global_mse - local))


@dataclass(frozen=True)
class DomainSweepRow:
    d: int
    rms_lip: float
    rms_lip_half: float
    rms_ldp: float


def domain_size_sweep(d_grid, eps: float, n: int, seed: int) -> list[DomainSweepRow]:
    """Analytic root-average error across domain sizes: the prior-aware
    channel at eps and eps/2 against symmetric randomized response at eps."""
    eps = check_epsilon(eps, allow_zero=False)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(13,)))
    rows = []
    for d in d_grid:
        if d < 2:
            raise ValueError("domain sizes must be at least 2")
        prior = Prior(rng.dirichlet(np.ones(d)))
        alpha = Alphabet([str(i) for i in range(d)], np.arange(d, dtype=float))

        def rms(mech: Mechanism) -> float:
            user = UserConfig(prior=prior, mech=mech, alphabet=alpha)
            return math.sqrt(n * mse_analytic(user) / n)

        rows.append(
            DomainSweepRow(
                d=int(d),
                rms_lip=rms(optimal_lip(prior, eps)),
                rms_lip_half=rms(optimal_lip(prior, eps / 2.0)),
                rms_ldp=rms(optimal_ldp(d, eps)),
            )
        )
    return rows
