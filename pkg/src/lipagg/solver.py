"""Numerical constrained optimization for channels without a closed form.

Two solvers and one oracle:

* :func:`solve_latent_mimo` - maximize the estimator variance subject to the
  latent-attribute ratio constraints, which linearize exactly as
  ``sum_x q[x][y] (T[g][x] - e^eps P[x]) <= 0`` and
  ``sum_x q[x][y] (T[g][x] - e^-eps P[x]) >= 0``.
* :func:`solve_bp_lip_mimo` - alternating best response for a bounded prior
  family.
* :func:`grid_oracle` - derivative-free feasible-point search used by the
  test-suite as an independent check on both solvers and the closed forms.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .core import (
    Alphabet,
    LatentModel,
    Mechanism,
    Prior,
    PriorSet,
    REACHABLE_TOL,
    check_epsilon,
)
from .estimators import prior_variance
from .mechanisms import optimal_latent_binary, optimal_lip


@dataclass(frozen=True)
class SolverOptions:
    restarts: int = 16
    max_iters: int = 300
    step_tolerance: float = 1e-12
    constraint_tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("need at least one restart")
        if self.step_tolerance <= 0 or self.constraint_tolerance <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class SolverResult:
    mechanism: Mechanism
    objective: float
    feasible: bool
    iterations: int


def _variance_parts(p: np.ndarray, a: np.ndarray):
    ap = a * p
    mean = float(a @ p)

    def value(qflat: np.ndarray) -> float:
        q = qflat.reshape(p.size, -1)
        lam = p @ q
        w = ap @ q
        live = lam > REACHABLE_TOL
        return float(np.sum(w[live] ** 2 / lam[live])) - mean * mean

    def grad(qflat: np.ndarray) -> np.ndarray:
        q = qflat.reshape(p.size, -1)
        lam = p @ q
        w = ap @ q
        live = lam > REACHABLE_TOL
        g = np.zeros_like(q)
        wl, ll = w[live], lam[live]
        # d(w^2/lam)/dq_xy = 2 w a_x p_x / lam - w^2 p_x / lam^2
        g[:, live] = (
            2.0 * wl * ap[:, None] / ll - (wl**2) * p[:, None] / ll**2
        )
        return g.ravel()

    return value, grad


def _latent_ineq(tgx: np.ndarray, p: np.ndarray, eps: float):
    """Stack the per-(g, y) linear forms as one A q >= 0 system."""
    n_g, d = tgx.shape
    d_out = d
    e_hi, e_lo = math.exp(eps), math.exp(-eps)
    rows = []
    for g in range(n_g):
        hi_coeff = e_hi * p - tgx[g]  # sum_x q_xy (e^eps P_x - T_gx) >= 0
        lo_coeff = tgx[g] - e_lo * p  # sum_x q_xy (T_gx - e^-eps P_x) >= 0
        for y in range(d_out):
            for coeff in (hi_coeff, lo_coeff):
                row = np.zeros((d, d_out))
                row[:, y] = coeff
                rows.append(row.ravel())
    return np.array(rows)


def _maximize_over_polytope(
    p: np.ndarray,
    a: np.ndarray,
    a_ineq: np.ndarray,
    starts: list[np.ndarray],
    opts: SolverOptions,
):
    """Multi-start SLSQP ascent of the estimator variance over A q >= 0,
    row-stochastic q.  Returns (q, objective, feasible, iterations)."""
    d = p.size
    d_out = starts[0].shape[1]
    value, grad = _variance_parts(p, a)
    n = d * d_out
    eye_rows = np.kron(np.eye(d), np.ones(d_out))
    constraints = [
        {
            "type": "eq",
            "fun": lambda q: eye_rows @ q - 1.0,
            "jac": lambda q: eye_rows,
        }
    ]
    if a_ineq.size:
        constraints.append(
            {
                "type": "ineq",
                "fun": lambda q: a_ineq @ q,
                "jac": lambda q: a_ineq,
            }
        )

    def residual(qflat: np.ndarray) -> float:
        r = 0.0
        if a_ineq.size:
            r = max(r, float(-(a_ineq @ qflat).min()))
        r = max(r, float(np.abs(eye_rows @ qflat - 1.0).max()))
        r = max(r, float(-(qflat.min())), float(qflat.max() - 1.0))
        return r

    best = None
    total_iters = 0
    for idx, q0 in enumerate(starts):
        res = optimize.minimize(
            lambda q: -value(q),
            q0.ravel(),
            jac=lambda q: -grad(q),
            method="SLSQP",
            bounds=[(0.0, 1.0)] * n,
            constraints=constraints,
            options={"maxiter": opts.max_iters, "ftol": opts.step_tolerance},
        )
        total_iters += int(res.nit)
        q = np.clip(res.x, 0.0, 1.0)
        feas = residual(res.x) <= opts.constraint_tolerance
        obj = value(q)
        key = (feas, obj, -idx)
        if best is None or key > best[0]:
            best = (key, q.reshape(d, d_out), feas, obj)
    _, q, feas, obj = best
    return q, obj, feas, total_iters


def _canonical_columns(q: np.ndarray) -> np.ndarray:
    """Reorder output columns to the trace-maximal permutation.  Permuting
    outputs changes neither the objective nor constraint satisfaction, so
    this picks the identity-permutation representative among tied optima."""
    if q.shape[0] != q.shape[1]:
        return q
    rows, cols = optimize.linear_sum_assignment(-q)
    perm = np.empty(q.shape[1], dtype=int)
    perm[rows] = cols
    out = np.zeros_like(q)
    out[:, rows] = q[:, perm]
    return out


def _support_reduce(latent: LatentModel):
    px = latent.x_prior.probs
    support = np.flatnonzero(px > 0)
    tgx = latent.cond[latent.g_support][:, support]
    return px[support], tgx, support


def _embed(q_sub: np.ndarray, support: np.ndarray, d: int) -> np.ndarray:
    # dropped symbols keep their identity rows and are never emitted by
    # supported rows (their columns stay zero there)
    q = np.eye(d)
    q[np.ix_(support, support)] = q_sub
    return q


def solve_latent_mimo(
    latent: LatentModel, eps: float, opts: SolverOptions | None = None
) -> SolverResult:
    """Maximize Var(E[X|Y]) over square channels meeting the latent-attribute
    ratio bounds.  Multi-start local ascent over the linear constraint
    polytope; the constant-rows channel is always feasible and is one start.
    Deterministic for a fixed ``opts.seed``."""
    opts = opts or SolverOptions()
    eps = check_epsilon(eps)
    if math.isinf(eps):
        raise ValueError("latent solver needs a finite budget")
    d = latent.alphabet.d
    p, tgx, support = _support_reduce(latent)
    values = latent.alphabet.values[support]
    a_ineq = _latent_ineq(tgx, p, eps)

    ds = support.size
    starts = [np.tile(p, (ds, 1)), np.eye(ds)]
    lip = optimal_lip(Prior(p), eps).matrix
    starts.append(lip)
    if ds == 2:
        sub_alpha = Alphabet(
            [latent.alphabet.labels[i] for i in support], values
        )
        sub_latent = LatentModel(latent.g_prior[latent.g_support], tgx, sub_alpha)
        starts.append(optimal_latent_binary(sub_latent, eps).matrix)
    rng = np.random.default_rng(np.random.SeedSequence(opts.seed))
    streams = rng.spawn(opts.restarts)
    for stream in streams[: max(opts.restarts - len(starts), 0)]:
        starts.append(stream.dirichlet(np.ones(ds), size=ds))

    q, obj, feas, iters = _maximize_over_polytope(p, values, a_ineq, starts, opts)
    q = _canonical_columns(q)
    value, _ = _variance_parts(p, values)
    return SolverResult(
        mechanism=Mechanism(_embed(q, support, d)),
        objective=value(q.ravel()),
        feasible=feas,
        iterations=iters,
    )


def _bp_cover(prior_set: PriorSet) -> list[Prior]:
    cover = prior_set.vertices()
    interior = prior_set.interior_member()
    if all(np.any(np.abs(m.probs - interior.probs) > 1e-12) for m in cover):
        cover.append(interior)
    return cover


def _bp_ineq(cover: list[Prior], d: int, eps: float) -> np.ndarray:
    """Linear constraints for a prior family.

    Every cover prior contributes the noise floors e^eps q_xy >= lam_y
    (these are the binding constraints at the least-noise optimum and are
    meaningful even at degenerate corner priors, as limits of interior
    members); full-support cover priors also contribute the posterior caps
    q_xy <= e^eps lam_y.
    """
    e_hi = math.exp(eps)
    rows = []
    for member in cover:
        theta = member.probs
        full = member.support.size == d
        for x in range(d):
            for y in range(d):
                floor = np.zeros((d, d))
                floor[:, y] -= theta
                floor[x, y] += e_hi
                rows.append(floor.ravel())
                if full:
                    cap = np.zeros((d, d))
                    cap[:, y] += e_hi * theta
                    cap[x, y] -= 1.0
                    rows.append(cap.ravel())
    return np.array(rows)


def solve_bp_lip_mimo(
    prior_set: PriorSet,
    alphabet: Alphabet,
    eps: float,
    opts: SolverOptions | None = None,
) -> SolverResult:
    """Minimax channel for a bounded prior family.

    Alternates an inner worst-prior search (over the finite cover of the
    family: box vertices plus an interior member, or the list members) with
    an outer variance ascent under the family-wide constraints.  The
    reported objective is the guaranteed variance over the non-degenerate
    cover priors (point masses make any estimator exact and carry no
    design information).
    """
    opts = opts or SolverOptions()
    eps = check_epsilon(eps)
    d = prior_set.d
    if alphabet.d != d:
        raise ValueError("alphabet size must match the prior set")
    if math.isinf(eps):
        q = np.eye(d)
        guaranteed = min(
            prior_variance(m, alphabet)
            for m in _bp_cover(prior_set)
            if m.support.size > 1
        )
        return SolverResult(Mechanism(q), guaranteed, True, 0)

    cover = _bp_cover(prior_set)
    candidates = [m for m in cover if prior_variance(m, alphabet) > 0]
    if not candidates:
        raise ValueError("prior set contains only degenerate priors")
    a_ineq = _bp_ineq(cover, d, eps)
    values = alphabet.values

    def guaranteed_for(q: np.ndarray) -> tuple[float, Prior]:
        worst, arg = math.inf, candidates[0]
        for member in candidates:
            ap = values * member.probs
            lam = member.probs @ q
            live = lam > REACHABLE_TOL
            w = ap @ q
            v = float(np.sum(w[live] ** 2 / lam[live])) - float(values @ member.probs) ** 2
            if v < worst:
                worst, arg = v, member
        return worst, arg

    base = prior_set.interior_member().probs
    q = np.tile(base, (d, 1))
    guaranteed, worst_prior = guaranteed_for(q)
    feas = True
    iters = 0
    rng = np.random.default_rng(np.random.SeedSequence(opts.seed))
    for _ in range(100):
        starts = [q, np.tile(worst_prior.probs, (d, 1)), np.eye(d)]
        for stream in rng.spawn(max(opts.restarts - len(starts), 0)):
            starts.append(stream.dirichlet(np.ones(d), size=d))
        q_new, _, feas, nit = _maximize_over_polytope(
            worst_prior.probs, values, a_ineq, starts, opts
        )
        iters += nit
        new_guaranteed, worst_prior = guaranteed_for(q_new)
        if new_guaranteed <= guaranteed + 1e-10:
            if new_guaranteed > guaranteed:
                q, guaranteed = q_new, new_guaranteed
            break
        q, guaranteed = q_new, new_guaranteed
    q = _canonical_columns(q)
    guaranteed, _ = guaranteed_for(q)
    return SolverResult(Mechanism(q), guaranteed, feas, iters)


# ---------------------------------------------------------------------------
# Independent grid oracle
# ---------------------------------------------------------------------------


def _simplex_grid(k: int, points: int) -> np.ndarray:
    """All probability rows with coordinates on an even grid of the given
    per-axis point count."""
    steps = points - 1
    combos = itertools.combinations(range(steps + k - 1), k - 1)
    out = []
    for cut in combos:
        prev = -1
        row = []
        for c in cut:
            row.append(c - prev - 1)
            prev = c
        row.append(steps + k - 2 - prev)
        out.append(row)
    return np.array(out, dtype=float) / steps


def _local_rows(center: np.ndarray, half_width: float, points: int) -> np.ndarray:
    """Grid of probability rows near a center row: free coordinates move in a
    box, the last coordinate absorbs the slack."""
    k = center.size
    axes = [
        np.unique(np.clip(np.linspace(c - half_width, c + half_width, points), 0, 1))
        for c in center[:-1]
    ]
    grids = np.meshgrid(*axes, indexing="ij")
    free = np.stack([g.ravel() for g in grids], axis=1)
    last = 1.0 - free.sum(axis=1)
    ok = last >= -1e-12
    rows = np.concatenate([free[ok], np.clip(last[ok], 0.0, None)[:, None]], axis=1)
    return rows


def _row_interval(prob: "_OracleProblem", cur_rows: np.ndarray, x: int):
    """Feasible interval per column for row x with the other rows held
    fixed: every ratio constraint is linear in the row's entries."""
    d_out = cur_rows.shape[1]
    lo = np.zeros(d_out)
    hi = np.ones(d_out)
    others = [i for i in range(cur_rows.shape[0]) if i != x]
    b = sum(prob.p[i] * cur_rows[i] for i in others)
    for g in range(prob.tgx.shape[0]):
        c = sum(prob.tgx[g, i] * cur_rows[i] for i in others)
        for bound, sign in ((prob.e_lo, 1.0), (prob.e_hi, -1.0)):
            # sign=+1: T_gx q_y + c_y >= bound (P_x q_y + b_y); sign=-1 flips
            alpha = sign * (prob.tgx[g, x] - bound * prob.p[x])
            beta = sign * (bound * b - c)
            pos = alpha > 1e-15
            neg = alpha < -1e-15
            with np.errstate(divide="ignore", invalid="ignore"):
                lo = np.where(pos, np.maximum(lo, beta / np.where(pos, alpha, 1.0)), lo)
                hi = np.where(neg, np.minimum(hi, beta / np.where(neg, alpha, 1.0)), hi)
    return np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)


def _project_capped_simplex(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto {q : lo <= q <= hi, sum q = 1} by
    bisection on the shift of the clipped vector."""
    span = max(float(np.abs(v).max()), 1.0) + 1.0
    t_lo, t_hi = -span, span
    for _ in range(80):
        t = 0.5 * (t_lo + t_hi)
        total = float(np.clip(v - t, lo, hi).sum())
        if total > 1.0:
            t_lo = t
        else:
            t_hi = t
    return np.clip(v - 0.5 * (t_lo + t_hi), lo, hi)


def _interval_vertices(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Extreme rows of {q : lo <= q <= hi, sum q = 1}: all coordinates at a
    bound except one absorbing the slack."""
    d_out = lo.size
    rows = []
    for free in range(d_out):
        others = [j for j in range(d_out) if j != free]
        for bits in range(2 ** len(others)):
            q = np.empty(d_out)
            for k, j in enumerate(others):
                q[j] = hi[j] if (bits >> k) & 1 else lo[j]
            slack = 1.0 - q[others].sum()
            if lo[free] - 1e-12 <= slack <= hi[free] + 1e-12:
                q[free] = min(max(slack, 0.0), 1.0)
                rows.append(q)
    return np.array(rows) if rows else np.empty((0, d_out))


class _OracleProblem:
    """Vectorized feasibility + objective evaluation over row-set products."""

    def __init__(self, p, tgx, values, eps, tol):
        self.p = p
        self.tgx = tgx
        self.values = values
        self.e_hi = math.exp(eps)
        self.e_lo = math.exp(-eps)
        self.tol = tol
        self.mean = float(values @ p)
        self.evaluated = 0

    def best(self, row_sets: list[np.ndarray], top_k: int = 1):
        """Scan the product of row sets; return up to ``top_k`` feasible
        (objective, rows) pairs, best first, or an empty list."""
        p, a = self.p, self.values
        ap = a * p
        sizes = [r.shape[0] for r in row_sets]
        d_out = row_sets[0].shape[1]
        found: list[tuple[float, tuple]] = []
        chunk = max(1, int(1.5e6 // max(np.prod(sizes[1:]) * d_out, 1)))
        rest_shape = sizes[1:]
        for lo in range(0, sizes[0], chunk):
            rows0 = row_sets[0][lo : lo + chunk]
            shape = (rows0.shape[0], *rest_shape, d_out)
            lam = np.zeros(shape)
            w = np.zeros(shape)
            nums = [np.zeros(shape) for _ in range(self.tgx.shape[0])]
            for x, rows in enumerate([rows0] + row_sets[1:]):
                bshape = [1] * (len(sizes) + 1)
                bshape[x] = rows.shape[0]
                bshape[-1] = d_out
                r = rows.reshape(bshape)
                lam = lam + p[x] * r
                w = w + ap[x] * r
                for g in range(self.tgx.shape[0]):
                    nums[g] = nums[g] + self.tgx[g, x] * r
            live = lam > REACHABLE_TOL
            feas = np.ones(shape[:-1], dtype=bool)
            for num in nums:
                ok = ~live | (
                    (num <= self.e_hi * lam + self.tol)
                    & (num >= self.e_lo * lam - self.tol)
                )
                feas &= ok.all(axis=-1)
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(live, w * w / np.maximum(lam, REACHABLE_TOL), 0.0)
            obj = terms.sum(axis=-1) - self.mean**2
            obj = np.where(feas, obj, -np.inf).ravel()
            self.evaluated += obj.size
            take = min(top_k, obj.size)
            part = np.argpartition(-obj, take - 1)[:take]
            for flat in part:
                if obj[flat] == -math.inf:
                    continue
                idx = np.unravel_index(int(flat), shape[:-1])
                found.append((float(obj[flat]), (idx[0] + lo, *idx[1:])))
        found.sort(key=lambda t: -t[0])
        out = []
        for obj_val, idx in found[:top_k]:
            rows = [row_sets[x][idx[x]] for x in range(len(sizes))]
            out.append((obj_val, np.array(rows)))
        return out


def grid_oracle(
    target: Prior | LatentModel,
    eps: float,
    resolution: int,
    values=None,
    n_outputs: int | None = None,
) -> SolverResult:
    """Feasible-point search over the channel simplex product.

    Used by tests as an oracle that is independent of every closed form: it
    only ever checks the ratio constraints and evaluates the variance.  For
    one-parameter-per-row channels the scan is exhaustive at the requested
    resolution; wider rows are scanned coarse-to-fine down to a step no
    larger than the requested one (a zoom is the only way to reach that step
    in up to nine dimensions).  Requires a full-support target with at most
    three input symbols.
    """
    eps = check_epsilon(eps)
    if resolution > 101 or resolution < 3:
        raise ValueError("resolution must lie in [3, 101]")
    if isinstance(target, LatentModel):
        prior = target.x_prior
        tgx = target.cond[target.g_support, :]
        values = target.alphabet.values if values is None else np.asarray(values, float)
    else:
        prior = target
        tgx = np.eye(prior.d)
        values = (
            np.arange(prior.d, dtype=float) if values is None else np.asarray(values, float)
        )
    p = prior.probs
    d = prior.d
    if d > 3:
        raise ValueError("oracle restricted to at most three input symbols")
    if prior.support.size != d:
        raise ValueError("oracle requires a full-support prior")
    d_out = d if n_outputs is None else int(n_outputs)
    if d_out < 2 or d_out > 4:
        raise ValueError("output size must lie in [2, 4]")

    if math.isinf(eps):
        if d_out >= d:
            q = np.zeros((d, d_out))
            q[:, :d] = np.eye(d)
            return SolverResult(Mechanism(q), prior_variance(prior, _alpha(values)), True, 0)
        eps = 50.0  # effectively unconstrained; fall through to the search

    prob = _OracleProblem(p, tgx, values, eps, tol=1e-9)
    coarse_points = resolution if d_out == 2 else (13 if d_out == 3 else 9)
    base = _simplex_grid(d_out, coarse_points)
    # the always-feasible constant-rows point guards against an empty scan
    base = np.vstack([base, p if d_out == d else np.full(d_out, 1.0 / d_out)])
    seeds = prob.best([base] * d, top_k=1 if d_out == 2 else 12)
    if not seeds:
        raise RuntimeError("no feasible grid point found")
    # the objective is convex on the constraint polytope, so every vertex is
    # a local maximum; seed diversity is what finds the right basin.  The
    # interior constant-rows point (global minimum) is kept as an extra seed
    # because greedy ascent from it can enter basins the lattice misses.
    flat_row = p if d_out == d else np.full(d_out, 1.0 / d_out)
    found_flat = prob.best([flat_row[None, :]] * d)
    if found_flat:
        seeds.append(found_flat[0])
    # least-noise seeds: repair blends of the identity channel with the
    # always-feasible constant-rows channel by cyclically projecting each row
    # onto its feasible interval box given the others.  These reach
    # near-noiseless basins whose tiny coordinates no coarse lattice carries
    # (pure identity deadlocks: the other rows pin whole columns at zero).
    ident = np.zeros((d, d_out))
    for x in range(d):
        ident[x, x % d_out] = 1.0
    flat = np.tile(flat_row, (d, 1))
    for beta in (0.25, 0.5, 0.75):
        repaired = (1.0 - beta) * ident + beta * flat
        for _ in range(40):
            moved = 0.0
            for x in range(d):
                lo_x, hi_x = _row_interval(prob, repaired, x)
                if lo_x.sum() > 1 + 1e-9 or hi_x.sum() < 1 - 1e-9:
                    continue
                new_row = _project_capped_simplex(repaired[x], lo_x, hi_x)
                moved = max(moved, float(np.abs(new_row - repaired[x]).max()))
                repaired[x] = new_row
            if moved < 1e-12:
                break
        found_rep = prob.best([repaired[x][None, :] for x in range(d)])
        if found_rep:
            seeds.append(found_rep[0])
    obj, rows = seeds[0]
    step = 1.0 / (coarse_points - 1)
    target_step = 1.0 / (resolution - 1)
    fine = _simplex_grid(d_out, resolution)
    for seed_obj, seed_rows in seeds:
        cur_obj, cur_rows = seed_obj, seed_rows.copy()
        if d_out > 2:
            # compass search: recenter a joint local grid until the move
            # stalls, then halve the width down to the requested step
            half = step
            while half > target_step / 8.0:
                for _ in range(40):
                    row_sets = [_local_rows(cur_rows[x], half, 5) for x in range(d)]
                    found = prob.best(row_sets)
                    if found and found[0][0] > cur_obj + 1e-15:
                        cur_obj, cur_rows = found[0][0], found[0][1].copy()
                    else:
                        break
                half /= 2.0
        # row-wise scans over the full fine simplex grid plus the feasible
        # interval vertices of each row, snapping onto the active boundary
        for _ in range(6):
            improved = False
            for x in range(d):
                lo_x, hi_x = _row_interval(prob, cur_rows, x)
                extremes = _interval_vertices(lo_x, hi_x)
                cands = np.vstack([fine, extremes]) if extremes.size else fine
                row_sets = [
                    cands if i == x else cur_rows[i][None, :] for i in range(d)
                ]
                found = prob.best(row_sets)
                if found and found[0][0] > cur_obj + 1e-15:
                    cur_obj = found[0][0]
                    cur_rows = cur_rows.copy()
                    cur_rows[x] = found[0][1][x]
                    improved = True
            if not improved:
                break
        if cur_obj > obj:
            obj, rows = cur_obj, cur_rows
    q = np.clip(rows, 0.0, 1.0)
    q = q / q.sum(axis=1, keepdims=True)
    return SolverResult(Mechanism(q), obj, True, prob.evaluated)


def _alpha(values: np.ndarray) -> Alphabet:
    return Alphabet([str(i) for i in range(values.size)], values)
