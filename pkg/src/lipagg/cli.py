"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 runtime error.  Randomized
subcommands take --seed (fallback: the LIPAGG_SEED environment variable,
then 0) and print the seed they used on standard error.  Every subcommand
accepts --out; without it results go to standard output.  A flat key=value
--config file supplies flag defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import audit as audit_mod
from .core import Alphabet, Mechanism, Prior, PriorSet
from .dataio import Dataset, empirical_conditional, empirical_prior, load_dataset
from .estimators import UserConfig, histogram_estimate, mse_analytic, weighted_sum_estimate
from .mechanisms import (
    optimal_bp_lip_binary,
    optimal_latent_binary,
    optimal_ldp,
    optimal_lip,
    wc_lip,
)
from .simulate import SimConfig, make_population, perturb, run_simulation
from .solver import SolverOptions, solve_bp_lip_mimo, solve_latent_mimo


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError:
        raise _UsageError(f"expected a comma list of numbers, got {text!r}") from None


def _parse_grid(text: str) -> tuple:
    """Either one number or an inclusive start:stop:step grid."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise _UsageError(f"grid must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise _UsageError(f"bad grid {text!r}")
        grid = np.arange(start, stop + step / 2.0, step)
        return tuple(float(g) for g in grid)
    return (float(text),)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _resolve_seed(args) -> int:
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = int(os.environ.get("LIPAGG_SEED", "0"))
    print(f"seed={seed}", file=sys.stderr)
    return seed


def _matrix_text(mech: Mechanism) -> str:
    return "\n".join(",".join(f"{v:.6g}" for v in row) for row in mech.matrix) + "\n"


def _prior_from_args(args) -> Prior:
    if getattr(args, "prior", None):
        return Prior(_parse_floats(args.prior))
    if getattr(args, "dataset", None):
        return empirical_prior(load_dataset(args.dataset))
    raise _UsageError("need --prior or --dataset")


def _latent_from_args(args):
    if not getattr(args, "dataset", None):
        raise _UsageError("latent families need --dataset with a g column")
    ds = load_dataset(args.dataset)
    if not ds.has_latent:
        raise _UsageError("dataset has no g column")
    return empirical_conditional(ds)


def _build_mechanism(args) -> Mechanism:
    fam = args.family
    if fam == "lip":
        return optimal_lip(_prior_from_args(args), args.eps)
    if fam == "ldp":
        return optimal_ldp(args.d or _prior_from_args(args).d, args.eps)
    if fam == "wc_lip":
        return wc_lip(args.d or _prior_from_args(args).d, args.eps)
    if fam == "bp_lip":
        if args.a is None or args.b is None:
            raise _UsageError("bp_lip needs --a and --b")
        return optimal_bp_lip_binary(args.a, args.b, args.eps)
    if fam == "latent_binary":
        return optimal_latent_binary(_latent_from_args(args), args.eps)
    raise _UsageError(f"unknown family {fam!r}")


def _cmd_mechanism(args) -> int:
    _emit(_matrix_text(_build_mechanism(args)), args.out)
    return 0


def _cmd_audit(args) -> int:
    prior = _prior_from_args(args)
    if args.mech == "identity":
        mech = Mechanism.identity(prior.d)
    elif args.mech_file:
        rows = [
            _parse_floats(line)
            for line in Path(args.mech_file).read_text().strip().splitlines()
        ]
        mech = Mechanism(np.array(rows))
    elif args.family:
        mech = _build_mechanism(args)
    else:
        raise _UsageError("need --mech identity, --mech-file, or --family with --eps")
    latent = None
    if args.dataset:
        ds = load_dataset(args.dataset)
        if ds.has_latent:
            latent = empirical_conditional(ds)
    report = audit_mod.audit_channel(prior, mech, latent)
    _emit(report.to_json() + "\n", args.out)
    return 0


def _cmd_solve(args) -> int:
    seed = _resolve_seed(args)
    opts = SolverOptions(seed=seed)
    if args.model == "latent":
        result = solve_latent_mimo(_latent_from_args(args), args.eps, opts)
    elif args.model == "bp_lip":
        lows = _parse_floats(args.low)
        highs = _parse_floats(args.high)
        pset = PriorSet.from_box(lows, highs)
        values = (
            _parse_floats(args.values)
            if args.values
            else np.arange(lows.size, dtype=float)
        )
        alpha = Alphabet([str(i) for i in range(lows.size)], values)
        result = solve_bp_lip_mimo(pset, alpha, args.eps, opts)
    else:
        raise _UsageError(f"unknown model {args.model!r}")
    payload = {
        "mechanism": [[float(f"{v:.12g}") for v in row] for row in result.mechanism.matrix],
        "objective": result.objective,
        "feasible": result.feasible,
        "iterations": result.iterations,
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


def _make_sim_config(args, family: str, grid: tuple, seed: int) -> SimConfig:
    if args.prior:
        prior = Prior(_parse_floats(args.prior))
        priors = make_population(args.n, prior.d, seed, shared_prior=prior)
    elif args.dataset:
        prior = empirical_prior(load_dataset(args.dataset))
        priors = make_population(args.n, prior.d, seed, shared_prior=prior)
    else:
        priors = make_population(args.n, args.d, seed)
    d = priors.shape[1]
    kwargs = {}
    if family == "bp_lip":
        lows = priors.min(axis=0)
        highs = priors.max(axis=0)
        kwargs["prior_set"] = PriorSet.from_box(lows, highs)
    if family in ("latent_binary", "latent_mimo"):
        kwargs["latent"] = _latent_from_args(args)
    return SimConfig(
        priors=priors,
        values=np.arange(d, dtype=float),
        family=family,
        application=args.application,
        epsilon_grid=grid,
        trials=args.trials,
        seed=seed,
        **kwargs,
    )


_SWEEP_FIELDS = ("analytic_mse", "empirical_mse", "root_avg_mse")


def _cmd_sweep(args) -> int:
    seed = _resolve_seed(args)
    grid = _parse_grid(args.eps)
    families = args.family or ["lip"]
    results = {}
    for family in families:
        config = _make_sim_config(args, family, grid, seed)
        results[family] = run_simulation(config)
    if len(families) == 1:
        from .dataio import export_tradeoff

        points = results[families[0]]
        if args.out:
            export_tradeoff(points, args.out, fmt="csv")
        else:
            header = "epsilon,analytic_mse,empirical_mse,root_avg_mse,trials"
            lines = [header] + [
                f"{p.epsilon:.6g},{p.analytic_mse:.6g},{p.empirical_mse:.6g},"
                f"{p.root_avg_mse:.6g},{p.trials}"
                for p in points
            ]
            _emit("\n".join(lines) + "\n", None)
        return 0
    header = ["epsilon"]
    for family in families:
        header.extend(f"{family}_{f}" for f in _SWEEP_FIELDS)
    header.append("trials")
    lines = [",".join(header)]
    for i, eps in enumerate(sorted(grid)):
        row = [f"{eps:.6g}"]
        for family in families:
            pt = results[family][i]
            row.extend(
                f"{getattr(pt, f):.6g}" for f in _SWEEP_FIELDS
            )
        lines.append(",".join(row + [str(args.trials)]))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    config = _make_sim_config(args, args.family[0] if args.family else "lip", (args.eps,), seed)
    pt = run_simulation(config)[0]
    payload = {
        "epsilon": pt.epsilon,
        "analytic_mse": pt.analytic_mse,
        "empirical_mse": pt.empirical_mse,
        "root_avg_mse": pt.root_avg_mse,
        "trials": pt.trials,
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


def _cmd_aggregate(args) -> int:
    seed = _resolve_seed(args)
    ds = load_dataset(args.dataset)
    prior = empirical_prior(ds)
    xs = ds.x_indices()
    d = ds.alphabet.d
    if args.family == "lip":
        mech = optimal_lip(prior, args.eps)
    elif args.family in ("ldp", "wc_lip"):
        mech = optimal_ldp(d, args.eps)
    elif args.family == "latent_binary":
        mech = optimal_latent_binary(empirical_conditional(ds), args.eps)
    else:
        raise _UsageError(f"unsupported family {args.family!r} for aggregate")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(3,)))
    users = [
        UserConfig(prior=prior, mech=mech, alphabet=ds.alphabet) for _ in xs
    ]
    ys = [perturb(mech, int(x), rng) for x in xs]
    if args.application == "histogram":
        est = histogram_estimate(users, ys)
        truth = np.bincount(xs, minlength=d).astype(float)
        payload = {
            "application": "histogram",
            "estimate": [float(f"{v:.6g}") for v in est],
            "truth": [float(v) for v in truth],
            "squared_error": float(((est - truth) ** 2).sum()),
        }
    else:
        est = weighted_sum_estimate(users, ys)
        truth = float(ds.alphabet.values[xs].sum())
        payload = {
            "application": "weighted_sum",
            "estimate": est,
            "truth": truth,
            "squared_error": (est - truth) ** 2,
        }
    payload["analytic_mse"] = float(sum(mse_analytic(u) for u in users))
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


def _apply_config_file(argv: list[str]) -> list[str]:
    """Turn a flat key=value file into trailing flags; explicit flags win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError:
        raise _UsageError("--config needs a path") from None
    argv = argv[:idx] + argv[idx + 2 :]
    extra = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise _UsageError(f"config line {line!r} is not key=value")
        key, value = line.split("=", 1)
        flag = "--" + key.strip().replace("_", "-")
        if flag not in argv:
            extra.extend([flag, value.strip()])
    return argv + extra


def _build_parser() -> _Parser:
    parser = _Parser(prog="lipagg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeded=False):
        p.add_argument("--out", default=None)
        p.add_argument("--config", default=None, help="flat key=value defaults file")
        if seeded:
            p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("mechanism", help="print an optimal channel")
    p.add_argument("--family", required=True)
    p.add_argument("--prior")
    p.add_argument("--dataset")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    common(p)
    p.set_defaults(func=_cmd_mechanism)

    p = sub.add_parser("audit", help="effective privacy report as JSON")
    p.add_argument("--prior")
    p.add_argument("--dataset")
    p.add_argument("--mech", default=None, help="'identity' or use --mech-file/--family")
    p.add_argument("--mech-file", dest="mech_file", default=None)
    p.add_argument("--family", default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    common(p)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("solve", help="numeric channel optimization")
    p.add_argument("--model", required=True, choices=["latent", "bp_lip"])
    p.add_argument("--dataset")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--low")
    p.add_argument("--high")
    p.add_argument("--values")
    common(p, seeded=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sweep", help="epsilon-grid tradeoff curves")
    p.add_argument("--family", action="append")
    p.add_argument("--eps", required=True, help="start:stop:step or one value")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--prior")
    p.add_argument("--dataset")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--application", default="weighted_sum")
    common(p, seeded=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("simulate", help="single-epsilon Monte Carlo point")
    p.add_argument("--family", action="append")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--prior")
    p.add_argument("--dataset")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--application", default="weighted_sum")
    common(p, seeded=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("aggregate", help="run estimators over a dataset file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--family", default="lip")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--application", default="histogram")
    common(p, seeded=True)
    p.set_defaults(func=_cmd_aggregate)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _apply_config_file(argv)
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure, distinct exit code
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
