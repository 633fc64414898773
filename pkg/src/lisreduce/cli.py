"""Command line interface.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io
from .errors import ConfigError, NumericalError
from .experiment import (
    SEED_ENV,
    ExperimentConfig,
    base_seed,
    emit_report,
    pod_snapshot_sweep,
    role_rng,
    run_experiment,
)
from .fem import build_model
from .forward import LinearForwardProblem, ObservationOperator, draw_observation_indices, generate_data
from .gaussian import GaussianBelief, exact_posterior
from .reduction import (
    collect_snapshots,
    lis_basis,
    lis_mr_posterior,
    olr_posterior,
    pod_basis,
    pod_posterior,
    reduce_petrov_galerkin,
)

log = logging.getLogger("lisreduce")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _problem_args(p, with_snapshots=False):
    p.add_argument("--model", choices=("bar", "tunnel"), default="bar")
    p.add_argument("--n", type=int, default=None, help="number of elements")
    p.add_argument("--m", type=int, default=10, help="number of observations")
    p.add_argument("--noise-var", type=float, default=1e-5)
    p.add_argument("--seed-locations", type=int, default=None)
    if with_snapshots:
        p.add_argument("--snapshots", type=int, default=10, help="POD snapshot count")
        p.add_argument("--seed-snapshots", type=int, default=None)


def _seed(value):
    return base_seed() if value is None else value


def _problem(args, bundle=None, indices=None):
    bundle = build_model(args.model, args.n) if bundle is None else bundle
    if indices is None:
        obs = draw_observation_indices(bundle.system, args.m, role_rng(_seed(args.seed_locations), "locations"))
    else:
        obs = ObservationOperator(tuple(indices))
    noise = GaussianBelief.isotropic(obs.m, args.noise_var)
    return bundle, LinearForwardProblem(bundle.system, obs, bundle.prior, noise)


def _basis(kind, prob, r, args):
    if kind in ("lis", "olr"):
        return lis_basis(prob.G, prob.prior.sqrt_factor, prob.noise.sqrt_factor, r)
    U = collect_snapshots(prob, args.snapshots, role_rng(_seed(args.seed_snapshots), "snapshots"))
    return pod_basis(U, r)


def cmd_build_model(args):
    bundle = build_model(args.model, args.n)
    if args.out:
        io.save_model(bundle, args.out)
        print(f"wrote {args.out}")
    if args.export_mm:
        K = bundle.system.K
        paths = io.export_matrix_market(
            args.export_mm,
            {
                "K": K,
                "prior_sqrt": bundle.prior.sqrt_factor,
                "prior_mean": bundle.prior.mean,
                "load_map": bundle.load_map,
            },
            sparse_names=("K", "load_map"),
        )
        print("\n".join(f"wrote {p}" for p in paths))
    w = np.linalg.eigvalsh(bundle.system.K)
    print(
        json.dumps(
            {
                "model": bundle.name,
                "d": bundle.d,
                "n_elements": bundle.n_elements,
                "prior_rank_bound": bundle.prior.sqrt_factor.shape[1],
                "K_condition": float(w[-1] / w[0]),
            }
        )
    )
    return EXIT_OK


def cmd_basis(args):
    _, prob = _problem(args)
    basis = _basis(args.kind, prob, args.r, args)
    meta = {"model": args.model, "observed_indices": list(prob.obs.observed_indices)}
    if args.out:
        io.save_basis(basis, args.out, meta)
        print(f"wrote {args.out}")
    if args.reduced_out:
        io.save_reduced(reduce_petrov_galerkin(prob, basis), args.reduced_out, meta)
        print(f"wrote {args.reduced_out}")
    if args.export_mm:
        mats = {"V": basis.V, "W": basis.W, "delta": basis.delta, "C": prob.C, "G": prob.G}
        io.export_matrix_market(args.export_mm, mats)
    print(json.dumps({"kind": basis.kind, "r": basis.r, "delta": basis.delta.tolist(), **meta}))
    return EXIT_OK


def cmd_generate_data(args):
    _, prob = _problem(args)
    rng = role_rng(_seed(args.seed_data), "data")
    draws = [generate_data(prob, rng) for _ in range(args.count)]
    payload = {
        "model": args.model,
        "n": args.n,
        "noise_var": args.noise_var,
        "observed_indices": list(prob.obs.observed_indices),
        "ys": [y.tolist() for _, y in draws],
        "f_true": [f.tolist() for f, _ in draws],
    }
    _write_json(payload, args.out)
    return EXIT_OK


def cmd_solve(args):
    try:
        with open(args.data) as fh:
            data = json.load(fh)
        ys = data["ys"] if "ys" in data else [data["y"]]
        indices = data["observed_indices"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read data file {args.data}: {exc}") from exc
    for key in ("model", "n", "noise_var"):
        if key in data:
            setattr(args, key, data[key])
    _, prob = _problem(args, indices=indices)

    if args.method == "exact":
        solve = lambda y: exact_posterior(prob.prior, prob.G, prob.noise, y)  # noqa: E731
    else:
        basis = _basis(args.method, prob, args.r, args)
        if args.method == "olr":
            solve = lambda y: olr_posterior(prob, basis, y)  # noqa: E731
        else:
            red = reduce_petrov_galerkin(prob, basis, "auto" if args.method == "pod" else args.stiffness)
            post_fn = lis_mr_posterior if args.method == "lis" else pod_posterior
            solve = lambda y: post_fn(red, y, lift=args.lift)  # noqa: E731

    posts = [solve(np.asarray(y, dtype=float)) for y in ys]
    payload = {
        "method": args.method,
        "r": args.r,
        "observed_indices": list(prob.obs.observed_indices),
        "means": [p.mean.tolist() for p in posts],
        "variances": [p.downdate.variances().tolist() for p in posts],
    }
    _write_json(payload, args.out)
    return EXIT_OK


def _config(args):
    cfg_dict = {}
    if args.config:
        cfg_dict = ExperimentConfig.load(args.config).to_dict()
    overrides = {
        "model": args.model,
        "n_rep": args.n_rep,
        "ranks": args.ranks,
        "methods": args.methods,
        "pod_snapshots": args.snapshots,
        "workers": args.workers,
        "stiffness": args.stiffness,
    }
    cfg_dict.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_timing:
        cfg_dict["timing"] = False
    seeds = dict(cfg_dict.get("seeds", {}))
    for role in ("locations", "data", "snapshots"):
        value = getattr(args, f"seed_{role}")
        if value is not None:
            seeds[role] = value
    cfg_dict["seeds"] = seeds
    return ExperimentConfig.from_dict(cfg_dict)


def cmd_experiment(args):
    cfg = _config(args)
    report = run_experiment(cfg)
    _emit(report, args, f"{cfg.model}_errors")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _config(args)
    report = pod_snapshot_sweep(cfg, args.N, test_size=args.test_size, posterior=not args.no_posterior)
    _emit(report, args, f"{cfg.model}_pod_sweep")
    return EXIT_OK


def _emit(report, args, stem):
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{stem}.{args.format}")
    emit_report(report, path, args.format)
    print(f"wrote {path}")
    for row in report.rows:
        print("  " + "  ".join(f"{c}={getattr(row, c)}" for c in report.COLUMNS))


def _write_json(payload, path):
    text = json.dumps(payload, indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {path}")
    else:
        print(text)


def _experiment_args(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--model", choices=("bar", "tunnel"))
    p.add_argument("--n-rep", type=int)
    p.add_argument("--ranks", type=int, nargs="+")
    p.add_argument("--methods", nargs="+", choices=("lis", "pod", "olr"))
    p.add_argument("--snapshots", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--stiffness", choices=("auto", "adjoint", "direct"))
    p.add_argument("--seed-locations", type=int)
    p.add_argument("--seed-data", type=int)
    p.add_argument("--seed-snapshots", type=int)
    p.add_argument("--no-timing", action="store_true", help="omit timings for byte-stable output")
    p.add_argument("--out", default="results")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser():
    parser = argparse.ArgumentParser(prog="lisreduce", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--seed", type=int, help="global fallback seed (overrides LISREDUCE_SEED)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-model", help="assemble a testbed and report its size")
    p.add_argument("model", choices=("bar", "tunnel"))
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", help="write the model container (.npz)")
    p.add_argument("--export-mm", metavar="DIR", help="write K and prior factors as Matrix Market")
    p.set_defaults(func=cmd_build_model)

    p = sub.add_parser("basis", help="compute an LIS or POD basis")
    p.add_argument("kind", choices=("lis", "pod"))
    p.add_argument("--r", type=int, required=True)
    _problem_args(p, with_snapshots=True)
    p.add_argument("--out", help="write the basis container (.npz)")
    p.add_argument("--reduced-out", help="write the reduced problem container (.npz)")
    p.add_argument("--export-mm", metavar="DIR")
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("generate-data", help="draw synthetic observations")
    _problem_args(p)
    p.add_argument("--seed-data", type=int, default=None)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("solve", help="posterior for observed data")
    p.add_argument("--method", choices=("lis", "pod", "olr", "exact"), required=True)
    p.add_argument("--r", type=int, default=10)
    p.add_argument("--data", required=True, help="JSON file from generate-data")
    p.add_argument("--lift", choices=("mapped", "trial"), default="mapped")
    p.add_argument("--stiffness", choices=("auto", "adjoint", "direct"), default="auto",
                   help="evaluation of W^T K V for LIS bases")
    _problem_args(p, with_snapshots=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiment", help="replicated method comparison")
    _experiment_args(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("sweep", help="POD snapshot-count study")
    _experiment_args(p)
    p.add_argument("--N", type=int, nargs="+", default=[10, 20, 50, 100, 200, 500, 1000])
    p.add_argument("--test-size", type=int, default=200)
    p.add_argument("--no-posterior", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.seed is not None:
        os.environ[SEED_ENV] = str(args.seed)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"lisreduce: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"lisreduce: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"lisreduce: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
