"""Command-line front end: generate / solve / sweep / plotdata.

Exit codes: 0 success, 2 configuration error, 3 numerical-failure budget
exceeded. The environment variable PERMSBL_SEED, when set, overrides the
master seed of a sweep spec.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import (
    AnchorError,
    ConfigError,
    DegenerateSignalError,
    NumericalError,
    SizeGuardError,
    UnsupportedParameterError,
)
from .harness import (
    SweepSpec,
    _score,
    emit_plot_data,
    read_csv,
    run_sweep,
    write_csv,
)
from .model import ProblemConfig, gen_problem, load_instance, save_instance
from .pksbl import run_pksbl
from .pmsbl import run_pmsbl
from .somp import somp_solve

_CONFIG_ERRORS = (
    ConfigError,
    DegenerateSignalError,
    AnchorError,
    SizeGuardError,
    UnsupportedParameterError,
)


def _cmd_generate(args):
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = ProblemConfig(**json.load(fh))
    save_instance(gen_problem(cfg), args.out)
    return 0


def _resolve_alg(name, shared_flag):
    if name == "pmsbl-shared":
        return "pmsbl", True
    if name == "pmsbl-indep":
        return "pmsbl", False
    if name in ("pmsbl", "pksbl", "somp"):
        return name, shared_flag
    raise ConfigError(f"unknown algorithm {name!r}")


def _cmd_solve(args):
    inst = load_instance(args.infile)
    alg, shared = _resolve_alg(args.alg, args.shared_perm)
    phi = inst.phi.entries
    anchor_maps = inst.anchor_maps()
    sigma2 = inst.noise.sigma2
    rho = inst.config.rho if args.rho is None else args.rho
    out = {"algorithm": args.alg, "shared_perm": shared}
    if alg == "pmsbl":
        x_hat, state = run_pmsbl(
            inst.y,
            phi,
            anchor_maps,
            sigma2=sigma2,
            shared_perm=shared,
            max_iter=args.max_iter,
            tol=args.tol,
        )
        perms = state.perms
        out.update(
            iters=state.iters,
            converged=state.converged,
            reason=state.reason,
            log_evidence=float(state.log_evidence_trace[-1]),
        )
    elif alg == "pksbl":
        x_hat, state = run_pksbl(
            inst.y,
            phi,
            anchor_maps,
            rho=rho,
            sigma2=sigma2,
            shared_perm=shared,
            max_iter=args.max_iter,
            tol=args.tol,
        )
        perms = state.perms
        out.update(
            iters=state.iters,
            converged=state.converged,
            reason=state.reason,
            log_evidence=float(state.log_evidence_trace[-1]),
        )
    else:
        res = somp_solve(
            inst.y, phi, anchor_maps, k_max=inst.config.K, shared_perm=shared
        )
        x_hat, perms = res.x_hat, res.perms_est
        out.update(iters=0, support_est=[int(i) for i in res.support_est])
    nmse, nmse_db, exact, row_acc = _score(inst, x_hat, perms)
    out.update(
        x_hat=np.asarray(x_hat).tolist(),
        perms=[p.map.tolist() for p in perms],
        nmse=nmse,
        nmse_db=nmse_db,
        perm_exact=bool(exact),
        row_accuracy=row_acc,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(out, fh)
    return 0


def _cmd_sweep(args):
    with open(args.spec, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    master = raw.get("master_seed", 0)
    env_seed = os.environ.get("PERMSBL_SEED")
    if env_seed is not None:
        master = int(env_seed)
    spec = SweepSpec(
        base=ProblemConfig(**raw["base"]),
        axis=raw["axis"],
        values=tuple(raw["values"]),
        algorithms=tuple(raw["algorithms"]),
        trials=int(raw["trials"]),
        master_seed=int(master),
    )
    rows = run_sweep(spec, workers=args.workers)
    write_csv(rows, args.out)
    return 0


def _cmd_plotdata(args):
    emit_plot_data(read_csv(args.infile), args.out)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="permsbl",
        description="Row-sparse recovery with unknown sensing-row permutations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a synthetic instance to JSON")
    p.add_argument("--config", required=True, help="JSON file of ProblemConfig fields")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("solve", help="solve a stored instance")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument(
        "--alg",
        required=True,
        help="pmsbl | pksbl | somp (or pmsbl-shared / pmsbl-indep)",
    )
    p.add_argument("--shared-perm", action="store_true")
    p.add_argument("--rho", type=float, default=None, help="AR coefficient for pksbl")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sweep", help="run a Monte Carlo sweep to CSV")
    p.add_argument("--spec", required=True, help="JSON SweepSpec")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("plotdata", help="split a sweep CSV into per-curve .dat files")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_plotdata)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
