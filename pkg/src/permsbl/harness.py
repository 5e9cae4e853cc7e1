"""Seeded Monte Carlo experiment runner: MSE and permutation-recovery sweeps.

A trial generates one instance from ``(config, trial_seed)``, solves it with
the named algorithm under perfect knowledge of sigma^2, and scores normalized
MSE plus exact/row-level permutation recovery. Sweeps vary one named axis
(snr_db, anchor_fraction, or M), reuse the same per-trial seeds for every axis
value and algorithm (common random numbers), and aggregate in a fixed order so
the emitted CSV is byte-identical at any worker count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .model import ProblemConfig, gen_problem, trial_seed
from .pksbl import run_pksbl
from .pmsbl import run_pmsbl
from .somp import somp_solve

__all__ = [
    "ALGORITHMS",
    "TrialResult",
    "SweepSpec",
    "SweepRow",
    "run_trial",
    "run_sweep",
    "write_csv",
    "read_csv",
    "emit_plot_data",
]

ALGORITHMS = ("pmsbl-shared", "pmsbl-indep", "pksbl", "somp")
SWEEP_AXES = ("snr_db", "anchor_fraction", "M")
CSV_HEADER = (
    "axis",
    "algorithm",
    "value",
    "nmse_db",
    "success_rate",
    "row_accuracy",
    "trials",
    "failures",
)


@dataclass(frozen=True)
class TrialResult:
    """Per-trial scores: NMSE (plain and dB), permutation recovery, and cost."""

    nmse: float
    nmse_db: float
    perm_exact: bool
    row_accuracy: float
    iters: int
    wall_time: float


@dataclass(frozen=True)
class SweepSpec:
    """One experiment grid: a base config, a swept axis, algorithms, and trials."""

    base: ProblemConfig
    axis: str
    values: tuple
    algorithms: tuple
    trials: int
    master_seed: int = 0

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        vals = tuple(self.values)
        if not vals:
            raise ConfigError("values must be non-empty")
        if any(not math.isfinite(float(v)) for v in vals):
            raise ConfigError("axis values must be finite")
        if list(vals) != sorted(vals):
            raise ConfigError("axis values must be sorted ascending")
        object.__setattr__(self, "values", vals)
        algs = tuple(self.algorithms)
        bad = [a for a in algs if a not in ALGORITHMS]
        if bad or not algs:
            raise ConfigError(f"algorithms must be a non-empty subset of {ALGORITHMS}")
        object.__setattr__(self, "algorithms", algs)
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")


@dataclass(frozen=True)
class SweepRow:
    """Aggregated results for one (axis value, algorithm) cell."""

    axis: str
    algorithm: str
    value: float
    nmse_db: float
    success_rate: float
    row_accuracy: float
    trials: int
    failures: int


def _config_at(base, axis, value):
    if axis == "M":
        return dataclasses.replace(base, M=int(value))
    return dataclasses.replace(base, **{axis: float(value)})


def _score(inst, x_hat, perms_est):
    x = inst.x_true.entries
    err = float(np.sum((np.asarray(x_hat) - x) ** 2))
    sig = float(np.sum(x**2))
    nmse = err / sig if sig > 0 else math.inf
    nmse_db = 10.0 * math.log10(nmse) if nmse > 0 else -math.inf
    anchors = inst.anchors
    free = [i for i in range(inst.config.N) if i not in anchors]
    exact = all(
        np.array_equal(est.map, tru.map)
        for est, tru in zip(perms_est, inst.perms_true)
    )
    if free:
        hits = sum(
            int(np.count_nonzero(est.map[free] == tru.map[free]))
            for est, tru in zip(perms_est, inst.perms_true)
        )
        row_acc = hits / (len(free) * len(perms_est))
    else:
        row_acc = 1.0
    return nmse, nmse_db, exact, row_acc


def run_trial(config, algorithm, seed):
    """Generate, solve, and score one instance; deterministic in its arguments.

    Numerical failures inside a solver propagate as NumericalError; sweeps
    catch them and count the trial as failed.
    """
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    inst = gen_problem(dataclasses.replace(config, seed=int(seed)))
    phi = inst.phi.entries
    anchor_maps = inst.anchor_maps()
    sigma2 = inst.noise.sigma2
    t0 = time.perf_counter()
    if algorithm == "pmsbl-shared":
        x_hat, state = run_pmsbl(
            inst.y, phi, anchor_maps, sigma2=sigma2, shared_perm=True
        )
        perms_est, iters = state.perms, state.iters
    elif algorithm == "pmsbl-indep":
        x_hat, state = run_pmsbl(
            inst.y, phi, anchor_maps, sigma2=sigma2, shared_perm=False
        )
        perms_est, iters = state.perms, state.iters
    elif algorithm == "pksbl":
        x_hat, state = run_pksbl(
            inst.y,
            phi,
            anchor_maps,
            rho=inst.config.rho,
            sigma2=sigma2,
            shared_perm=inst.config.shared_perm,
        )
        perms_est, iters = state.perms, state.iters
    else:  # somp
        res = somp_solve(
            inst.y,
            phi,
            anchor_maps,
            k_max=inst.config.K,
            shared_perm=inst.config.shared_perm,
        )
        x_hat, perms_est, iters = res.x_hat, res.perms_est, 0
    wall = time.perf_counter() - t0
    nmse, nmse_db, exact, row_acc = _score(inst, x_hat, perms_est)
    return TrialResult(
        nmse=nmse,
        nmse_db=nmse_db,
        perm_exact=exact,
        row_accuracy=row_acc,
        iters=iters,
        wall_time=wall,
    )


def _trial_cell(args):
    """Worker body: returns ('ok', TrialResult) or ('failed', message)."""
    config, algorithm, seed = args
    try:
        return "ok", run_trial(config, algorithm, seed)
    except NumericalError as exc:
        return "failed", str(exc)


def run_sweep(spec, workers=1, failure_budget=0.01):
    """Run the grid and aggregate per (axis value, algorithm).

    Trials are independent and may run in a process pool; aggregation is
    indexed by (value, algorithm, trial) and reduced in that fixed order, so
    results do not depend on ``workers``. Aborts with NumericalError if more
    than ``failure_budget`` of all trials fail.
    """
    seeds = [trial_seed(spec.master_seed, t) for t in range(spec.trials)]
    cells = [
        (vi, alg, t)
        for vi in range(len(spec.values))
        for alg in spec.algorithms
        for t in range(spec.trials)
    ]
    jobs = [
        (_config_at(spec.base, spec.axis, spec.values[vi]), alg, seeds[t])
        for vi, alg, t in cells
    ]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_trial_cell, jobs, chunksize=1))
    else:
        outcomes = [_trial_cell(job) for job in jobs]

    by_cell = {}
    n_failed = 0
    for (vi, alg, t), (status, payload) in zip(cells, outcomes):
        bucket = by_cell.setdefault((vi, alg), {"ok": [], "failed": 0})
        if status == "ok":
            bucket["ok"].append(payload)
        else:
            bucket["failed"] += 1
            n_failed += 1
    if n_failed > failure_budget * len(cells):
        raise NumericalError(
            f"{n_failed} of {len(cells)} trials failed numerically "
            f"(budget {failure_budget:.0%})"
        )

    rows = []
    for vi, value in enumerate(spec.values):
        for alg in spec.algorithms:
            bucket = by_cell[(vi, alg)]
            ok = bucket["ok"]
            if ok:
                nmse_db = float(np.mean([r.nmse_db for r in ok]))
                success = float(np.mean([r.perm_exact for r in ok]))
                row_acc = float(np.mean([r.row_accuracy for r in ok]))
            else:
                nmse_db = math.nan
                success = math.nan
                row_acc = math.nan
            rows.append(
                SweepRow(
                    axis=spec.axis,
                    algorithm=alg,
                    value=float(value),
                    nmse_db=nmse_db,
                    success_rate=success,
                    row_accuracy=row_acc,
                    trials=len(ok),
                    failures=bucket["failed"],
                )
            )
    return rows


def write_csv(rows, path):
    """CSV with the documented header; floats use repr so parsing round-trips."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r.axis,
                    r.algorithm,
                    repr(float(r.value)),
                    repr(float(r.nmse_db)),
                    repr(float(r.success_rate)),
                    repr(float(r.row_accuracy)),
                    r.trials,
                    r.failures,
                ]
            )


def read_csv(path):
    """Parse a file written by :func:`write_csv` back into SweepRow objects."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ConfigError(f"unexpected CSV header {header!r}")
        for rec in reader:
            rows.append(
                SweepRow(
                    axis=rec[0],
                    algorithm=rec[1],
                    value=float(rec[2]),
                    nmse_db=float(rec[3]),
                    success_rate=float(rec[4]),
                    row_accuracy=float(rec[5]),
                    trials=int(rec[6]),
                    failures=int(rec[7]),
                )
            )
    return rows


def emit_plot_data(rows, out_dir):
    """One whitespace-delimited .dat file per (axis, algorithm) curve.

    Column order matches the CSV tail: value nmse_db success_rate row_accuracy
    trials failures. Files are byte-stable for identical tables and load
    directly in gnuplot or numpy.loadtxt.
    """
    os.makedirs(out_dir, exist_ok=True)
    curves = {}
    for r in rows:
        curves.setdefault((r.axis, r.algorithm), []).append(r)
    paths = []
    for (axis, alg), items in sorted(curves.items()):
        path = os.path.join(out_dir, f"{axis}_{alg}.dat")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# axis: {axis}  algorithm: {alg}\n")
            fh.write("# value nmse_db success_rate row_accuracy trials failures\n")
            for r in items:
                fh.write(
                    f"{r.value!r} {r.nmse_db!r} {r.success_rate!r} "
                    f"{r.row_accuracy!r} {r.trials} {r.failures}\n"
                )
        paths.append(path)
    return paths
