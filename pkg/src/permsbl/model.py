"""Data model and synthetic generator for shuffled-row multiple-measurement sparse recovery.

Observation model, column by column:

    y_m = P_m Phi x_m + n_m,        n_m ~ N(0, sigma^2 I_N)

where Phi is a known N x L (N < L) Gaussian sensing matrix, the columns x_m
share one K-row support, and each P_m is an unknown permutation of the sensing
rows. Correlated columns follow a stationary first-order autoregression

    x_{m+1} = rho x_m + u_{m+1},    u_{m+1} ~ N(0, (1 - rho^2) I) on the support,

so every active entry keeps unit marginal variance for any rho in [0, 1].

Permutations are stored as index maps with the convention that row ``i`` of
the permuted sensing matrix is source row ``map[i]`` of Phi, i.e.
``(P v)[i] = v[map[i]]``. All modules share this convention.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import AnchorError, ConfigError, DegenerateSignalError

__all__ = [
    "ProblemConfig",
    "MeasurementMatrix",
    "SignalMatrix",
    "PermutationMap",
    "NoiseModel",
    "ProblemInstance",
    "gen_problem",
    "sigma_from_snr",
    "apply_perm",
    "trial_seed",
    "instance_to_json",
    "instance_from_json",
    "save_instance",
    "load_instance",
]


@dataclass(frozen=True)
class ProblemConfig:
    """Dimensions and generation parameters of one synthetic problem.

    Attributes
    ----------
    L, N, M, K : signal dimension, observation dimension, number of columns,
        row sparsity. Requires 0 < K <= N < L and M >= 1.
    rho : AR coefficient of the column process, in [0, 1].
    snr_db : target signal-to-noise ratio in decibels.
    anchor_fraction : fraction of permutation rows known a priori, in [0, 1].
    shared_perm : if True all M columns share a single permutation.
    seed : nonnegative 64-bit reproducibility seed.
    """

    L: int
    N: int
    M: int
    K: int
    rho: float = 0.0
    snr_db: float = 60.0
    anchor_fraction: float = 0.0
    shared_perm: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.K <= self.N < self.L:
            raise ConfigError(
                f"need 0 < K <= N < L, got K={self.K}, N={self.N}, L={self.L}"
            )
        if self.M < 1:
            raise ConfigError(f"need M >= 1, got M={self.M}")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"need 0 <= rho <= 1, got rho={self.rho}")
        if not 0.0 <= self.anchor_fraction <= 1.0:
            raise ConfigError(
                f"need 0 <= anchor_fraction <= 1, got {self.anchor_fraction}"
            )
        if not math.isfinite(self.snr_db):
            raise ConfigError(f"snr_db must be finite, got {self.snr_db}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a nonnegative 64-bit int, got {self.seed}")

    @property
    def n_anchor(self):
        """ceil(anchor_fraction * N), guarded against float slop like 0.1 * 30."""
        return min(self.N, int(math.ceil(self.anchor_fraction * self.N - 1e-9)))


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MeasurementMatrix:
    """Sensing matrix; ``per_column`` optionally holds one N x L matrix per column."""

    entries: np.ndarray
    per_column: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", _readonly(self.entries))
        if self.entries.ndim != 2:
            raise ConfigError("measurement matrix must be 2-D")
        if self.per_column is not None:
            cols = tuple(_readonly(p) for p in self.per_column)
            for p in cols:
                if p.shape != self.entries.shape:
                    raise ConfigError("per-column matrices must all be N x L")
            object.__setattr__(self, "per_column", cols)

    @property
    def shape(self):
        return self.entries.shape

    def for_column(self, m):
        """The sensing matrix acting on column m."""
        if self.per_column is None:
            return self.entries
        return self.per_column[m]


@dataclass(frozen=True)
class SignalMatrix:
    """L x M row-sparse signal; every column's nonzeros lie on ``support``."""

    entries: np.ndarray
    support: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", _readonly(self.entries))
        sup = tuple(sorted(int(i) for i in self.support))
        object.__setattr__(self, "support", sup)
        L = self.entries.shape[0]
        if len(set(sup)) != len(sup) or (sup and not 0 <= sup[0] <= sup[-1] < L):
            raise ConfigError("support indices must be distinct rows of the signal")
        off = np.ones(L, dtype=bool)
        off[list(sup)] = False
        if np.any(self.entries[off] != 0.0):
            raise ConfigError("signal has nonzeros off the declared support")


@dataclass(frozen=True, eq=False)
class PermutationMap:
    """Bijection p on observation indices {0..N-1}, with a known (anchored) subset.

    Row ``i`` of the permuted sensing matrix equals source row ``p[i]``;
    ``anchors`` lists observation indices whose assignment is known a priori.
    Equality compares the maps only.
    """

    map: np.ndarray
    anchors: frozenset = frozenset()

    def __post_init__(self):
        p = np.ascontiguousarray(self.map, dtype=np.intp)
        n = p.shape[0]
        if p.ndim != 1 or not np.array_equal(np.sort(p), np.arange(n)):
            raise ConfigError("permutation map must be a bijection on 0..N-1")
        p.setflags(write=False)
        object.__setattr__(self, "map", p)
        anchors = frozenset(int(i) for i in self.anchors)
        if any(not 0 <= i < n for i in anchors):
            raise AnchorError("anchor indices out of range")
        object.__setattr__(self, "anchors", anchors)

    @property
    def n(self):
        return self.map.shape[0]

    def apply(self, v):
        """Apply the permutation: out[i] = v[p[i]] (rows, for 2-D input)."""
        return np.asarray(v)[self.map, ...]

    def inverse(self):
        inv = np.argsort(self.map)
        return PermutationMap(inv, frozenset(int(self.map[i]) for i in self.anchors))

    def anchor_map(self):
        """The known assignments as a dict {observation index: source index}."""
        return {int(i): int(self.map[i]) for i in sorted(self.anchors)}

    def __eq__(self, other):
        if not isinstance(other, PermutationMap):
            return NotImplemented
        return np.array_equal(self.map, other.map)

    def __hash__(self):
        return hash(self.map.tobytes())


@dataclass(frozen=True)
class NoiseModel:
    """Noise variance, plus the drawn realization for generated instances."""

    sigma2: float
    realization: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ConfigError(f"sigma2 must be nonnegative, got {self.sigma2}")
        if self.realization is not None:
            object.__setattr__(self, "realization", _readonly(self.realization))


@dataclass(frozen=True)
class ProblemInstance:
    """A generated problem: y[:, m] = (Phi x_m)[p_m] + n_m holds exactly."""

    phi: MeasurementMatrix
    x_true: SignalMatrix
    perms_true: tuple
    y: np.ndarray
    noise: NoiseModel
    config: ProblemConfig

    def __post_init__(self):
        object.__setattr__(self, "y", _readonly(self.y))
        object.__setattr__(self, "perms_true", tuple(self.perms_true))

    @property
    def anchors(self):
        return self.perms_true[0].anchors

    def anchor_maps(self):
        """Known partial assignments, one dict per column."""
        return [p.anchor_map() for p in self.perms_true]


def apply_perm(perm, v):
    """out[i] = v[perm.map[i]]; composing with ``perm.inverse()`` restores v."""
    return perm.apply(v)


def sigma_from_snr(snr_db, phi, x):
    """Noise variance hitting a target SNR for the clean signal Phi X.

    sigma2 = ||Phi X||_F^2 / (N * M * 10^(snr_db/10)). The permutations do not
    enter: they only reorder rows, leaving the Frobenius norm unchanged.
    """
    if not math.isfinite(snr_db):
        raise ConfigError(f"snr_db must be finite, got {snr_db}")
    entries = x.entries if isinstance(x, SignalMatrix) else np.asarray(x, dtype=float)
    if entries.ndim == 1:
        entries = entries[:, None]
    if isinstance(phi, MeasurementMatrix):
        clean = np.column_stack(
            [phi.for_column(m) @ entries[:, m] for m in range(entries.shape[1])]
        )
    else:
        clean = np.asarray(phi, dtype=float) @ entries
    fro2 = float(np.sum(clean**2))
    if fro2 == 0.0:
        raise DegenerateSignalError("Phi X has zero energy; SNR target is undefined")
    n, m = clean.shape
    return fro2 / (n * m * 10.0 ** (snr_db / 10.0))


def trial_seed(master_seed, trial_index):
    """Per-trial seed mixed from (master_seed, trial_index).

    Uses numpy's SeedSequence entropy spawning, so streams are independent and
    do not depend on the order in which trials execute.
    """
    seq = np.random.SeedSequence([int(master_seed), int(trial_index)])
    return int(seq.generate_state(1, np.uint64)[0])


def gen_problem(config):
    """Draw a synthetic instance; a pure function of ``config`` (incl. seed).

    Draw order: Phi, support, signal columns, permutation(s), noise. The
    support is uniform over size-K subsets; uncorrelated columns (rho = 0) get
    i.i.d. standard-normal active entries, correlated ones follow the
    stationary AR recursion restricted to the support. Anchors are the
    ``ceil(anchor_fraction * N)`` lowest observation indices.
    """
    cfg = config
    rng = np.random.default_rng(int(cfg.seed))
    L, N, M, K = cfg.L, cfg.N, cfg.M, cfg.K

    phi = rng.standard_normal((N, L))
    support = np.sort(rng.choice(L, size=K, replace=False))
    x = np.zeros((L, M))
    if cfg.rho == 0.0:
        x[support, :] = rng.standard_normal((K, M))
    else:
        drive = math.sqrt(max(0.0, 1.0 - cfg.rho**2))
        cur = rng.standard_normal(K)
        x[support, 0] = cur
        for m in range(1, M):
            cur = cfg.rho * cur + drive * rng.standard_normal(K)
            x[support, m] = cur

    anchors = frozenset(range(cfg.n_anchor))
    if cfg.shared_perm:
        shared = PermutationMap(rng.permutation(N), anchors)
        perms = tuple(shared for _ in range(M))
    else:
        perms = tuple(PermutationMap(rng.permutation(N), anchors) for _ in range(M))

    sigma2 = sigma_from_snr(cfg.snr_db, phi, x)
    noise = math.sqrt(sigma2) * rng.standard_normal((N, M))
    clean = phi @ x
    y = np.empty((N, M))
    for m in range(M):
        y[:, m] = clean[perms[m].map, m] + noise[:, m]

    return ProblemInstance(
        phi=MeasurementMatrix(phi),
        x_true=SignalMatrix(x, tuple(int(i) for i in support)),
        perms_true=perms,
        y=y,
        noise=NoiseModel(sigma2, noise),
        config=cfg,
    )


# ---------------------------------------------------------------------------
# JSON serialization (row-major nested lists; field names are part of the
# on-disk contract used by the CLI generate/solve round trip).
# ---------------------------------------------------------------------------

def instance_to_json(inst):
    """Serializable dict with fields phi, x_true, perms, anchors, y, sigma2, config."""
    if inst.phi.per_column is not None:
        raise ConfigError("JSON serialization supports a single shared Phi only")
    anchors = inst.perms_true[0].anchors
    if any(p.anchors != anchors for p in inst.perms_true):
        raise ConfigError("JSON serialization requires one anchor set for all columns")
    return {
        "phi": inst.phi.entries.tolist(),
        "x_true": inst.x_true.entries.tolist(),
        "perms": [p.map.tolist() for p in inst.perms_true],
        "anchors": sorted(int(i) for i in anchors),
        "y": inst.y.tolist(),
        "sigma2": float(inst.noise.sigma2),
        "config": dataclasses.asdict(inst.config),
    }


def instance_from_json(obj):
    """Rebuild an instance; the noise realization is not stored on disk."""
    cfg = ProblemConfig(**obj["config"])
    anchors = frozenset(int(i) for i in obj["anchors"])
    perms = tuple(PermutationMap(np.asarray(p), anchors) for p in obj["perms"])
    x = np.asarray(obj["x_true"], dtype=float)
    support = tuple(int(i) for i in np.flatnonzero(np.any(x != 0.0, axis=1)))
    return ProblemInstance(
        phi=MeasurementMatrix(np.asarray(obj["phi"], dtype=float)),
        x_true=SignalMatrix(x, support),
        perms_true=perms,
        y=np.asarray(obj["y"], dtype=float),
        noise=NoiseModel(float(obj["sigma2"])),
        config=cfg,
    )


def save_instance(inst, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_json(inst), fh)


def load_instance(path):
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_json(json.load(fh))
