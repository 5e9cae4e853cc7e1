"""Exact solvers for the inner permutation-alignment problem.

Each EM permutation update reduces to

    maximize over bijections p:   sum_i y[i] * v[p[i]]

which is a sum of pairwise products of two fixed sequences. By the
rearrangement inequality the maximum pairs like ranks: the largest y with
the largest v, the second largest with the second largest, and so on, so a
sort solves the problem exactly in O(N log N). Anchored assignments pin part
of the bijection; the free part reduces to the same sorted pairing on the
remaining indices. Ties are broken by ascending original index (stable sort)
so results are deterministic across platforms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import AnchorError, ConfigError, SizeGuardError
from .model import PermutationMap

__all__ = [
    "PermObjective",
    "perm_objective",
    "rearrangement_argmax",
    "constrained_rearrangement_argmax",
    "brute_force_argmax",
    "select_shared_permutation",
    "complete_from_anchors",
]


@dataclass(frozen=True)
class PermObjective:
    """One alignment problem: observation column y against predictor v = Phi mu."""

    y_vec: np.ndarray
    v_vec: np.ndarray

    def __post_init__(self):
        y = np.ascontiguousarray(self.y_vec, dtype=float)
        v = np.ascontiguousarray(self.v_vec, dtype=float)
        if y.ndim != 1 or y.shape != v.shape:
            raise ConfigError("y_vec and v_vec must be equal-length vectors")
        object.__setattr__(self, "y_vec", y)
        object.__setattr__(self, "v_vec", v)

    @property
    def n(self):
        return self.y_vec.shape[0]


def perm_objective(obj, perm):
    """sum_i y[i] * v[p[i]]."""
    return float(np.dot(obj.y_vec, obj.v_vec[perm.map]))


def _check_anchors(anchors, n):
    """Validate a partial assignment and return it as a plain dict."""
    if anchors is None:
        return {}
    amap = {int(i): int(j) for i, j in anchors.items()}
    if any(not (0 <= i < n and 0 <= j < n) for i, j in amap.items()):
        raise AnchorError("anchor indices out of range")
    if len(set(amap.values())) != len(amap):
        raise AnchorError("conflicting anchors: two observations map to one source")
    return amap


def rearrangement_argmax(obj):
    """Unconstrained maximizer: pair the rank-k element of y with the rank-k of v."""
    order_y = np.argsort(-obj.y_vec, kind="stable")
    order_v = np.argsort(-obj.v_vec, kind="stable")
    p = np.empty(obj.n, dtype=np.intp)
    p[order_y] = order_v
    return PermutationMap(p)


def constrained_rearrangement_argmax(obj, anchors=None):
    """Maximizer over permutations agreeing with a partial anchor assignment.

    Anchored pairs are fixed; the free observation indices are rank-paired
    against the free source indices, which is exact because the anchored terms
    are constants of the optimization.
    """
    amap = _check_anchors(anchors, obj.n)
    if not amap:
        return rearrangement_argmax(obj)
    free_obs = np.array(sorted(set(range(obj.n)) - set(amap)), dtype=np.intp)
    free_src = np.array(sorted(set(range(obj.n)) - set(amap.values())), dtype=np.intp)
    p = np.empty(obj.n, dtype=np.intp)
    for i, j in amap.items():
        p[i] = j
    if free_obs.size:
        order_y = np.argsort(-obj.y_vec[free_obs], kind="stable")
        order_v = np.argsort(-obj.v_vec[free_src], kind="stable")
        p[free_obs[order_y]] = free_src[order_v]
    return PermutationMap(p, frozenset(amap))


def brute_force_argmax(obj, anchors=None, max_free=9):
    """Exhaustive maximizer (test oracle); ties go to the lexicographically smallest map."""
    amap = _check_anchors(anchors, obj.n)
    free_obs = sorted(set(range(obj.n)) - set(amap))
    free_src = sorted(set(range(obj.n)) - set(amap.values()))
    if len(free_obs) > max_free:
        raise SizeGuardError(
            f"{len(free_obs)} free indices exceed the factorial guard ({max_free})"
        )
    p = np.empty(obj.n, dtype=np.intp)
    for i, j in amap.items():
        p[i] = j
    best_val = -np.inf
    best_assign = None
    for assign in itertools.permutations(free_src):
        val = sum(obj.y_vec[i] * obj.v_vec[j] for i, j in zip(free_obs, assign))
        if val > best_val:
            best_val = val
            best_assign = assign
    if best_assign is not None:
        p[free_obs] = best_assign
    return PermutationMap(p, frozenset(amap))


def _shared_objective(y_cols, v_cols, perm):
    return float(np.sum(y_cols * v_cols[perm.map, :]))


def select_shared_permutation(y_cols, v_cols, anchors=None, incumbent=None):
    """Best single permutation for all columns, from per-column candidates.

    Builds the M per-column maximizers, appends the incumbent, and returns the
    candidate with the largest summed objective sum_m y_m^T P v_m. Keeping the
    incumbent in the pool means the returned score can never regress, which is
    what makes the surrounding EM iteration monotone.
    """
    y_cols = np.asarray(y_cols, dtype=float)
    v_cols = np.asarray(v_cols, dtype=float)
    if y_cols.ndim != 2 or y_cols.shape != v_cols.shape:
        raise ConfigError("y_cols and v_cols must be equal-shape N x M arrays")
    n, m = y_cols.shape
    if incumbent is None:
        incumbent = complete_from_anchors(anchors, n)
    candidates = [
        constrained_rearrangement_argmax(
            PermObjective(y_cols[:, j], v_cols[:, j]), anchors
        )
        for j in range(m)
    ]
    candidates.append(incumbent)
    scores = [_shared_objective(y_cols, v_cols, c) for c in candidates]
    return candidates[int(np.argmax(scores))]


def complete_from_anchors(anchors, n):
    """Anchor assignments completed by pairing free indices in ascending order."""
    amap = _check_anchors(anchors, n)
    p = np.empty(n, dtype=np.intp)
    for i, j in amap.items():
        p[i] = j
    free_obs = sorted(set(range(n)) - set(amap))
    free_src = sorted(set(range(n)) - set(amap.values()))
    p[free_obs] = free_src
    return PermutationMap(p, frozenset(amap))
