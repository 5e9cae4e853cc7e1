"""Simultaneous OMP baseline: recover X from the anchored rows, then estimate
the permutations with a single alignment step.

The anchored observation rows have known source rows, so restricting to them
gives an ordinary (unshuffled) B x M multiple-measurement system. Greedy
simultaneous OMP picks atoms by the l1-aggregated normalized correlation
sum_m |phi_l^T r_m| / ||phi_l|| and refits all columns jointly by least
squares after every selection. The permutations then come from one sorted
pairing of y_m against Phi x_hat_m, with anchors held fixed; unlike the EM
solvers nothing is iterated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._linalg import serial_blas
from .errors import ConfigError
from .permutation import (
    PermObjective,
    complete_from_anchors,
    constrained_rearrangement_argmax,
    select_shared_permutation,
)
from .pmsbl import _entries, _normalize_anchor_maps

__all__ = ["SompResult", "somp_recover", "one_shot_perm", "somp_solve"]


@dataclass(frozen=True)
class SompResult:
    """Baseline output: estimated support, signal matrix, and permutations."""

    support_est: np.ndarray
    x_hat: np.ndarray
    perms_est: list


def somp_recover(y_rows, phi_rows, k_max):
    """Greedy simultaneous OMP on a B x M subsystem.

    Returns ``(support, x_hat)`` where ``support`` lists atoms in selection
    order and ``x_hat`` is L x M, zero off the support. Selection stops early
    if every remaining correlation is exactly zero (e.g. a zero observation).
    A rank-deficient refit falls back to the minimum-norm solution with a
    warning.
    """
    y_rows = np.asarray(y_rows, dtype=float)
    phi_rows = np.asarray(phi_rows, dtype=float)
    if y_rows.ndim == 1:
        y_rows = y_rows[:, None]
    b, m_cols = y_rows.shape
    if b < 1 or phi_rows.shape[0] != b:
        raise ConfigError("need at least one row and matching shapes")
    n_rows = phi_rows.shape[1]
    if k_max < 0:
        raise ConfigError("k_max must be nonnegative")

    norms = np.linalg.norm(phi_rows, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    support = []
    sol = np.zeros((0, m_cols))
    residual = y_rows
    for _ in range(min(k_max, b, n_rows)):
        scores = np.abs(phi_rows.T @ residual).sum(axis=1) / norms
        if support:
            scores[support] = -np.inf
        atom = int(np.argmax(scores))
        if scores[atom] <= 0.0:
            break
        support.append(atom)
        sol, _, rank, _ = np.linalg.lstsq(phi_rows[:, support], y_rows, rcond=None)
        if rank < len(support):
            warnings.warn(
                "rank-deficient subsystem on the selected support; "
                "using the minimum-norm refit",
                RuntimeWarning,
                stacklevel=2,
            )
        residual = y_rows - phi_rows[:, support] @ sol

    x_hat = np.zeros((n_rows, m_cols))
    if support:
        x_hat[support, :] = sol
    return np.asarray(support, dtype=np.intp), x_hat


def one_shot_perm(y, phi, x_hat, anchors=None, shared_perm=False):
    """Single alignment step: per-column sorted pairing of y_m against Phi x_hat_m.

    Shared mode scores the per-column candidates plus the anchor-consistent
    ascending completion as incumbent. Returns one PermutationMap per column.
    """
    phi = _entries(phi)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, m_cols = y.shape
    anchor_maps = _normalize_anchor_maps(anchors, m_cols)
    v_cols = phi @ np.asarray(x_hat, dtype=float)
    if shared_perm:
        if any(a != anchor_maps[0] for a in anchor_maps):
            raise ConfigError("shared-permutation mode needs one common anchor map")
        incumbent = complete_from_anchors(anchor_maps[0], n)
        best = select_shared_permutation(y, v_cols, anchor_maps[0], incumbent)
        return [best] * m_cols
    return [
        constrained_rearrangement_argmax(
            PermObjective(y[:, m], v_cols[:, m]), anchor_maps[m]
        )
        for m in range(m_cols)
    ]


@serial_blas
def somp_solve(y, phi, anchors, k_max, shared_perm=False):
    """Full baseline: anchored-row S-OMP recovery followed by one_shot_perm.

    Requires one common anchor map across columns (with differing per-column
    anchors the anchored rows would not form a single linear system).
    """
    phi = _entries(phi)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    m_cols = y.shape[1]
    anchor_maps = _normalize_anchor_maps(anchors, m_cols)
    amap = anchor_maps[0]
    if any(a != amap for a in anchor_maps):
        raise ConfigError("the S-OMP baseline needs one common anchor map")
    if not amap:
        raise ConfigError("the S-OMP baseline needs at least one anchor row")
    obs = sorted(amap)
    src = [amap[i] for i in obs]
    support, x_hat = somp_recover(y[obs, :], phi[src, :], k_max)
    perms = one_shot_perm(y, phi, x_hat, anchor_maps, shared_perm=shared_perm)
    return SompResult(support_est=support, x_hat=x_hat, perms_est=perms)
