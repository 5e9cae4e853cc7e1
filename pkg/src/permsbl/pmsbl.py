"""EM sparse Bayesian learning with permutation updates, uncorrelated columns.

Model (rho = 0): y_m = P_m Phi x_m + n_m with x_m ~ N(0, Gamma), Gamma =
diag(gamma), n_m ~ N(0, sigma^2 I). Each EM iteration:

E-step, per column (Gaussian conjugacy, computed through the N x N form since
N < L):

    Lambda_m = sigma^2 I + P_m Phi Gamma Phi^T P_m^T
    Sigma    = Gamma - Gamma Phi^T P_m^T Lambda_m^-1 P_m Phi Gamma
    mu_m     = sigma^-2 Sigma Phi^T P_m^T y_m

Sigma does not depend on P_m (permutations are orthogonal), so one
factorization per iteration serves every column.

M-step, closed form in gamma and exact in each permutation:

    gamma[l] <- mean_m (Sigma[l, l] + mu_m[l]^2)
    P_m      <- argmax_P  y_m^T P Phi mu_m      (sorted pairing, anchors honored)

In shared-permutation mode the M per-column maximizers plus the incumbent are
scored under the summed objective and the best is kept, so the marginal
likelihood never decreases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import LOG_2PI, chol_logdet, chol_psd, psd_solve, serial_blas, symmetrize
from .errors import ConfigError
from .model import MeasurementMatrix, PermutationMap
from .permutation import (
    PermObjective,
    complete_from_anchors,
    constrained_rearrangement_argmax,
    select_shared_permutation,
)

__all__ = [
    "HyperParams",
    "PosteriorStats",
    "EMState",
    "posterior",
    "update_gamma",
    "log_evidence",
    "run_pmsbl",
    "support_estimate",
]

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True)
class HyperParams:
    """Per-row prior variances gamma; entries below ``floor_eps`` are clamped to it."""

    gamma: np.ndarray
    floor_eps: float = DEFAULT_FLOOR

    def __post_init__(self):
        g = np.maximum(np.asarray(self.gamma, dtype=float), self.floor_eps)
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)


@dataclass(frozen=True)
class PosteriorStats:
    """Posterior mean (the MAP estimate) and symmetrized covariance for one column."""

    mu: np.ndarray
    sigma: np.ndarray


@dataclass
class EMState:
    """Final EM iterate: hyperparameters, permutations, and the evidence trace."""

    iters: int
    gamma: HyperParams
    perms: list
    log_evidence_trace: np.ndarray
    converged: bool
    reason: str


def _entries(phi):
    """N x L array from a MeasurementMatrix or plain array; rejects per-column sets."""
    if isinstance(phi, MeasurementMatrix):
        if phi.per_column is not None:
            raise ConfigError("this solver assumes a single shared Phi")
        return phi.entries
    a = np.asarray(phi, dtype=float)
    if a.ndim != 2:
        raise ConfigError("Phi must be an N x L matrix")
    return a


def posterior(y_m, phi, perm, hp, sigma2):
    """Gaussian posterior N(mu, Sigma) of one column given its permutation.

    Solved through a Cholesky factorization of the N x N matrix Lambda; no
    L x L inverse is formed.
    """
    if sigma2 <= 0:
        raise ConfigError("sigma2 must be positive")
    phi = _entries(phi)
    y_m = np.asarray(y_m, dtype=float)
    g = hp.gamma
    a = phi[perm.map]                      # P Phi
    ag = a * g                             # P Phi Gamma
    lam = sigma2 * np.eye(a.shape[0]) + ag @ a.T
    factor, _ = chol_psd(lam, warn_label="posterior")
    w = psd_solve(factor, ag)              # Lambda^-1 P Phi Gamma
    sigma = np.diag(g) - ag.T @ w
    sigma = symmetrize(sigma)
    mu = sigma @ (a.T @ y_m) / sigma2
    return PosteriorStats(mu=mu, sigma=sigma)


def update_gamma(stats, floor_eps=DEFAULT_FLOOR):
    """gamma[l] = mean over columns of Sigma_m[l, l] + mu_m[l]^2, floored."""
    if len(stats) < 1:
        raise ConfigError("need at least one column of posterior statistics")
    acc = np.zeros_like(stats[0].mu)
    for s in stats:
        acc += np.diag(s.sigma) + s.mu**2
    return HyperParams(acc / len(stats), floor_eps)


def _as_perm_list(perms, m_cols):
    if isinstance(perms, PermutationMap):
        return [perms] * m_cols
    perms = list(perms)
    if len(perms) == 1:
        return perms * m_cols
    if len(perms) != m_cols:
        raise ConfigError(f"need 1 or {m_cols} permutations, got {len(perms)}")
    return perms


def _scatter_obs(y, perms):
    """Column-wise P_m^T y_m: out[p_m[i], m] = y[i, m]."""
    out = np.empty_like(y)
    for m, p in enumerate(perms):
        out[p.map, m] = y[:, m]
    return out


def log_evidence(y, phi, perms, hp, sigma2):
    """Marginal log-likelihood sum_m log N(y_m; 0, Lambda_m).

    log det Lambda_m is permutation-free, and the quadratic terms reduce to
    (P_m^T y_m)^T Lambda_0^-1 (P_m^T y_m), so one factorization serves all
    columns.
    """
    if sigma2 <= 0:
        raise ConfigError("sigma2 must be positive")
    phi = _entries(phi)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, m_cols = y.shape
    perms = _as_perm_list(perms, m_cols)
    g = hp.gamma
    w = phi * g
    lam0 = sigma2 * np.eye(n) + w @ phi.T
    factor, _ = chol_psd(lam0, warn_label="log_evidence")
    yt = _scatter_obs(y, perms)
    quad = float(np.sum(yt * psd_solve(factor, yt)))
    return -0.5 * (m_cols * (n * LOG_2PI + chol_logdet(factor)) + quad)


def support_estimate(hp, rel_threshold=1e-3):
    """Rows reported active: gamma above ``rel_threshold`` times the largest gamma.

    A relative rule: under EM the inactive gammas decay harmonically and stall
    orders of magnitude above the floor within any practical iteration budget,
    so no absolute cutoff near the floor separates the support.
    """
    top = float(np.max(hp.gamma))
    if top <= hp.floor_eps:
        return np.array([], dtype=np.intp)
    return np.flatnonzero(hp.gamma > rel_threshold * top)


def _normalize_anchor_maps(anchors, m_cols):
    """Anchors as one dict (broadcast) or a sequence of M dicts."""
    if anchors is None:
        return [{} for _ in range(m_cols)]
    if isinstance(anchors, dict):
        return [anchors] * m_cols
    maps = list(anchors)
    if len(maps) == 1:
        return maps * m_cols
    if len(maps) != m_cols:
        raise ConfigError(f"need 1 or {m_cols} anchor maps, got {len(maps)}")
    return [dict(a) for a in maps]


def _update_perms(y, v_cols, perms, anchor_maps, shared_perm):
    if shared_perm:
        best = select_shared_permutation(
            y, v_cols, anchor_maps[0], incumbent=perms[0]
        )
        return [best] * y.shape[1]
    return [
        constrained_rearrangement_argmax(
            PermObjective(y[:, m], v_cols[:, m]), anchor_maps[m]
        )
        for m in range(y.shape[1])
    ]


def _anchored_rows(y, anchor_maps):
    """Row selections for the anchored subsystem; one (obs, src) pair per column.

    All columns must anchor the same observation indices (they do for
    generated instances); the mapped source rows may differ per column.
    """
    keys = sorted(anchor_maps[0])
    if any(sorted(a) != keys for a in anchor_maps):
        raise ConfigError("anchored initialization needs one common anchor index set")
    obs = np.asarray(keys, dtype=np.intp)
    srcs = [np.asarray([a[i] for i in keys], dtype=np.intp) for a in anchor_maps]
    return obs, srcs


def _anchored_posterior_means(y, phi, anchor_maps, sigma2, max_iter, tol, floor_eps):
    """SBL on the anchored rows only (assignments known a priori).

    Runs the same E-step / gamma-update loop on the B anchored equations of
    every column and returns the converged posterior means. This seeds the
    initial permutation without letting arbitrarily completed rows deflect
    the early gamma updates. ``phi`` may be a single N x L array or one per
    column.
    """
    obs, srcs = _anchored_rows(y, anchor_maps)
    m_cols = y.shape[1]
    if isinstance(phi, np.ndarray):
        n_rows = phi.shape[1]
        phis = [phi[src] for src in srcs]
    else:
        n_rows = phi[0].shape[1]
        phis = [phi[m][srcs[m]] for m in range(m_cols)]
    yb = y[obs, :]
    eye_b = np.eye(obs.shape[0])
    g = np.ones(n_rows)
    mu = np.zeros((n_rows, m_cols))
    for _ in range(max_iter):
        acc = np.zeros(n_rows)
        for m in range(m_cols):
            w = phis[m] * g
            factor, _ = chol_psd(sigma2 * eye_b + w @ phis[m].T, warn_label="init")
            mu[:, m] = g * (phis[m].T @ psd_solve(factor, yb[:, m]))
            acc += g - np.einsum("nl,nl->l", w, psd_solve(factor, w)) + mu[:, m] ** 2
        new_g = np.maximum(acc / m_cols, floor_eps)
        rel = float(np.max(np.abs(new_g - g))) / max(float(np.max(g)), floor_eps)
        g = new_g
        if rel < tol:
            break
    return mu


def _perms_equal(a, b):
    return all(np.array_equal(x.map, z.map) for x, z in zip(a, b))


@serial_blas
def run_pmsbl(
    y,
    phi,
    anchors=None,
    *,
    sigma2,
    shared_perm=False,
    max_iter=500,
    tol=1e-6,
    floor_eps=DEFAULT_FLOOR,
    enforce_anchors=True,
    init="anchored",
    gamma_init=None,
    perms_init=None,
):
    """Joint EM recovery of the row-sparse signal and the permutations.

    The initial permutation comes from the anchored rows: the SBL loop is
    first run on the anchored subsystem alone (whose assignments are known),
    and one sorted-pairing M-step on the resulting posterior means yields
    P^(0). The joint EM then starts from the non-informative gamma = 1 and
    alternates the posterior E-step with the closed-form gamma update and the
    permutation update, stopping when the relative sup-norm change of gamma
    drops below ``tol`` with unchanged permutations, or at ``max_iter``.
    Arbitrary completions of the anchor map (``init="ascending"``) are kept
    for comparison but deflect the early gamma updates and recover poorly.
    When ``enforce_anchors`` is False the anchors only seed the initial
    permutation. Returns ``(x_hat, EMState)`` where the columns of ``x_hat``
    are the final posterior means.
    """
    phi = _entries(phi)
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[0] != phi.shape[0]:
        raise ConfigError("y must be N x M with the same N as Phi")
    if sigma2 <= 0:
        raise ConfigError("sigma2 must be positive")
    if max_iter < 1:
        raise ConfigError("max_iter must be >= 1")
    if init not in ("anchored", "ascending"):
        raise ConfigError(f"init must be 'anchored' or 'ascending', got {init!r}")
    n, m_cols = y.shape
    n_rows = phi.shape[1]

    anchor_maps = _normalize_anchor_maps(anchors, m_cols)
    if shared_perm and any(a != anchor_maps[0] for a in anchor_maps):
        raise ConfigError("shared-permutation mode needs one common anchor map")
    update_maps = anchor_maps if enforce_anchors else [{}] * m_cols
    if perms_init is not None:
        perms = _as_perm_list(perms_init, m_cols)
    else:
        perms = [complete_from_anchors(a, n) for a in anchor_maps]
        if init == "anchored" and anchor_maps[0]:
            mu0 = _anchored_posterior_means(
                y, phi, anchor_maps, sigma2, max_iter, tol, floor_eps
            )
            perms = _update_perms(y, phi @ mu0, perms, update_maps, shared_perm)

    g = np.ones(n_rows) if gamma_init is None else np.asarray(gamma_init, dtype=float)
    g = np.maximum(g.copy(), floor_eps)

    eye_n = np.eye(n)
    trace = []
    mu = np.zeros((n_rows, m_cols))
    converged = False
    reason = "max-iters"
    it = 0
    for it in range(1, max_iter + 1):
        # E-step, all columns at once; Sigma's diagonal is permutation-free.
        w = phi * g
        factor, _ = chol_psd(sigma2 * eye_n + w @ phi.T, warn_label="pmsbl E-step")
        yt = _scatter_obs(y, perms)
        byt = psd_solve(factor, yt)
        quad = float(np.sum(yt * byt))
        trace.append(
            -0.5 * (m_cols * (n * LOG_2PI + chol_logdet(factor)) + quad)
        )
        sig_diag = g - np.einsum("nl,nl->l", w, psd_solve(factor, w))
        mu = g[:, None] * (phi.T @ byt)

        # M-step: closed-form gamma, then exact permutation updates.
        new_g = np.maximum(sig_diag + np.mean(mu**2, axis=1), floor_eps)
        v_cols = phi @ mu
        new_perms = _update_perms(y, v_cols, perms, update_maps, shared_perm)

        stable = _perms_equal(perms, new_perms)
        rel_change = float(np.max(np.abs(new_g - g))) / max(float(np.max(g)), floor_eps)
        g = new_g
        perms = new_perms
        if rel_change < tol and stable:
            converged = True
            reason = "tolerance"
            break

    hp = HyperParams(g, floor_eps)
    trace.append(log_evidence(y, phi, perms, hp, sigma2))
    state = EMState(
        iters=it,
        gamma=hp,
        perms=perms,
        log_evidence_trace=np.asarray(trace),
        converged=converged,
        reason=reason,
    )
    return mu, state
