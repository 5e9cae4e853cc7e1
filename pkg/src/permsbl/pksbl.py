"""EM sparse Bayesian learning for AR(1)-correlated columns via Kalman smoothing.

The columns form a stationary linear-Gaussian chain

    x_m = rho x_{m-1} + u_m,   u_m ~ N(0, (1 - rho^2) Gamma),   x_1 ~ N(0, Gamma)
    y_m = P_m Phi_m x_m + n_m, n_m ~ N(0, sigma^2 I),

so the E-step is one forward Kalman pass plus a backward Rauch-Tung-Striebel
pass. Writing A_m = P_m Phi_m:

Forward (x0|0 = 0, S0|0 = Gamma):
    x_{m|m-1} = rho x_{m-1|m-1}
    S_{m|m-1} = rho^2 S_{m-1|m-1} + (1 - rho^2) Gamma
    G_m       = S_{m|m-1} A_m^T (sigma^2 I + A_m S_{m|m-1} A_m^T)^-1
    x_{m|m}   = x_{m|m-1} + G_m (y_m - A_m x_{m|m-1})
    S_{m|m}   = (I - G_m A_m) S_{m|m-1}

Backward, with smoother gain J_{j-1} = rho S_{j-1|j-1} S_{j|j-1}^-1:
    x_{j-1|M} = x_{j-1|j-1} + J_{j-1} (x_{j|M} - x_{j|j-1})
    S_{j-1|M} = S_{j-1|j-1} + J_{j-1} (S_{j|M} - S_{j|j-1}) J_{j-1}^T

The lag-one smoothed cross-covariances S_{j,j-1|M} follow the standard
smoother-gain recursion (initialized at rho (I - G_M A_M) S_{M-1|M-1}) and
feed the closed-form hyperparameter update

    gamma[l] = (1/M) ( sum_{j>=2} Mom_j[l,l] / (1 - rho^2) + Mom_1[l,l] )

where Mom_j is the smoothed second moment of x_j - rho x_{j-1} and Mom_1 that
of x_1. Permutations update per column from the filtered mean by the same
sorted pairing as the uncorrelated solver.

All covariances are explicitly symmetrized after each update; the printed
covariance recursions are not symmetric under roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import LOG_2PI, chol_logdet, chol_psd, psd_solve, serial_blas, symmetrize
from .errors import ConfigError, UnsupportedParameterError
from .model import MeasurementMatrix
from .permutation import complete_from_anchors
from .pmsbl import (
    DEFAULT_FLOOR,
    EMState,
    HyperParams,
    _anchored_posterior_means,
    _as_perm_list,
    _normalize_anchor_maps,
    _perms_equal,
    _update_perms,
)

__all__ = [
    "KalmanState",
    "SmoothedMoments",
    "kalman_forward",
    "rts_smooth",
    "lag_one_covariances",
    "smoothed_moments",
    "update_gamma_ar",
    "run_pksbl",
]


@dataclass
class KalmanState:
    """Forward/backward quantities for one E-step, indexed by column m = 0..M-1.

    ``pred_*[m]`` hold the one-step predictions x_{m|m-1}, S_{m|m-1};
    ``smoother_gain[c]`` is the gain smoothing column c from column c+1;
    ``lag_one_cov[c]`` is the smoothed cross-covariance of columns (c, c-1)
    (index 0 unused, kept zero). ``loglik`` is the innovation-form marginal
    log-likelihood of the data under the parameters of this pass.
    """

    pred_mean: np.ndarray
    pred_cov: np.ndarray
    filt_mean: np.ndarray
    filt_cov: np.ndarray
    gain: np.ndarray
    loglik: float
    smooth_mean: np.ndarray | None = None
    smooth_cov: np.ndarray | None = None
    smoother_gain: np.ndarray | None = None
    lag_one_cov: np.ndarray | None = None
    regularized: bool = False


@dataclass(frozen=True)
class SmoothedMoments:
    """Smoothed second moments feeding the hyperparameter update.

    ``first`` is E[x_1 x_1^T | Y]; ``pairwise[c-1]`` is the second moment of
    x_c - rho x_{c-1} under the smoothed posterior, c = 1..M-1 (0-based).
    Diagonals are floored at zero.
    """

    first: np.ndarray
    pairwise: np.ndarray


def _phi_for_columns(phi, m_cols):
    """Return (phis, shared) where phis is one N x L array or a per-column list."""
    if isinstance(phi, MeasurementMatrix):
        if phi.per_column is not None:
            if len(phi.per_column) != m_cols:
                raise ConfigError(
                    f"need {m_cols} per-column matrices, got {len(phi.per_column)}"
                )
            return list(phi.per_column), False
        return phi.entries, True
    a = np.asarray(phi, dtype=float)
    if a.ndim != 2:
        raise ConfigError("Phi must be an N x L matrix")
    return a, True


def kalman_forward(y, phi, perms, hp, rho, sigma2):
    """Forward filtering pass over the M columns."""
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"need 0 <= rho <= 1, got rho={rho}")
    if sigma2 <= 0:
        raise ConfigError("sigma2 must be positive")
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, m_cols = y.shape
    perms = _as_perm_list(perms, m_cols)
    phis, shared = _phi_for_columns(phi, m_cols)
    g = hp.gamma if isinstance(hp, HyperParams) else np.asarray(hp, dtype=float)
    n_rows = g.shape[0]

    rho2 = rho * rho
    drive = (1.0 - rho2) * g
    diag_idx = np.diag_indices(n_rows)
    eye_n = np.eye(n)

    state = KalmanState(
        pred_mean=np.empty((m_cols, n_rows)),
        pred_cov=np.empty((m_cols, n_rows, n_rows)),
        filt_mean=np.empty((m_cols, n_rows)),
        filt_cov=np.empty((m_cols, n_rows, n_rows)),
        gain=np.empty((m_cols, n_rows, n)),
        loglik=0.0,
    )

    xf = np.zeros(n_rows)
    pf = np.diag(g)
    loglik = 0.0
    for m in range(m_cols):
        xp = rho * xf
        pp = rho2 * pf
        pp[diag_idx] += drive

        a = (phis if shared else phis[m])[perms[m].map]
        u = a @ pp                                   # A S_{m|m-1}
        factor, _ = chol_psd(sigma2 * eye_n + u @ a.T, warn_label="kalman_forward")
        innov = y[:, m] - a @ xp
        loglik -= 0.5 * (
            n * LOG_2PI + chol_logdet(factor) + float(innov @ psd_solve(factor, innov))
        )
        gain = psd_solve(factor, u).T                # S_{m|m-1} A^T S_e^-1
        xf = xp + gain @ innov
        pf = symmetrize(pp - gain @ u)

        state.pred_mean[m] = xp
        state.pred_cov[m] = pp
        state.filt_mean[m] = xf
        state.filt_cov[m] = pf
        state.gain[m] = gain
    state.loglik = loglik
    return state


def rts_smooth(state, rho):
    """Backward smoothing pass; fills the smooth_* fields and returns the state."""
    m_cols, n_rows = state.filt_mean.shape
    xs = np.empty_like(state.filt_mean)
    ps = np.empty_like(state.filt_cov)
    gains = np.zeros((max(m_cols - 1, 0), n_rows, n_rows))
    xs[m_cols - 1] = state.filt_mean[m_cols - 1]
    ps[m_cols - 1] = state.filt_cov[m_cols - 1]
    for c in range(m_cols - 2, -1, -1):
        b = state.pred_cov[c + 1]
        factor, jittered = chol_psd(b, warn_label="rts_smooth")
        state.regularized = state.regularized or jittered
        j = rho * psd_solve(factor, state.filt_cov[c]).T
        xs[c] = state.filt_mean[c] + j @ (xs[c + 1] - state.pred_mean[c + 1])
        ps[c] = symmetrize(state.filt_cov[c] + j @ (ps[c + 1] - b) @ j.T)
        gains[c] = j
    state.smooth_mean = xs
    state.smooth_cov = ps
    state.smoother_gain = gains
    return state


def lag_one_covariances(state, perms, phi, rho):
    """Smoothed cross-covariances of consecutive columns, S_{c,c-1|M} for c >= 1.

    Initialized at rho (I - G_M A_M) S_{M-1|M-1} and propagated backward with
    the smoother gains. (The recursion is validated against a dense
    joint-Gaussian posterior rather than any printed transpose placement.)
    """
    if state.smoother_gain is None:
        raise ConfigError("run rts_smooth before lag_one_covariances")
    m_cols, n_rows = state.filt_mean.shape
    perms = _as_perm_list(perms, m_cols)
    phis, shared = _phi_for_columns(phi, m_cols)
    lag = np.zeros((m_cols, n_rows, n_rows))
    if m_cols >= 2:
        a_last = (phis if shared else phis[m_cols - 1])[perms[m_cols - 1].map]
        t = a_last @ state.filt_cov[m_cols - 2]
        lag[m_cols - 1] = rho * (state.filt_cov[m_cols - 2] - state.gain[m_cols - 1] @ t)
        j = state.smoother_gain
        for c in range(m_cols - 2, 0, -1):
            lag[c] = (
                state.filt_cov[c] @ j[c - 1].T
                + j[c] @ (lag[c + 1] - rho * state.filt_cov[c]) @ j[c - 1].T
            )
    state.lag_one_cov = lag
    return lag


def smoothed_moments(state, rho):
    """Second moments of x_1 and of x_c - rho x_{c-1} under the smoothed posterior."""
    if state.smooth_mean is None or state.lag_one_cov is None:
        raise ConfigError("run rts_smooth and lag_one_covariances first")
    xs = state.smooth_mean
    ps = state.smooth_cov
    lag = state.lag_one_cov
    m_cols, n_rows = xs.shape
    first = ps[0] + np.outer(xs[0], xs[0])
    di = np.diag_indices(n_rows)
    first[di] = np.maximum(first[di], 0.0)
    pairwise = np.empty((m_cols - 1, n_rows, n_rows))
    for c in range(1, m_cols):
        mom = (
            ps[c]
            + np.outer(xs[c], xs[c])
            + rho * rho * (ps[c - 1] + np.outer(xs[c - 1], xs[c - 1]))
            - 2.0 * rho * (lag[c] + np.outer(xs[c], xs[c - 1]))
        )
        mom[di] = np.maximum(mom[di], 0.0)
        pairwise[c - 1] = mom
    return SmoothedMoments(first=first, pairwise=pairwise)


def update_gamma_ar(state, rho, floor_eps=DEFAULT_FLOOR):
    """Closed-form gamma update from the smoothed moments.

    Maximizes the separable surrogate sum_l (-M log gamma_l - a_l / gamma_l)
    with a_l = sum_{c>=1} pairwise[c][l,l]/(1-rho^2) + first[l,l], i.e.
    gamma_l = a_l / M.
    """
    if rho == 1.0:
        raise UnsupportedParameterError(
            "rho = 1 is unsupported: the update divides by 1 - rho^2"
        )
    if not 0.0 <= rho < 1.0:
        raise ConfigError(f"need 0 <= rho < 1, got rho={rho}")
    mom = smoothed_moments(state, rho)
    m_cols = state.filt_mean.shape[0]
    acc = np.diagonal(mom.first).copy()
    if mom.pairwise.size:
        acc += np.diagonal(mom.pairwise, axis1=1, axis2=2).sum(axis=0) / (
            1.0 - rho * rho
        )
    return HyperParams(acc / m_cols, floor_eps)


@serial_blas
def run_pksbl(
    y,
    phi,
    anchors=None,
    *,
    rho,
    sigma2,
    shared_perm=False,
    max_iter=500,
    tol=1e-6,
    floor_eps=DEFAULT_FLOOR,
    enforce_anchors=True,
    init="anchored",
    perm_from_smoothed=False,
    gamma_init=None,
    perms_init=None,
):
    """Joint EM recovery for AR(1)-correlated columns.

    Same loop skeleton as :func:`permsbl.pmsbl.run_pmsbl` with the Kalman
    forward/backward E-step, the smoothed-moment gamma update, and permutation
    updates driven by the filtered means (set ``perm_from_smoothed`` to use
    smoothed means instead). The initial permutation comes from the same
    anchored-subsystem warm start as the uncorrelated solver followed by one
    sorted-pairing M-step (so at rho = 0 the two solvers start identically).
    Returns ``(x_hat, EMState)`` with the smoothed means as the signal
    estimate.
    """
    if rho == 1.0:
        raise UnsupportedParameterError(
            "rho = 1 is unsupported: the gamma update divides by 1 - rho^2"
        )
    if not 0.0 <= rho < 1.0:
        raise ConfigError(f"need 0 <= rho < 1, got rho={rho}")
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ConfigError("y must be N x M")
    if sigma2 <= 0:
        raise ConfigError("sigma2 must be positive")
    if max_iter < 1:
        raise ConfigError("max_iter must be >= 1")
    n, m_cols = y.shape
    phis, shared_phi = _phi_for_columns(phi, m_cols)
    n_rows = (phis if shared_phi else phis[0]).shape[1]

    if init not in ("anchored", "ascending"):
        raise ConfigError(f"init must be 'anchored' or 'ascending', got {init!r}")
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
                y, phis, anchor_maps, sigma2, max_iter, tol, floor_eps
            )
            if shared_phi:
                v0 = phis @ mu0
            else:
                v0 = np.column_stack([phis[m] @ mu0[:, m] for m in range(m_cols)])
            perms = _update_perms(y, v0, perms, update_maps, shared_perm)

    g = np.ones(n_rows) if gamma_init is None else np.asarray(gamma_init, dtype=float)
    g = np.maximum(g.copy(), floor_eps)

    trace = []
    state = None
    converged = False
    reason = "max-iters"
    it = 0
    for it in range(1, max_iter + 1):
        state = kalman_forward(y, phi, perms, HyperParams(g, floor_eps), rho, sigma2)
        rts_smooth(state, rho)
        lag_one_covariances(state, perms, phi, rho)
        trace.append(state.loglik)

        new_g = update_gamma_ar(state, rho, floor_eps).gamma
        sel = state.smooth_mean if perm_from_smoothed else state.filt_mean
        if shared_phi:
            v_cols = phis @ sel.T
        else:
            v_cols = np.column_stack([phis[m] @ sel[m] for m in range(m_cols)])
        new_perms = _update_perms(y, v_cols, perms, update_maps, shared_perm)

        stable = _perms_equal(perms, new_perms)
        rel_change = float(np.max(np.abs(new_g - g))) / max(float(np.max(g)), floor_eps)
        g = new_g
        perms = new_perms
        if rel_change < tol and stable:
            converged = True
            reason = "tolerance"
            break

    final = kalman_forward(y, phi, perms, HyperParams(g, floor_eps), rho, sigma2)
    trace.append(final.loglik)
    em = EMState(
        iters=it,
        gamma=HyperParams(g, floor_eps),
        perms=perms,
        log_evidence_trace=np.asarray(trace),
        converged=converged,
        reason=reason,
    )
    return state.smooth_mean.T.copy(), em
