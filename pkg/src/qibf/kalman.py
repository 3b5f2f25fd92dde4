"""Exact Kalman filter and innovation diagnostics.

This is the transmitter-side filter whose innovations get quantized.  The
covariance update uses the Joseph form internally for PSD safety, and the
p x p innovation covariance is inverted through its Cholesky factor (it is
positive definite whenever R is).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import LinearGaussianModel

__all__ = [
    "KalmanState",
    "init_state",
    "kf_measurement_update",
    "kf_time_update",
    "innovation_variance",
    "predictor_gain",
    "whiteness_statistic",
    "run_filter",
    "covariance_schedule",
]


@dataclass(frozen=True)
class KalmanState:
    """Predicted and (once updated) filtered mean/covariance at time k."""

    x_pred: np.ndarray
    P_pred: np.ndarray
    x_filt: np.ndarray = None
    P_filt: np.ndarray = None
    k: int = 0


def init_state(model: LinearGaussianModel) -> KalmanState:
    return KalmanState(
        x_pred=model.x0_mean.copy(), P_pred=model.x0_cov.copy(), k=0
    )


def _sym(P):
    return 0.5 * (P + P.T)


def kf_measurement_update(model, k, state: KalmanState, y_k):
    """Measurement update at time k.

    Returns
    -------
    (state, innovation, gain) : (KalmanState, ndarray (p,), ndarray (n, p))
        The state now carries the filtered mean/covariance; the innovation is
        ``y_k - C_k x_pred`` and the gain is ``L_k``.
    """
    y = np.asarray(y_k, dtype=np.float64).reshape(-1)
    C = model.C_seq[k]
    R = model.R_seq[k]
    P = state.P_pred
    S = _sym(C @ P @ C.T + R)
    L = cho_solve(cho_factor(S), C @ P).T
    eps = y - C @ state.x_pred
    x_filt = state.x_pred + L @ eps
    ILC = np.eye(model.n) - L @ C
    P_filt = _sym(ILC @ P @ ILC.T + L @ R @ L.T)
    new = KalmanState(
        x_pred=state.x_pred, P_pred=state.P_pred, x_filt=x_filt, P_filt=P_filt, k=k
    )
    return new, eps, L


def kf_time_update(model, k, state: KalmanState, u_k=None) -> KalmanState:
    """Time update k -> k+1: ``x' = A x_filt + B u``, ``P' = A P_filt A^T + Q``."""
    if state.x_filt is None:
        raise ValueError("time update needs a filtered state; run the measurement update first")
    u = np.zeros(model.m_u) if u_k is None else np.asarray(u_k, dtype=np.float64).reshape(-1)
    A = model.A_seq[k]
    x_pred = A @ state.x_filt + model.B_seq[k] @ u
    P_pred = _sym(A @ state.P_filt @ A.T + model.Q_seq[k])
    return KalmanState(x_pred=x_pred, P_pred=P_pred, k=k + 1)


def innovation_variance(model, k, state: KalmanState) -> np.ndarray:
    """Innovation covariance ``S_k = C_k P_pred C_k^T + R_k`` (p x p)."""
    C = model.C_seq[k]
    return _sym(C @ state.P_pred @ C.T + model.R_seq[k])


def predictor_gain(model, k, L_k) -> np.ndarray:
    """Predictor gain ``K_k = A_k L_k``."""
    return model.A_seq[k] @ np.asarray(L_k, dtype=np.float64)


def whiteness_statistic(eps_seq, S_seq, max_lag: int) -> np.ndarray:
    """Sample autocorrelations of the standardized innovations.

    Parameters
    ----------
    eps_seq : array_like, shape (T,) or (T, 1)
        Scalar innovation sequence.
    S_seq : array_like, shape (T,)
        Per-step innovation variances used for standardization.
    max_lag : int
        Lags 1..max_lag are returned; requires ``T > 10 * max_lag``.
    """
    eps = np.asarray(eps_seq, dtype=np.float64).reshape(-1)
    S = np.asarray(S_seq, dtype=np.float64).reshape(-1)
    if eps.shape != S.shape:
        raise ValueError("eps_seq and S_seq must have equal length")
    T = eps.size
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if T <= 10 * max_lag:
        raise ValueError(f"sequence too short: need T > {10 * max_lag}, got {T}")
    e = eps / np.sqrt(S)
    e = e - e.mean()
    denom = float(np.dot(e, e))
    if denom == 0.0:
        raise ValueError("innovation sequence is constant; autocorrelation undefined")
    return np.array([float(np.dot(e[:-j], e[j:])) / denom for j in range(1, max_lag + 1)])


def run_filter(model: LinearGaussianModel, y_seq, u_seq=None):
    """Run the filter over a measurement sequence.

    Returns a dict of per-step arrays: predicted/filtered means and
    covariances, innovations ``eps``, innovation variances ``S`` (p=1 only
    entries are scalars), gains ``L`` and ``K``.
    """
    y = np.atleast_2d(np.asarray(y_seq, dtype=np.float64))
    if y.shape[0] != model.horizon and y.shape == (1, model.horizon) and model.p == 1:
        y = y.T
    T = y.shape[0]
    u = np.zeros((T, model.m_u)) if u_seq is None else np.atleast_2d(np.asarray(u_seq, dtype=np.float64))
    out = {
        "x_pred": np.empty((T, model.n)), "P_pred": np.empty((T, model.n, model.n)),
        "x_filt": np.empty((T, model.n)), "P_filt": np.empty((T, model.n, model.n)),
        "eps": np.empty((T, model.p)), "S": np.empty((T, model.p, model.p)),
        "L": np.empty((T, model.n, model.p)), "K": np.empty((T, model.n, model.p)),
    }
    state = init_state(model)
    for k in range(T):
        out["x_pred"][k] = state.x_pred
        out["P_pred"][k] = state.P_pred
        out["S"][k] = innovation_variance(model, k, state)
        state, eps, L = kf_measurement_update(model, k, state, y[k])
        out["eps"][k] = eps
        out["L"][k] = L
        out["K"][k] = predictor_gain(model, k, L)
        out["x_filt"][k] = state.x_filt
        out["P_filt"][k] = state.P_filt
        state = kf_time_update(model, k, state, u[k])
    return out


def covariance_schedule(model: LinearGaussianModel, horizon=None):
    """Measurement-independent covariance recursion.

    Returns a dict with per-step ``P_pred`` (n x n), ``S`` (p x p), ``L`` and
    ``K`` (n x p).  These depend only on the model, never on data, which is
    what lets the receiver precompute them.
    """
    T = model.horizon if horizon is None else int(horizon)
    if T > model.horizon:
        raise ValueError(f"horizon {T} exceeds model horizon {model.horizon}")
    P = model.x0_cov.copy()
    n, p = model.n, model.p
    out = {
        "P_pred": np.empty((T, n, n)), "S": np.empty((T, p, p)),
        "L": np.empty((T, n, p)), "K": np.empty((T, n, p)),
    }
    eye = np.eye(n)
    for k in range(T):
        C = model.C_seq[k]
        R = model.R_seq[k]
        A = model.A_seq[k]
        S = _sym(C @ P @ C.T + R)
        L = cho_solve(cho_factor(S), C @ P).T
        out["P_pred"][k] = P
        out["S"][k] = S
        out["L"][k] = L
        out["K"][k] = A @ L
        ILC = eye - L @ C
        P_filt = _sym(ILC @ P @ ILC.T + L @ R @ L.T)
        P = _sym(A @ P_filt @ A.T + model.Q_seq[k])
    return out
