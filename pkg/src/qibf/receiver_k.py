"""Grid Bayesian receiver for quantized Kalman-filter innovations (method K).

The transmitter runs an exact Kalman filter and quantizes its innovation.
Because the pair (plant state, transmitter prediction error) is Markov, the
receiver can run an exact Bayesian filter over that 2-D augmented state:

* the transition kernel factors into the process-noise density evaluated at
  ``w* = x_k - A x_{k-1} - B u`` times the gain-scaled measurement-noise
  density evaluated at ``c* = (A - K C) e_{k-1} + w* - e_k`` (``e`` is the
  prediction-error axis);
* the symbol likelihood depends on the state only through ``C e_k`` (cell
  probability of a Gaussian with variance R);
* the symbol's marginal probability ("evidence") is the prior cell
  probability under N(0, S_k) by innovation whiteness, so it is computable
  offline from the gain schedule.

One subtlety makes the recursion exact rather than approximate: the
measurement noise v_k that enters the symbol at step k is the *same* noise
that drives the prediction error into step k+1.  Conditioning on the
received cell therefore restricts v_k to a band that depends on e_k, and
the default prediction step integrates the transition kernel over exactly
that band (renormalized per source by the update likelihood).  Without this
conditioning the recursion loses the coupling between the two axes and its
posterior drifts away from the exact filter; that unconditioned variant
(the plain product-kernel Chapman-Kolmogorov step) remains available via
``condition_on_symbol=False`` for comparison.

Scalar systems only (n = p = 1): the belief is a 2-D grid density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, kalman
from .errors import (
    DegenerateDensityError,
    SingularGainError,
    UnsupportedDimensionError,
)
from .gridpdf import (
    GridDensity,
    UniformGrid,
    default_grid,
    gaussian_density,
    marginal,
    mean_cov,
    normalize,
)
from .model import LinearGaussianModel
from .quantizer import QuantCell, Quantizer, interval_probability

__all__ = [
    "GainSchedule",
    "AugmentedBelief",
    "k_init",
    "k_transmit",
    "k_transition_density",
    "k_predict",
    "k_evidence",
    "k_likelihood",
    "k_update",
    "k_state_marginal",
    "run_method_k_transmitter",
    "run_method_k_receiver",
]

_GAIN_FLOOR = 1e-12
_CELL_MASS_FLOOR = 1e-12
_INIT_REGULARIZATION = 1e-6


def _require_scalar(model):
    if model.n != 1 or model.p != 1:
        raise UnsupportedDimensionError(
            f"the augmented-state grid receiver supports scalar systems only "
            f"(n={model.n}, p={model.p})"
        )


@dataclass(frozen=True)
class GainSchedule:
    """Per-time gains and covariances the receiver precomputes offline.

    All entries follow from the model alone (the covariance recursion never
    touches data), so no gain values travel over the channel.
    """

    K: np.ndarray        # (T,) predictor gains A_k L_k
    L: np.ndarray        # (T,) filter gains
    Sigma_pred: np.ndarray  # (T,) predicted variances
    S: np.ndarray        # (T,) innovation variances

    @classmethod
    def from_model(cls, model: LinearGaussianModel, horizon=None) -> "GainSchedule":
        _require_scalar(model)
        sched = kalman.covariance_schedule(model, horizon)
        return cls(
            K=np.ascontiguousarray(sched["K"][:, 0, 0]),
            L=np.ascontiguousarray(sched["L"][:, 0, 0]),
            Sigma_pred=np.ascontiguousarray(sched["P_pred"][:, 0, 0]),
            S=np.ascontiguousarray(sched["S"][:, 0, 0]),
        )


@dataclass(frozen=True)
class AugmentedBelief:
    """2-D belief over (state, transmitter prediction error).

    ``raw_mass`` records the pre-normalization quadrature mass of the
    operation that produced the belief; for an update it should sit near
    1.0 once the analytic evidence has been divided out.  A filtered belief
    also carries the quantizer ``cell`` it was conditioned on, which the
    next prediction step needs (see module docstring).
    """

    density: GridDensity
    k: int
    kind: str  # "predicted" or "filtered"
    raw_mass: float = 1.0
    cell: QuantCell = None

    def __post_init__(self):
        if self.kind not in ("predicted", "filtered"):
            raise ValueError(f"kind must be 'predicted' or 'filtered', got {self.kind!r}")
        if self.density.grid.ndim != 2:
            raise ValueError("AugmentedBelief needs a 2-D density")


def k_init(model: LinearGaussianModel, grid: UniformGrid = None,
           regularization: float = _INIT_REGULARIZATION) -> AugmentedBelief:
    """Initial belief: synchronized transmitter and receiver at time zero.

    The exact initial covariance of (x0, x0 - x0_mean) is rank one, which has
    no 2-D density; `regularization` times the prior variance is added to the
    diagonal before evaluating on the grid.
    """
    _require_scalar(model)
    var0 = float(model.x0_cov[0, 0])
    mean = np.array([float(model.x0_mean[0]), 0.0])
    if grid is None:
        sd = math.sqrt(var0)
        grid = default_grid(mean, [sd, sd])
    cov = np.array([[var0, var0], [var0, var0]]) + regularization * var0 * np.eye(2)
    d = normalize(gaussian_density(grid, mean, cov))
    return AugmentedBelief(density=d, k=0, kind="predicted")


def k_transmit(model, kalman_state, q: Quantizer, y_k) -> int:
    """Symbol of the transmitter Kalman innovation ``y_k - C x_pred``."""
    _require_scalar(model)
    k = kalman_state.k
    y = float(np.asarray(y_k).reshape(-1)[0])
    eps = y - float(model.C_seq[k][0, 0] * kalman_state.x_pred[0])
    return q.quantize(eps)


def _transition_params(model, schedule, k):
    """Scalar transition coefficients for step k-1 -> k."""
    if k < 1:
        raise ValueError("transitions are defined for k >= 1")
    a = float(model.A_seq[k - 1][0, 0])
    c = float(model.C_seq[k - 1][0, 0])
    q = float(model.Q_seq[k - 1][0, 0])
    r = float(model.R_seq[k - 1][0, 0])
    K = float(schedule.K[k - 1])
    if abs(K) < _GAIN_FLOOR:
        raise SingularGainError(
            f"predictor gain K_{k - 1} ~ 0; the gain-scaled noise density degenerates"
        )
    return a, c, q, r, K


def k_transition_density(model, schedule, k, Z_next, Z_prev, u=0.0) -> float:
    """Transition kernel value between augmented states (k-1 -> k)."""
    _require_scalar(model)
    a, c, q, r, K = _transition_params(model, schedule, k)
    bu = float(model.B_seq[k - 1][0] @ np.atleast_1d(np.asarray(u, dtype=np.float64)))
    xn, en = float(Z_next[0]), float(Z_next[1])
    xp, ep = float(Z_prev[0]), float(Z_prev[1])
    wstar = xn - a * xp - bu
    cstar = (a - K * c) * ep + wstar - en
    kvar = K * K * r
    pw = math.exp(-0.5 * wstar * wstar / q) / math.sqrt(2.0 * math.pi * q)
    pkv = math.exp(-0.5 * cstar * cstar / kvar) / math.sqrt(2.0 * math.pi * kvar)
    return pw * pkv


def k_predict(belief: AugmentedBelief, model, schedule, u=0.0,
              force_dense: bool = False,
              condition_on_symbol: bool = True) -> AugmentedBelief:
    """Prediction step k-1 -> k.

    By default the transition law is conditioned on the cell recorded in the
    filtered belief: the update's likelihood is divided back out of the
    belief (recovering the predicted density scaled by the evidence) and the
    error-axis noise is integrated over the band the cell imposes on v.
    With ``condition_on_symbol=False`` (or when the belief carries no cell,
    e.g. after a skipped update) the plain product-kernel step is taken
    instead.
    """
    if belief.kind != "filtered":
        raise ValueError("predict expects a filtered belief")
    _require_scalar(model)
    k = belief.k + 1
    a, c, q, r, K = _transition_params(model, schedule, k)
    bu = float(model.B_seq[k - 1][0] @ np.atleast_1d(np.asarray(u, dtype=np.float64)))
    grid = belief.density.grid
    xs = grid.axis(0)
    es = grid.axis(1)
    kvar = K * K * r
    cell = belief.cell if condition_on_symbol else None
    if cell is not None:
        lik = k_likelihood(model, k - 1, cell, es)
        src = np.where(lik > 0.0,
                       belief.density.values / np.where(lik > 0.0, lik, 1.0), 0.0)
        # band on v from the cell, mapped to (e - mu) = -K v coordinates
        vlo = cell.lower - float(model.C_seq[k - 1][0, 0]) * es
        vhi = cell.upper - float(model.C_seq[k - 1][0, 0]) * es
        if K > 0:
            lo_e, hi_e = -K * vhi, -K * vlo
        else:
            lo_e, hi_e = -K * vlo, -K * vhi
    else:
        src = belief.density.values
        lo_e = np.full(es.size, -np.inf)
        hi_e = np.full(es.size, np.inf)
    vals = _kernels.predict_2d_banded(
        src,
        grid.trapezoid_weights(0), grid.trapezoid_weights(1),
        xs, es, xs, es,
        a, bu, a - K * c, q, math.sqrt(kvar),
        lo_e, hi_e,
        force_dense=force_dense,
    )
    raw = float(np.sum(
        np.outer(grid.trapezoid_weights(0), grid.trapezoid_weights(1)) * vals
    ))
    d = normalize(GridDensity(grid, np.maximum(vals, 0.0)))
    return AugmentedBelief(density=d, k=k, kind="predicted", raw_mass=raw)


def k_evidence(schedule: GainSchedule, k, cell: QuantCell) -> float:
    """Marginal symbol probability: the cell mass under N(0, S_k)."""
    return interval_probability(cell.lower, cell.upper, 0.0, float(schedule.S[k]))


def k_likelihood(model, k, cell: QuantCell, xerr) -> np.ndarray:
    """P(symbol | prediction error): cell mass under N(C xerr, R_k)."""
    c = float(model.C_seq[k][0, 0])
    r_var = float(model.R_seq[k][0, 0])
    return interval_probability(cell.lower, cell.upper, c * np.asarray(xerr, dtype=np.float64), r_var)


def k_update(belief: AugmentedBelief, model, schedule, k, q: Quantizer,
             symbol: int) -> AugmentedBelief:
    """Bayes update: multiply by the likelihood, divide by the analytic
    evidence, then renormalize (the renormalization absorbs any residual
    quadrature error; the pre-normalization mass is kept in ``raw_mass``)."""
    if belief.kind != "predicted" or belief.k != k:
        raise ValueError(f"update expects the predicted belief at step {k}")
    _require_scalar(model)
    cell = q.cell_of(int(symbol))
    es = belief.density.grid.axis(1)
    lik = k_likelihood(model, k, cell, es)
    vals = belief.density.values * lik[None, :]
    w2 = np.outer(
        belief.density.grid.trapezoid_weights(0),
        belief.density.grid.trapezoid_weights(1),
    )
    cell_mass = float(np.sum(w2 * vals))
    if cell_mass < _CELL_MASS_FLOOR:
        raise DegenerateDensityError(
            f"symbol {symbol} has predicted probability {cell_mass:.3e}; receiver "
            "and transmitter look desynchronized (channel error?)",
            mass=cell_mass,
        )
    evidence = k_evidence(schedule, k, cell)
    vals = vals / evidence
    d = normalize(GridDensity(belief.density.grid, vals))
    return AugmentedBelief(density=d, k=k, kind="filtered",
                           raw_mass=cell_mass / evidence, cell=cell)


def k_state_marginal(belief: AugmentedBelief) -> GridDensity:
    """Normalized marginal over the state axis."""
    return normalize(marginal(belief.density, axis=0))


def run_method_k_transmitter(model: LinearGaussianModel, q_seq, y_seq, u_seq=None):
    """Kalman filter over the measurements, quantizing each innovation.

    Returns the symbol stream plus the underlying filter log (means,
    covariances, innovations, gains).
    """
    _require_scalar(model)
    y = np.asarray(y_seq, dtype=np.float64).reshape(-1, 1)
    T = y.shape[0]
    qs = [q_seq] * T if isinstance(q_seq, Quantizer) else list(q_seq)
    log = kalman.run_filter(model, y, u_seq)
    symbols = np.empty(T, dtype=np.int64)
    for k in range(T):
        symbols[k] = qs[k].quantize(float(log["eps"][k, 0]))
    return symbols, log


def run_method_k_receiver(model: LinearGaussianModel, q_seq, symbols, u_seq=None,
                          schedule: GainSchedule = None, grid: UniformGrid = None,
                          force_dense: bool = False,
                          condition_on_symbol: bool = True):
    """Grid Bayesian receiver over a symbol stream.

    Returns per-step state-marginal means/variances and the belief lists.
    """
    _require_scalar(model)
    symbols = np.asarray(symbols, dtype=np.int64).reshape(-1)
    T = symbols.size
    qs = [q_seq] * T if isinstance(q_seq, Quantizer) else list(q_seq)
    u = np.zeros((T, model.m_u)) if u_seq is None else np.atleast_2d(np.asarray(u_seq, dtype=np.float64))
    if schedule is None:
        schedule = GainSchedule.from_model(model, horizon=T)
    belief = k_init(model, grid=grid)
    out = {"mean": np.empty(T), "var": np.empty(T),
           "raw_mass": np.empty(T), "predicted": [], "filtered": []}
    for k in range(T):
        out["predicted"].append(belief)
        belief = k_update(belief, model, schedule, k, qs[k], int(symbols[k]))
        out["filtered"].append(belief)
        m, c = mean_cov(k_state_marginal(belief))
        out["mean"][k] = m[0]
        out["var"][k] = c[0, 0]
        out["raw_mass"][k] = belief.raw_mass
        if k + 1 < T:
            belief = k_predict(belief, model, schedule, u[k],
                               force_dense=force_dense,
                               condition_on_symbol=condition_on_symbol)
    return out
