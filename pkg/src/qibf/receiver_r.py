"""Grid Bayesian receiver driven by its own prediction (method R).

The transmitter quantizes ``y_k - C x_hat_{k|k-1}`` where ``x_hat`` is the
conditional mean of an identical copy of this receiver, so transmitter and
receiver stay synchronized by construction.  The belief is a 1-D grid
density over the plant state; prediction is a Chapman-Kolmogorov step with
the process-noise kernel and the update multiplies by the probability that
a Gaussian centered at ``C (x - x_hat)`` lands in the received cell
(evaluated in closed form from normal CDF differences).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateDensityError, UnsupportedDimensionError
from .gridpdf import (
    GridDensity,
    UniformGrid,
    default_grid,
    gaussian_density,
    mean_cov,
    normalize,
)
from .model import LinearGaussianModel
from .quantizer import QuantCell, Quantizer, interval_probability

__all__ = [
    "StateBelief",
    "r_init",
    "r_mean",
    "r_predict",
    "r_transmit",
    "r_update",
    "run_method_r",
    "run_method_r_receiver",
]

_CELL_MASS_FLOOR = 1e-12


@dataclass(frozen=True)
class StateBelief:
    """1-D belief over the plant state.

    ``raw_mass`` is the pre-normalization quadrature mass of the operation
    that produced this belief (a numerical health metric; 1.0 for the
    prior).
    """

    density: GridDensity
    k: int
    kind: str  # "predicted" or "filtered"
    raw_mass: float = 1.0

    def __post_init__(self):
        if self.kind not in ("predicted", "filtered"):
            raise ValueError(f"kind must be 'predicted' or 'filtered', got {self.kind!r}")
        if self.density.grid.ndim != 1:
            raise ValueError("StateBelief needs a 1-D density")


def _require_scalar(model):
    if model.n != 1 or model.p != 1:
        raise UnsupportedDimensionError(
            f"grid receivers support scalar systems only (n={model.n}, p={model.p})"
        )


def r_init(model: LinearGaussianModel, grid: UniformGrid = None) -> StateBelief:
    """Prior belief, normalized on the default (or given) grid."""
    _require_scalar(model)
    var0 = float(model.x0_cov[0, 0])
    if grid is None:
        grid = default_grid(model.x0_mean, [np.sqrt(var0)])
    d = normalize(gaussian_density(grid, model.x0_mean, var0))
    return StateBelief(density=d, k=0, kind="predicted")


def r_mean(belief: StateBelief) -> float:
    """Conditional mean (trapezoidal first moment)."""
    m, _ = mean_cov(belief.density)
    return float(m[0])


def r_predict(belief: StateBelief, model: LinearGaussianModel, u=0.0) -> StateBelief:
    """Chapman-Kolmogorov step k -> k+1 with the process-noise kernel."""
    if belief.kind != "filtered":
        raise ValueError("predict expects a filtered belief")
    _require_scalar(model)
    k = belief.k
    a = float(model.A_seq[k][0, 0])
    bu = float(model.B_seq[k][0] @ np.atleast_1d(np.asarray(u, dtype=np.float64)))
    q = float(model.Q_seq[k][0, 0])
    grid = belief.density.grid
    src = grid.axis(0)
    vals = _kernels.predict_1d(
        belief.density.values, grid.trapezoid_weights(0), src, src, a, bu, q
    )
    raw = float(np.sum(grid.trapezoid_weights(0) * vals))
    d = normalize(GridDensity(grid, vals))
    return StateBelief(density=d, k=k + 1, kind="predicted", raw_mass=raw)


def r_transmit(model, k, q: Quantizer, y_k, x_pred_mean: float) -> int:
    """Symbol of the innovation ``y_k - C_k x_hat_{k|k-1}``."""
    _require_scalar(model)
    y = float(np.asarray(y_k).reshape(-1)[0])
    iota = y - float(model.C_seq[k][0, 0]) * x_pred_mean
    return q.quantize(iota)


def r_update(belief: StateBelief, model, k, cell: QuantCell, x_pred_mean: float) -> StateBelief:
    """Multiply by the cell likelihood and renormalize by quadrature mass.

    The likelihood at state x is ``P(cell.lower < C(x - x_hat) + v <= cell.upper)``
    with v ~ N(0, R_k), computed from normal CDF differences.
    """
    if belief.kind != "predicted" or belief.k != k:
        raise ValueError(f"update expects the predicted belief at step {k}")
    _require_scalar(model)
    c = float(model.C_seq[k][0, 0])
    r_var = float(model.R_seq[k][0, 0])
    x = belief.density.grid.axis(0)
    lik = interval_probability(cell.lower, cell.upper, c * (x - x_pred_mean), r_var)
    vals = belief.density.values * lik
    raw = float(np.sum(belief.density.grid.trapezoid_weights(0) * vals))
    if raw < _CELL_MASS_FLOOR:
        raise DegenerateDensityError(
            f"received cell {cell.symbol} has predicted probability {raw:.3e}; "
            "the belief and the symbol stream are incompatible (widen the grid "
            "or check for channel errors)",
            mass=raw,
        )
    d = normalize(GridDensity(belief.density.grid, vals))
    return StateBelief(density=d, k=k, kind="filtered", raw_mass=raw)


def run_method_r(model: LinearGaussianModel, q_seq, y_seq, u_seq=None,
                 grid: UniformGrid = None):
    """Transmitter-side run: produces the symbol stream and the belief log.

    Returns a dict with per-step symbols, innovations, predicted means, and
    the predicted/filtered beliefs.
    """
    _require_scalar(model)
    y = np.asarray(y_seq, dtype=np.float64).reshape(-1, 1)
    T = y.shape[0]
    qs = [q_seq] * T if isinstance(q_seq, Quantizer) else list(q_seq)
    u = np.zeros((T, model.m_u)) if u_seq is None else np.atleast_2d(np.asarray(u_seq, dtype=np.float64))
    belief = r_init(model, grid=grid)
    out = {"symbol": np.empty(T, dtype=np.int64), "iota": np.empty(T),
           "x_pred_mean": np.empty(T), "predicted": [], "filtered": []}
    for k in range(T):
        xp = r_mean(belief)
        sym = r_transmit(model, k, qs[k], y[k], xp)
        out["x_pred_mean"][k] = xp
        out["iota"][k] = float(y[k, 0]) - float(model.C_seq[k][0, 0]) * xp
        out["symbol"][k] = sym
        out["predicted"].append(belief)
        belief = r_update(belief, model, k, qs[k].cell_of(sym), xp)
        out["filtered"].append(belief)
        if k + 1 < T:
            belief = r_predict(belief, model, u[k])
    return out


def run_method_r_receiver(model: LinearGaussianModel, q_seq, symbols, u_seq=None,
                          grid: UniformGrid = None):
    """Receiver-side run from a symbol stream (same recursion, no measurements)."""
    _require_scalar(model)
    symbols = np.asarray(symbols, dtype=np.int64).reshape(-1)
    T = symbols.size
    qs = [q_seq] * T if isinstance(q_seq, Quantizer) else list(q_seq)
    u = np.zeros((T, model.m_u)) if u_seq is None else np.atleast_2d(np.asarray(u_seq, dtype=np.float64))
    belief = r_init(model, grid=grid)
    out = {"x_pred_mean": np.empty(T), "predicted": [], "filtered": []}
    for k in range(T):
        xp = r_mean(belief)
        out["x_pred_mean"][k] = xp
        out["predicted"].append(belief)
        belief = r_update(belief, model, k, qs[k].cell_of(int(symbols[k])), xp)
        out["filtered"].append(belief)
        if k + 1 < T:
            belief = r_predict(belief, model, u[k])
    return out
