"""Moment-recursion receiver for quantized innovations (method S).

Runs the same Kalman-like recursion at transmitter and receiver: the time
update is the usual one, and the measurement update replaces the innovation
with a conditional-mean correction computed from the quantizer level the
(dequantized) innovation landed in, under a Gaussian assumption on the
predicted density.  The covariance shrink term sums the per-level factors
over both sign mirrors of the symmetric quantizer, with level thresholds
entering the normal pdf/tail functions in raw innovation units; with a
1-bit quantizer this reduces to the classic sign-of-innovations filter and
its 2/pi shrink factor.  The printed single-sided variant is available via
``mirror_sum=False`` for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import InvalidQuantizerError, UnsupportedDimensionError
from .model import LinearGaussianModel
from .quantizer import Quantizer

__all__ = [
    "phi",
    "upper_tail",
    "MlqState",
    "SymmetricLevels",
    "init_state",
    "s_time_update",
    "s_measurement_update",
    "s_transmit",
    "shrink_factor",
    "run_method_s",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def phi(x) -> float:
    """Standard normal density; +-inf map to 0."""
    x = float(x)
    if math.isinf(x):
        return 0.0
    return math.exp(-0.5 * x * x) / _SQRT_2PI


def upper_tail(z) -> float:
    """P(X > z) for standard normal X, via erfc(z / sqrt(2)) / 2."""
    z = float(z)
    if math.isinf(z):
        return 0.0 if z > 0 else 1.0
    return 0.5 * float(erfc(z / math.sqrt(2.0)))


@dataclass(frozen=True)
class MlqState:
    """Predicted and filtered mean/covariance of the moment recursion."""

    x_pred: np.ndarray
    P_pred: np.ndarray
    x_filt: np.ndarray = None
    P_filt: np.ndarray = None
    k: int = 0


@dataclass(frozen=True)
class SymmetricLevels:
    """Positive-side cells of a symmetric mid-rise quantizer.

    ``lower[0] == 0`` and ``upper[-1] == +inf``; level n (0-based) covers
    innovations with ``|iota| in (lower[n], upper[n]]``.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64).reshape(-1)
        up = np.asarray(self.upper, dtype=np.float64).reshape(-1)
        if lo.size != up.size or lo.size < 1:
            raise InvalidQuantizerError("levels need matching lower/upper bounds")
        if lo[0] != 0.0 or not np.isinf(up[-1]):
            raise InvalidQuantizerError("levels must start at 0 and end at +inf")
        if np.any(up[:-1] != lo[1:]) or np.any(up <= lo):
            raise InvalidQuantizerError("levels must be contiguous and increasing")
        lo, up = lo.copy(), up.copy()
        lo.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def n_levels(self):
        return self.lower.size

    @classmethod
    def from_quantizer(cls, q: Quantizer) -> "SymmetricLevels":
        m = q.m
        if m % 2 != 0:
            raise InvalidQuantizerError("need an even cell count (mid-rise quantizer)")
        b = q.breakpoints
        half = m // 2
        if b[half - 1] != 0.0:
            raise InvalidQuantizerError("mid-rise quantizer must break at zero")
        tol = 1e-9 * max(1.0, float(np.abs(b).max()))
        if np.any(np.abs(b + b[::-1]) > tol):
            raise InvalidQuantizerError("breakpoints must be symmetric about zero")
        lower = b[half - 1:].copy()
        upper = np.concatenate((b[half:], [np.inf]))
        return cls(lower, upper)

    def level_of(self, value) -> int:
        """0-based level containing ``|value|`` (right-closed cells)."""
        a = abs(float(value))
        idx = int(np.searchsorted(self.lower, a, side="left")) - 1
        return max(idx, 0)


def init_state(model: LinearGaussianModel) -> MlqState:
    return MlqState(x_pred=model.x0_mean.copy(), P_pred=model.x0_cov.copy(), k=0)


def _scalar_output(model, k):
    if model.p != 1:
        raise UnsupportedDimensionError(
            f"the moment recursion needs a scalar output, got p={model.p}"
        )


def s_time_update(model, k, state: MlqState, u_k=None) -> MlqState:
    """Time update k -> k+1; the input term is included whenever u is given."""
    if state.x_filt is None:
        raise ValueError("time update needs a filtered state")
    A = model.A_seq[k]
    x_pred = A @ state.x_filt
    if u_k is not None:
        x_pred = x_pred + model.B_seq[k] @ np.asarray(u_k, dtype=np.float64).reshape(-1)
    P_pred = A @ state.P_filt @ A.T + model.Q_seq[k]
    P_pred = 0.5 * (P_pred + P_pred.T)
    return MlqState(x_pred=x_pred, P_pred=P_pred, k=k + 1)


def shrink_factor(levels: SymmetricLevels, mirror_sum: bool = True) -> float:
    """Covariance shrink sum over quantizer levels.

    With ``mirror_sum`` the positive-cell sum is doubled to cover both sign
    mirrors; a 1-bit quantizer then gives exactly 2/pi.
    """
    total = 0.0
    for zl, zu in zip(levels.lower, levels.upper):
        num = phi(zl) - phi(zu)
        den = abs(upper_tail(zl) - upper_tail(zu))
        if den == 0.0:
            raise InvalidQuantizerError(f"level ({zl}, {zu}] has zero probability")
        total += num * num / den
    return 2.0 * total if mirror_sum else total


def s_measurement_update(model, k, state: MlqState, levels: SymmetricLevels,
                         iota_bar, mirror_sum: bool = True) -> MlqState:
    """Measurement update from the dequantized innovation ``iota_bar``.

    The mean correction uses the single level containing ``|iota_bar|`` and
    the sign of ``iota_bar`` (zero counts as positive); the covariance shrink
    uses :func:`shrink_factor` and is data-independent.
    """
    _scalar_output(model, k)
    iota = float(np.asarray(iota_bar).reshape(-1)[0])
    n = levels.level_of(iota)
    sg = 1.0 if iota >= 0.0 else -1.0
    zl, zu = float(levels.lower[n]), float(levels.upper[n])
    num = phi(zl) - phi(zu)
    den = upper_tail(zl) - upper_tail(zu)
    if den == 0.0:
        raise InvalidQuantizerError(f"level ({zl}, {zu}] has zero probability")
    C = model.C_seq[k]
    R = model.R_seq[k]
    P = state.P_pred
    S = (C @ P @ C.T + R).item()
    PCt = (P @ C.T).reshape(-1)
    x_filt = state.x_pred + sg * (num / den) * PCt / math.sqrt(S)
    shrink = shrink_factor(levels, mirror_sum=mirror_sum)
    P_filt = P - shrink * np.outer(PCt, PCt) / S
    P_filt = 0.5 * (P_filt + P_filt.T)
    return MlqState(
        x_pred=state.x_pred, P_pred=state.P_pred, x_filt=x_filt, P_filt=P_filt, k=k
    )


def s_transmit(model, k, q: Quantizer, y_k, state: MlqState) -> int:
    """Quantize the innovation against the recursion's own output prediction."""
    _scalar_output(model, k)
    y = np.asarray(y_k, dtype=np.float64).reshape(-1)
    iota = (y - model.C_seq[k] @ state.x_pred).item()
    return q.quantize(iota)


def run_method_s(model: LinearGaussianModel, q_seq, y_seq, u_seq=None,
                 mirror_sum: bool = True):
    """Transmitter+receiver run over a measurement sequence.

    ``q_seq`` is one Quantizer or a per-step sequence.  Returns per-step
    arrays: predicted/filtered means and covariances (scalars for n=1 stored
    as (T, n)), symbols, innovations, and dequantized innovations.
    """
    y = np.atleast_2d(np.asarray(y_seq, dtype=np.float64))
    if y.shape[0] != model.horizon and y.shape == (1, model.horizon) and model.p == 1:
        y = y.T
    T = y.shape[0]
    qs = [q_seq] * T if isinstance(q_seq, Quantizer) else list(q_seq)
    u = None if u_seq is None else np.atleast_2d(np.asarray(u_seq, dtype=np.float64))
    out = {
        "x_pred": np.empty((T, model.n)), "P_pred": np.empty((T, model.n, model.n)),
        "x_filt": np.empty((T, model.n)), "P_filt": np.empty((T, model.n, model.n)),
        "symbol": np.empty(T, dtype=np.int64), "iota": np.empty(T),
        "iota_bar": np.empty(T),
    }
    state = init_state(model)
    levels_cache = {}
    for k in range(T):
        q = qs[k]
        levels = levels_cache.get(id(q))
        if levels is None:
            levels = levels_cache[id(q)] = SymmetricLevels.from_quantizer(q)
        out["x_pred"][k] = state.x_pred
        out["P_pred"][k] = state.P_pred
        sym = s_transmit(model, k, q, y[k], state)
        iota_bar = q.dequantize(sym)
        out["symbol"][k] = sym
        out["iota"][k] = (y[k] - model.C_seq[k] @ state.x_pred).item()
        out["iota_bar"][k] = iota_bar
        state = s_measurement_update(model, k, state, levels, iota_bar, mirror_sum=mirror_sum)
        out["x_filt"][k] = state.x_filt
        out["P_filt"][k] = state.P_filt
        state = s_time_update(model, k, state, None if u is None else u[k])
    return out
