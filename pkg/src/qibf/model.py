"""Linear Gaussian plant, noise model, and deterministic replay.

The plant is ``x_{k+1} = A_k x_k + B_k u_k + w_k`` with measurement
``y_k = C_k x_k + v_k``; noises are white Gaussians with known covariances
and the initial state is Gaussian and independent of both.

All randomness flows through :func:`numpy.random.default_rng` (PCG64) seeded
explicitly, and every stochastic operation takes the generator (or seed) as
a parameter, so identical seeds give bit-identical runs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError

__all__ = [
    "LinearGaussianModel",
    "NoiseRealization",
    "TrajectoryLog",
    "step_truth",
    "measure",
    "simulate",
    "replay",
    "sample_gaussian",
    "model_to_config",
    "model_from_config",
    "realization_to_config",
    "realization_from_config",
]

_PSD_TOL = 1e-12


def _as_seq(mat, horizon, name, rows, cols):
    """Accept one matrix (broadcast over time) or a length-`horizon` stack."""
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim == 2:
        arr = np.broadcast_to(arr, (horizon,) + arr.shape)
    if arr.shape != (horizon, rows, cols):
        raise DimensionMismatchError(name, (horizon, rows, cols), arr.shape)
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _check_symmetric(mat, name, k):
    if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(mat).max())):
        raise ValueError(f"{name}[{k}] must be symmetric")


@dataclass(frozen=True)
class LinearGaussianModel:
    """Time-indexed system matrices and noise covariances.

    Sequences have shape ``(horizon, rows, cols)``; use :meth:`constant` to
    broadcast fixed matrices over the horizon.  ``Q_k`` must be symmetric
    PSD, ``R_k`` symmetric PD, and ``x0_cov`` symmetric PSD (it may be
    singular).
    """

    A_seq: np.ndarray
    B_seq: np.ndarray
    C_seq: np.ndarray
    Q_seq: np.ndarray
    R_seq: np.ndarray
    x0_mean: np.ndarray
    x0_cov: np.ndarray
    horizon: int
    name: str = ""

    def __post_init__(self):
        horizon = int(self.horizon)
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        A = np.asarray(self.A_seq, dtype=np.float64)
        if A.ndim == 2:
            A = A[None, :, :]
        n = A.shape[-1]
        B = np.asarray(self.B_seq, dtype=np.float64)
        m_u = B.shape[-1] if B.ndim >= 2 else 1
        C = np.asarray(self.C_seq, dtype=np.float64)
        p = C.shape[-2] if C.ndim >= 2 else 1
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "A_seq", _as_seq(self.A_seq, horizon, "A_seq", n, n))
        object.__setattr__(self, "B_seq", _as_seq(self.B_seq, horizon, "B_seq", n, m_u))
        object.__setattr__(self, "C_seq", _as_seq(self.C_seq, horizon, "C_seq", p, n))
        object.__setattr__(self, "Q_seq", _as_seq(self.Q_seq, horizon, "Q_seq", n, n))
        object.__setattr__(self, "R_seq", _as_seq(self.R_seq, horizon, "R_seq", p, p))
        x0_mean = np.asarray(self.x0_mean, dtype=np.float64).reshape(-1)
        if x0_mean.shape != (n,):
            raise DimensionMismatchError("x0_mean", (n,), x0_mean.shape)
        x0_cov = np.atleast_2d(np.asarray(self.x0_cov, dtype=np.float64))
        if x0_cov.shape != (n, n):
            raise DimensionMismatchError("x0_cov", (n, n), x0_cov.shape)
        for k in range(horizon):
            _check_symmetric(self.Q_seq[k], "Q_seq", k)
            _check_symmetric(self.R_seq[k], "R_seq", k)
            if np.linalg.eigvalsh(self.Q_seq[k]).min() < -_PSD_TOL:
                raise ValueError(f"Q_seq[{k}] must be positive semidefinite")
            if np.linalg.eigvalsh(self.R_seq[k]).min() <= 0.0:
                raise ValueError(f"R_seq[{k}] must be positive definite")
        _check_symmetric(x0_cov, "x0_cov", 0)
        if np.linalg.eigvalsh(x0_cov).min() < -_PSD_TOL:
            raise ValueError("x0_cov must be positive semidefinite")
        x0_mean = x0_mean.copy()
        x0_cov = x0_cov.copy()
        x0_mean.setflags(write=False)
        x0_cov.setflags(write=False)
        object.__setattr__(self, "x0_mean", x0_mean)
        object.__setattr__(self, "x0_cov", x0_cov)

    @classmethod
    def constant(cls, A, B, C, Q, R, x0_mean, x0_cov, horizon, name=""):
        """Model with the same matrices at every step; scalars are accepted."""
        to2d = lambda v: np.atleast_2d(np.asarray(v, dtype=np.float64))
        return cls(
            A_seq=to2d(A), B_seq=to2d(B), C_seq=to2d(C), Q_seq=to2d(Q), R_seq=to2d(R),
            x0_mean=np.atleast_1d(np.asarray(x0_mean, dtype=np.float64)),
            x0_cov=to2d(x0_cov), horizon=horizon, name=name,
        )

    @property
    def n(self):
        return self.A_seq.shape[-1]

    @property
    def p(self):
        return self.C_seq.shape[-2]

    @property
    def m_u(self):
        return self.B_seq.shape[-1]

    def zero_inputs(self) -> np.ndarray:
        return np.zeros((self.horizon, self.m_u))


@dataclass(frozen=True)
class NoiseRealization:
    """Recorded noise draws: initial state, process and measurement noises."""

    x0: np.ndarray
    w: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=np.float64).reshape(-1)
        w = np.atleast_2d(np.asarray(self.w, dtype=np.float64))
        v = np.atleast_2d(np.asarray(self.v, dtype=np.float64))
        if w.shape[0] != v.shape[0]:
            raise DimensionMismatchError("v", (w.shape[0], v.shape[1]), v.shape)
        for nm, a in (("x0", x0), ("w", w), ("v", v)):
            a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, nm, a)

    @property
    def horizon(self):
        return self.w.shape[0]


@dataclass(frozen=True)
class TrajectoryLog:
    """States, measurements, and inputs produced by a simulation or replay."""

    x: np.ndarray  # (horizon+1, n)
    y: np.ndarray  # (horizon, p)
    u: np.ndarray  # (horizon, m_u)


def _check_vec(name, vec, size, k):
    v = np.asarray(vec, dtype=np.float64).reshape(-1)
    if v.shape != (size,):
        raise DimensionMismatchError(name, (size,), v.shape, k=k)
    return v


def step_truth(model: LinearGaussianModel, k: int, x_k, u_k, w_k) -> np.ndarray:
    """One step of the plant: ``A_k x_k + B_k u_k + w_k``."""
    x = _check_vec("x_k", x_k, model.n, k)
    u = _check_vec("u_k", u_k, model.m_u, k)
    w = _check_vec("w_k", w_k, model.n, k)
    return model.A_seq[k] @ x + model.B_seq[k] @ u + w


def measure(model: LinearGaussianModel, k: int, x_k, v_k) -> np.ndarray:
    """One measurement: ``C_k x_k + v_k``."""
    x = _check_vec("x_k", x_k, model.n, k)
    v = _check_vec("v_k", v_k, model.p, k)
    return model.C_seq[k] @ x + v


def sample_gaussian(rng: np.random.Generator, mean, cov) -> np.ndarray:
    """Draw from N(mean, cov) via Cholesky; falls back to an eigendecomposition
    with eigenvalues below -1e-12 (relative) rejected and small negatives
    clamped to zero, so singular PSD covariances are accepted."""
    mean = np.asarray(mean, dtype=np.float64).reshape(-1)
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    z = rng.standard_normal(mean.size)
    try:
        return mean + np.linalg.cholesky(cov) @ z
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        scale = max(1.0, float(np.abs(vals).max()))
        if vals.min() < -_PSD_TOL * scale:
            raise ValueError(f"covariance is not PSD (min eigenvalue {vals.min():.3e})")
        vals = np.clip(vals, 0.0, None)
        return mean + vecs @ (np.sqrt(vals) * z)


def simulate(model: LinearGaussianModel, u_seq, seed: int):
    """Draw a noise realization and roll the plant forward.

    The generator is ``numpy.random.default_rng(seed)`` and the draw order is
    fixed: x0, then (w_k, v_k) for k = 0..horizon-1.  Identical arguments
    give bit-identical output.

    Returns
    -------
    (NoiseRealization, TrajectoryLog)
    """
    rng = np.random.default_rng(seed)
    u_seq = _check_inputs(model, u_seq)
    x0 = sample_gaussian(rng, model.x0_mean, model.x0_cov)
    w = np.empty((model.horizon, model.n))
    v = np.empty((model.horizon, model.p))
    zn = np.zeros(model.n)
    zp = np.zeros(model.p)
    for k in range(model.horizon):
        w[k] = sample_gaussian(rng, zn, model.Q_seq[k])
        v[k] = sample_gaussian(rng, zp, model.R_seq[k])
    realization = NoiseRealization(x0, w, v)
    return realization, replay(model, u_seq, realization)


def replay(model: LinearGaussianModel, u_seq, realization: NoiseRealization) -> TrajectoryLog:
    """Trajectory computed from recorded noises; deterministic."""
    u_seq = _check_inputs(model, u_seq)
    if realization.horizon != model.horizon:
        raise DimensionMismatchError(
            "realization", (model.horizon,), (realization.horizon,)
        )
    x = np.empty((model.horizon + 1, model.n))
    y = np.empty((model.horizon, model.p))
    x[0] = _check_vec("x0", realization.x0, model.n, 0)
    for k in range(model.horizon):
        y[k] = measure(model, k, x[k], realization.v[k])
        x[k + 1] = step_truth(model, k, x[k], u_seq[k], realization.w[k])
    return TrajectoryLog(x=x, y=y, u=u_seq)


def _check_inputs(model, u_seq):
    if u_seq is None:
        return model.zero_inputs()
    u = np.atleast_2d(np.asarray(u_seq, dtype=np.float64))
    if u.shape == (1, model.horizon) and model.m_u == 1:
        u = u.T
    if u.shape != (model.horizon, model.m_u):
        raise DimensionMismatchError("u_seq", (model.horizon, model.m_u), u.shape)
    return u


# --- structured-text (JSON-compatible) config schema -----------------------
#
# Matrices are row-major nested lists.  A constant matrix may be given once
# under its plain name ("A"); a time-varying one as a list of matrices under
# "<name>_seq".  Noise sequences in a realization are lists of vectors.

def _mat_from_config(cfg, key, horizon):
    if key + "_seq" in cfg:
        return np.asarray(cfg[key + "_seq"], dtype=np.float64)
    return np.atleast_2d(np.asarray(cfg[key], dtype=np.float64))


def model_from_config(cfg: dict) -> LinearGaussianModel:
    horizon = int(cfg["horizon"])
    return LinearGaussianModel(
        A_seq=_mat_from_config(cfg, "A", horizon),
        B_seq=_mat_from_config(cfg, "B", horizon),
        C_seq=_mat_from_config(cfg, "C", horizon),
        Q_seq=_mat_from_config(cfg, "Q", horizon),
        R_seq=_mat_from_config(cfg, "R", horizon),
        x0_mean=np.asarray(cfg["x0_mean"], dtype=np.float64),
        x0_cov=np.atleast_2d(np.asarray(cfg["x0_cov"], dtype=np.float64)),
        horizon=horizon,
        name=cfg.get("name", ""),
    )


def model_to_config(model: LinearGaussianModel) -> dict:
    def emit(seq):
        first = seq[0]
        if all(np.array_equal(first, seq[k]) for k in range(model.horizon)):
            return first.tolist(), False
        return seq.tolist(), True

    cfg = {"name": model.name, "horizon": model.horizon}
    for key, seq in (
        ("A", model.A_seq), ("B", model.B_seq), ("C", model.C_seq),
        ("Q", model.Q_seq), ("R", model.R_seq),
    ):
        data, varying = emit(seq)
        cfg[key + "_seq" if varying else key] = data
    cfg["x0_mean"] = model.x0_mean.tolist()
    cfg["x0_cov"] = model.x0_cov.tolist()
    return cfg


def realization_from_config(cfg: dict) -> NoiseRealization:
    return NoiseRealization(
        x0=np.asarray(cfg["x0"], dtype=np.float64),
        w=np.asarray(cfg["w"], dtype=np.float64),
        v=np.asarray(cfg["v"], dtype=np.float64),
    )


def realization_to_config(r: NoiseRealization) -> dict:
    return {"x0": r.x0.tolist(), "w": r.w.tolist(), "v": r.v.tolist()}
