"""Hot numeric kernels: discretized Chapman-Kolmogorov prediction integrals.

The 2-D prediction integral of the augmented-state receiver is the one
operation that dominates runtime (O(N^2) grid nodes, each integrating over
O(N^2) source nodes).  Two exact evaluation orders are provided:

``dense``
    The literal double loop over target and source nodes, with the
    transition kernel truncated at ``trunc`` combined standard deviations
    (default 8, truncation error < 1e-14 of kernel mass).

``shear``
    An algebraic reordering that exploits equal spacing of the two target
    axes: the kernel argument depends on targets only through ``x_i - e_j``,
    which takes ``nx + ne - 1`` distinct values on equal-spaced axes.  This
    drops the cost from O(N^4) to O(N^3) while summing exactly the same
    terms (results agree with ``dense`` to accumulation order, ~1e-13).

``predict_2d`` evaluates the transition kernel pointwise at the nodes.  The
``predict_2d_banded`` family instead integrates, along the error axis, a
Gaussian restricted to a per-source band (the transition law conditioned on
the transmitted cell) against the piecewise-linear nodal basis.  That keeps
mass and first moments exact even when the band is narrower than the grid
spacing, which is exactly what happens under fine quantization.

Each kernel has a numba ``@njit`` implementation and a pure-numpy fallback.
Selection: set ``QIBF_BACKEND`` to ``numba`` or ``numpy`` (default ``auto``
picks numba when importable).  ``benchmarks/bench_predict.py`` compares the
backends.
"""
from __future__ import annotations

import math
import os

import numpy as np
from scipy.special import ndtr

__all__ = [
    "BACKEND",
    "active_backend",
    "predict_1d",
    "predict_2d",
    "predict_2d_dense",
    "predict_2d_shear",
    "predict_2d_banded",
]

try:
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via QIBF_BACKEND=numpy
    _HAVE_NUMBA = False


def _select_backend() -> str:
    env = os.environ.get("QIBF_BACKEND", "auto").strip().lower()
    if env in ("", "auto"):
        return "numba" if _HAVE_NUMBA else "numpy"
    if env == "numpy":
        return "numpy"
    if env == "numba":
        if not _HAVE_NUMBA:
            raise ImportError("QIBF_BACKEND=numba but numba is not importable")
        return "numba"
    raise ValueError(f"QIBF_BACKEND must be 'auto', 'numba' or 'numpy', got {env!r}")


BACKEND = _select_backend()


def active_backend() -> str:
    return BACKEND


_LOG_2PI = math.log(2.0 * math.pi)


# --- 1-D prediction: out(x) = sum_{ x' } N(x - a x' - bu; 0, q) b(x') w(x') --

def _predict_1d_np(belief, w_src, src, dst, a, bu, q):
    arg = dst[:, None] - a * src[None, :] - bu
    kern = np.exp(-0.5 * arg * arg / q) / math.sqrt(2.0 * math.pi * q)
    return kern @ (w_src * belief)


if _HAVE_NUMBA:

    @njit(cache=True, parallel=True, fastmath=True)
    def _predict_1d_nb(belief, w_src, src, dst, a, bu, q):  # pragma: no cover - compiled
        n_dst = dst.size
        n_src = src.size
        out = np.zeros(n_dst)
        c = -0.5 / q
        norm = 1.0 / math.sqrt(2.0 * math.pi * q)
        for i in prange(n_dst):
            acc = 0.0
            for ip in range(n_src):
                d = dst[i] - a * src[ip] - bu
                acc += w_src[ip] * belief[ip] * math.exp(c * d * d)
            out[i] = acc * norm
        return out


def predict_1d(belief, w_src, src, dst, a, bu, q):
    """Chapman-Kolmogorov step for a 1-D belief with Gaussian process noise."""
    belief = np.ascontiguousarray(belief, dtype=np.float64)
    w_src = np.ascontiguousarray(w_src, dtype=np.float64)
    src = np.ascontiguousarray(src, dtype=np.float64)
    dst = np.ascontiguousarray(dst, dtype=np.float64)
    if BACKEND == "numba":
        return _predict_1d_nb(belief, w_src, src, dst, float(a), float(bu), float(q))
    return _predict_1d_np(belief, w_src, src, dst, float(a), float(bu), float(q))


# --- 2-D augmented prediction -----------------------------------------------
#
# Transition kernel for target (x, e) from source (x', e'):
#   pw(x - a x' - bu) * pkv(amkc e' + (x - a x' - bu) - e)
# where pw ~ N(0, q) is the process-noise density and pkv ~ N(0, kvar) the
# gain-scaled measurement-noise density.

def _predict_2d_dense_np(belief, wx, we, xs, es, x, e, a, bu, amkc, q, kvar, trunc):
    nx, ne = x.size, e.size
    out = np.zeros((nx, ne))
    norm = 1.0 / (2.0 * math.pi * math.sqrt(q * kvar))
    lim_w = trunc * math.sqrt(q)
    lim_c = trunc * math.sqrt(kvar)
    wb = belief * we[None, :]
    for i in range(nx):
        wstar = x[i] - a * xs - bu  # (nxs,)
        keep = np.abs(wstar) <= lim_w
        if not np.any(keep):
            continue
        pw = np.exp(-0.5 * wstar[keep] ** 2 / q) * wx[keep]
        base = amkc * es[None, :] + wstar[keep][:, None]  # (nk, nes)
        for j in range(ne):
            carg = base - e[j]
            kern = np.where(
                np.abs(carg) <= lim_c, np.exp(-0.5 * carg * carg / kvar), 0.0
            )
            out[i, j] = pw @ np.sum(kern * wb[keep], axis=1)
    return out * norm


def _predict_2d_shear_np(belief, wx, we, xs, es, x, e, a, bu, amkc, q, kvar):
    nx, ne, nxs = x.size, e.size, xs.size
    h = x[1] - x[0]
    norm = 1.0 / (2.0 * math.pi * math.sqrt(q * kvar))
    r = (x[0] - e[ne - 1]) + h * np.arange(nx + ne - 1)
    wb = belief * we[None, :]
    T = np.empty((nxs, r.size))
    block = max(1, int(2e6 // (es.size * r.size)) or 1)
    for start in range(0, nxs, block):
        stop = min(start + block, nxs)
        base = (
            amkc * es[None, :, None]
            - a * xs[start:stop, None, None]
            - bu
            + r[None, None, :]
        )
        kern = np.exp(-0.5 * base * base / kvar)
        T[start:stop] = np.einsum("ijd,ij->id", kern, wb[start:stop])
    wstar = x[:, None] - a * xs[None, :] - bu
    PW = np.exp(-0.5 * wstar * wstar / q) * wx[None, :]
    d_idx = np.arange(nx)[:, None] - np.arange(ne)[None, :] + ne - 1
    out = np.einsum("ik,kij->ij", PW, T[:, d_idx])
    return out * norm


if _HAVE_NUMBA:

    @njit(cache=True, parallel=True, fastmath=True)
    def _predict_2d_dense_nb(belief, wx, we, xs, es, x, e, a, bu, amkc, q, kvar, trunc):  # pragma: no cover - compiled
        nx, ne = x.size, e.size
        nxs, nes = xs.size, es.size
        out = np.zeros((nx, ne))
        norm = 1.0 / (2.0 * math.pi * math.sqrt(q * kvar))
        lim_w = trunc * math.sqrt(q)
        lim_c = trunc * math.sqrt(kvar)
        cw = -0.5 / q
        cc = -0.5 / kvar
        for i in prange(nx):
            for ip in range(nxs):
                wstar = x[i] - a * xs[ip] - bu
                if abs(wstar) > lim_w:
                    continue
                pw = wx[ip] * math.exp(cw * wstar * wstar)
                for j in range(ne):
                    acc = 0.0
                    for jp in range(nes):
                        carg = amkc * es[jp] + wstar - e[j]
                        if abs(carg) > lim_c:
                            continue
                        acc += we[jp] * belief[ip, jp] * math.exp(cc * carg * carg)
                    out[i, j] += pw * acc
        for i in prange(nx):
            for j in range(ne):
                out[i, j] *= norm
        return out

    @njit(cache=True, parallel=True, fastmath=True)
    def _predict_2d_shear_nb(belief, wx, we, xs, es, x, e, a, bu, amkc, q, kvar):  # pragma: no cover - compiled
        nx, ne = x.size, e.size
        nxs, nes = xs.size, es.size
        nd = nx + ne - 1
        h = x[1] - x[0]
        r0 = x[0] - e[ne - 1]
        cc = -0.5 / kvar
        cw = -0.5 / q
        norm = 1.0 / (2.0 * math.pi * math.sqrt(q * kvar))
        T = np.empty((nxs, nd))
        for ip in prange(nxs):
            base = -a * xs[ip] - bu
            for d in range(nd):
                shift = base + r0 + h * d
                acc = 0.0
                for jp in range(nes):
                    arg = amkc * es[jp] + shift
                    acc += we[jp] * belief[ip, jp] * math.exp(cc * arg * arg)
                T[ip, d] = acc
        out = np.empty((nx, ne))
        for i in prange(nx):
            for j in range(ne):
                acc = 0.0
                for ip in range(nxs):
                    wstar = x[i] - a * xs[ip] - bu
                    acc += wx[ip] * math.exp(cw * wstar * wstar) * T[ip, i - j + ne - 1]
                out[i, j] = acc * norm
        return out


def _prep(*arrays):
    return tuple(np.ascontiguousarray(a, dtype=np.float64) for a in arrays)


def predict_2d_dense(belief, wx, we, xs, es, x, e, a, bu, amkc, q, kvar, trunc=8.0):
    """Reference double loop over target and source nodes (kernel truncated)."""
    belief, wx, we, xs, es, x, e = _prep(belief, wx, we, xs, es, x, e)
    args = (belief, wx, we, xs, es, x, e, float(a), float(bu), float(amkc),
            float(q), float(kvar), float(trunc))
    if BACKEND == "numba":
        return _predict_2d_dense_nb(*args)
    return _predict_2d_dense_np(*args)


def predict_2d_shear(belief, wx, we, xs, es, x, e, a, bu, amkc, q, kvar):
    """Equal-spacing reordering of the dense sum; O(N^3) and exact."""
    hx = x[1] - x[0]
    he = e[1] - e[0]
    if abs(hx - he) > 1e-12 * abs(hx):
        raise ValueError("shear path needs equal spacing on both target axes")
    belief, wx, we, xs, es, x, e = _prep(belief, wx, we, xs, es, x, e)
    args = (belief, wx, we, xs, es, x, e, float(a), float(bu), float(amkc),
            float(q), float(kvar))
    if BACKEND == "numba":
        return _predict_2d_shear_nb(*args)
    return _predict_2d_shear_np(*args)


def predict_2d(belief, wx, we, xs, es, x, e, a, bu, amkc, q, kvar,
               trunc=8.0, force_dense=False):
    """Dispatch to the shear path when the target axes share their spacing."""
    hx = x[1] - x[0]
    he = e[1] - e[0]
    if force_dense or abs(hx - he) > 1e-12 * abs(hx):
        return predict_2d_dense(belief, wx, we, xs, es, x, e, a, bu, amkc, q, kvar, trunc)
    return predict_2d_shear(belief, wx, we, xs, es, x, e, a, bu, amkc, q, kvar)


# --- banded 2-D prediction ---------------------------------------------------
#
# Same factored kernel, but the error-axis noise is a Gaussian restricted to
# a per-source band [lo_e[j'], hi_e[j']] in (e - mu) coordinates, where
# mu = amkc*e' + w*.  The band arises from conditioning the transition on the
# transmitted cell; passing infinite bands recovers the unconditioned kernel.
# Output node values are coefficients on the piecewise-linear (hat) basis,
# so sub-grid bands keep exact mass and first moments.

_SQRT2 = math.sqrt(2.0)


def _p1_pair_np(zc, lo, hi, sig, h):
    """Hat-basis integrals of a banded Gaussian around node centers ``zc``.

    All arrays broadcast; returns the per-node mass coefficients (already
    divided by nothing; caller divides by h to get density values).
    """
    s2 = sig * sig
    pdfn = 1.0 / (sig * math.sqrt(2.0 * math.pi))

    def piece(a_, b_, slope_sign):
        valid = b_ > a_
        a_c = np.where(valid, a_, 0.0)
        b_c = np.where(valid, b_, 0.0)
        dPhi = ndtr(b_c / sig) - ndtr(a_c / sig)
        dphi = pdfn * (np.exp(-0.5 * b_c * b_c / s2) - np.exp(-0.5 * a_c * a_c / s2))
        val = (1.0 + slope_sign * zc / h) * dPhi + slope_sign * (s2 / h) * dphi
        return np.where(valid, val, 0.0)

    left = piece(np.maximum(lo, zc - h), np.minimum(hi, zc), -1.0)
    right = piece(np.maximum(lo, zc), np.minimum(hi, zc + h), +1.0)
    return left + right


def _predict_2d_banded_shear_np(src, wx, we, xs, es, x, e, a, bu, amkc, q, sig,
                                lo_e, hi_e, trunc):
    nx, ne, nxs = x.size, e.size, xs.size
    h = x[1] - x[0]
    r = (x[0] - e[ne - 1]) + h * np.arange(nx + ne - 1)
    lo = np.maximum(lo_e, -trunc * sig)[None, :, None]
    hi = np.minimum(hi_e, trunc * sig)[None, :, None]
    wsrc = src * we[None, :] / h
    T = np.empty((nxs, r.size))
    block = max(1, int(1.5e6 // (es.size * r.size)))
    for start in range(0, nxs, block):
        stop = min(start + block, nxs)
        c = (amkc * es[None, :, None]
             - a * xs[start:stop, None, None] - bu + r[None, None, :])
        vals = _p1_pair_np(-c, lo, hi, sig, h)
        T[start:stop] = np.einsum("bjd,bj->bd", vals, wsrc[start:stop])
    wstar = x[:, None] - a * xs[None, :] - bu
    PW = np.exp(-0.5 * wstar * wstar / q) * wx[None, :] / math.sqrt(2 * math.pi * q)
    d_idx = np.arange(nx)[:, None] - np.arange(ne)[None, :] + ne - 1
    return np.einsum("ik,kij->ij", PW, T[:, d_idx])


def _predict_2d_banded_dense_np(src, wx, we, xs, es, x, e, a, bu, amkc, q, sig,
                                lo_e, hi_e, trunc):
    # correctness fallback for unequal target spacings; O(N^4), keep grids small
    nx, ne, nxs, nes = x.size, e.size, xs.size, es.size
    he = e[1] - e[0]
    lo = np.maximum(lo_e, -trunc * sig)
    hi = np.minimum(hi_e, trunc * sig)
    out = np.zeros((nx, ne))
    norm_w = 1.0 / math.sqrt(2.0 * math.pi * q)
    for i in range(nx):
        wstar = x[i] - a * xs - bu
        pw = np.exp(-0.5 * wstar * wstar / q) * wx * norm_w
        for jp in range(nes):
            zc = e[None, :] - (amkc * es[jp] + wstar[:, None])  # (nxs, ne)
            vals = _p1_pair_np(zc, lo[jp], hi[jp], sig, he)
            out[i] += (pw * src[:, jp] * we[jp] / he) @ vals
    return out


if _HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _norm_cdf_nb(z):  # pragma: no cover - compiled
        return 0.5 * (1.0 + math.erf(z / _SQRT2))

    @njit(cache=True, parallel=True, fastmath=True)
    def _predict_2d_banded_shear_nb(src, wx, we, xs, es, x, e, a, bu, amkc, q,
                                    sig, lo_e, hi_e, trunc):  # pragma: no cover - compiled
        nx, ne = x.size, e.size
        nxs, nes = xs.size, es.size
        nd = nx + ne - 1
        h = x[1] - x[0]
        r0 = x[0] - e[ne - 1]
        win = trunc * sig
        s2 = sig * sig
        pdfn = 1.0 / (sig * math.sqrt(2.0 * math.pi))
        T = np.zeros((nxs, nd))
        for ip in prange(nxs):
            base = -a * xs[ip] - bu + r0
            for jp in range(nes):
                sv = we[jp] * src[ip, jp] / h
                if sv == 0.0:
                    continue
                lo = lo_e[jp]
                if lo < -win:
                    lo = -win
                hi = hi_e[jp]
                if hi > win:
                    hi = win
                if hi <= lo:
                    continue
                c0 = amkc * es[jp] + base
                d_lo = int(math.ceil(((-hi - h) - c0) / h))
                d_hi = int(math.floor(((-lo + h) - c0) / h))
                if d_lo < 0:
                    d_lo = 0
                if d_hi >= nd:
                    d_hi = nd - 1
                for d in range(d_lo, d_hi + 1):
                    zc = -(c0 + h * d)
                    acc = 0.0
                    a1 = zc - h
                    if lo > a1:
                        a1 = lo
                    b1 = zc
                    if hi < b1:
                        b1 = hi
                    if b1 > a1:
                        dPhi = _norm_cdf_nb(b1 / sig) - _norm_cdf_nb(a1 / sig)
                        dphi = pdfn * (math.exp(-0.5 * b1 * b1 / s2)
                                       - math.exp(-0.5 * a1 * a1 / s2))
                        acc += (1.0 - zc / h) * dPhi - (s2 / h) * dphi
                    a2 = zc
                    if lo > a2:
                        a2 = lo
                    b2 = zc + h
                    if hi < b2:
                        b2 = hi
                    if b2 > a2:
                        dPhi = _norm_cdf_nb(b2 / sig) - _norm_cdf_nb(a2 / sig)
                        dphi = pdfn * (math.exp(-0.5 * b2 * b2 / s2)
                                       - math.exp(-0.5 * a2 * a2 / s2))
                        acc += (1.0 + zc / h) * dPhi + (s2 / h) * dphi
                    if acc != 0.0:
                        T[ip, d] += sv * acc
        out = np.empty((nx, ne))
        cw = -0.5 / q
        nw = 1.0 / math.sqrt(2.0 * math.pi * q)
        for i in prange(nx):
            for j in range(ne):
                acc = 0.0
                for ip in range(nxs):
                    ws = x[i] - a * xs[ip] - bu
                    acc += wx[ip] * math.exp(cw * ws * ws) * T[ip, i - j + ne - 1]
                out[i, j] = acc * nw
        return out

    @njit(cache=True, parallel=True, fastmath=True)
    def _predict_2d_banded_dense_nb(src, wx, we, xs, es, x, e, a, bu, amkc, q,
                                    sig, lo_e, hi_e, trunc):  # pragma: no cover - compiled
        nx, ne = x.size, e.size
        nxs, nes = xs.size, es.size
        he = e[1] - e[0]
        e0 = e[0]
        win = trunc * sig
        s2 = sig * sig
        pdfn = 1.0 / (sig * math.sqrt(2.0 * math.pi))
        cw = -0.5 / q
        nw = 1.0 / math.sqrt(2.0 * math.pi * q)
        lim_w = trunc * math.sqrt(q)
        out = np.zeros((nx, ne))
        for i in prange(nx):
            for ip in range(nxs):
                wstar = x[i] - a * xs[ip] - bu
                if abs(wstar) > lim_w:
                    continue
                pw = wx[ip] * math.exp(cw * wstar * wstar) * nw
                for jp in range(nes):
                    sv = we[jp] * src[ip, jp] / he
                    if sv == 0.0:
                        continue
                    lo = lo_e[jp]
                    if lo < -win:
                        lo = -win
                    hi = hi_e[jp]
                    if hi > win:
                        hi = win
                    if hi <= lo:
                        continue
                    mu = amkc * es[jp] + wstar
                    # nodes with e_j in [mu + lo - he, mu + hi + he]
                    j_lo = int(math.ceil((mu + lo - he - e0) / he))
                    j_hi = int(math.floor((mu + hi + he - e0) / he))
                    if j_lo < 0:
                        j_lo = 0
                    if j_hi >= ne:
                        j_hi = ne - 1
                    for j in range(j_lo, j_hi + 1):
                        zc = e[j] - mu
                        acc = 0.0
                        a1 = zc - he
                        if lo > a1:
                            a1 = lo
                        b1 = zc
                        if hi < b1:
                            b1 = hi
                        if b1 > a1:
                            dPhi = _norm_cdf_nb(b1 / sig) - _norm_cdf_nb(a1 / sig)
                            dphi = pdfn * (math.exp(-0.5 * b1 * b1 / s2)
                                           - math.exp(-0.5 * a1 * a1 / s2))
                            acc += (1.0 - zc / he) * dPhi - (s2 / he) * dphi
                        a2 = zc
                        if lo > a2:
                            a2 = lo
                        b2 = zc + he
                        if hi < b2:
                            b2 = hi
                        if b2 > a2:
                            dPhi = _norm_cdf_nb(b2 / sig) - _norm_cdf_nb(a2 / sig)
                            dphi = pdfn * (math.exp(-0.5 * b2 * b2 / s2)
                                           - math.exp(-0.5 * a2 * a2 / s2))
                            acc += (1.0 + zc / he) * dPhi + (s2 / he) * dphi
                        if acc != 0.0:
                            out[i, j] += pw * sv * acc
        return out


def predict_2d_banded(src, wx, we, xs, es, x, e, a, bu, amkc, q, sig,
                      lo_e, hi_e, trunc=8.0, force_dense=False):
    """Banded prediction step (see module docstring).

    ``sig`` is the standard deviation of the error-axis noise; ``lo_e`` and
    ``hi_e`` give the per-source band in (e - mu) coordinates and may be
    infinite.
    """
    src, wx, we, xs, es, x, e = _prep(src, wx, we, xs, es, x, e)
    lo_e = np.ascontiguousarray(lo_e, dtype=np.float64)
    hi_e = np.ascontiguousarray(hi_e, dtype=np.float64)
    if lo_e.shape != (es.size,) or hi_e.shape != (es.size,):
        raise ValueError("band bounds must be per-source-node arrays")
    args = (src, wx, we, xs, es, x, e, float(a), float(bu), float(amkc),
            float(q), float(sig), lo_e, hi_e, float(trunc))
    hx = x[1] - x[0]
    he = e[1] - e[0]
    dense = force_dense or abs(hx - he) > 1e-12 * abs(hx)
    if BACKEND == "numba":
        if dense:
            return _predict_2d_banded_dense_nb(*args)
        return _predict_2d_banded_shear_nb(*args)
    if dense:
        return _predict_2d_banded_dense_np(*args)
    return _predict_2d_banded_shear_np(*args)
