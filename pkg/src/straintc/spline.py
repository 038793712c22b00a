"""Natural cubic spline interpolation and bad-frame reconstruction.

Each pixel's incremental strain samples at the good-frame times define a
natural cubic spline (zero second derivative at both end knots); bad frames
are replaced by the spline evaluated at their acquisition times.  The spline
is built by solving the symmetric tridiagonal system for the knot second
derivatives with the Thomas algorithm, which is safe here because the system
is strictly diagonally dominant.

Interval m of the spline is stored in the local form

    s_m(t) = a_m (t - t_m)^3 + b_m (t - t_m)^2 + c_m (t - t_m) + d_m
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degrade import FrameQualityMask
from .phantom import StrainStack, frame_times

__all__ = ["CubicSpline", "build_natural_spline", "eval_spline", "reconstruct_stack"]

MIN_KNOTS = 4


def _solve_tridiagonal(lower, diag, upper, rhs):
    """Thomas solve of a tridiagonal system; rhs may be (n,) or (n, k).

    lower[i] multiplies x[i-1] in row i (lower[0] unused); upper[i]
    multiplies x[i+1] in row i (upper[-1] unused).  No pivoting: callers
    guarantee diagonal dominance.
    """
    n = diag.shape[0]
    cp = np.empty(n - 1)
    dp = np.empty_like(rhs, dtype=np.float64)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * cp[i - 1]
        if i < n - 1:
            cp[i] = upper[i] / den
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / den
    for i in range(n - 2, -1, -1):
        dp[i] -= cp[i] * dp[i + 1]
    return dp


def _natural_second_derivatives(knots, values):
    """Knot second derivatives M of the natural spline; values (n,) or (n, k)."""
    n = knots.shape[0]
    h = np.diff(knots)
    M = np.zeros_like(values, dtype=np.float64)
    slopes = np.diff(values, axis=0) / (h[:, None] if values.ndim == 2 else h)
    rhs = 6.0 * (slopes[1:] - slopes[:-1])
    # interior equations: h[i-1] M[i-1] + 2(h[i-1]+h[i]) M[i] + h[i] M[i+1]
    lower = np.concatenate(([0.0], h[1:-1]))
    diag = 2.0 * (h[:-1] + h[1:])
    upper = np.concatenate((h[1:-1], [0.0]))
    M[1:-1] = _solve_tridiagonal(lower, diag, upper, rhs)
    return M


def _interval_coefficients(knots, values, M):
    """(a, b, c, d) per interval from values and knot second derivatives."""
    h = np.diff(knots)
    hc = h[:, None] if values.ndim == 2 else h
    a = (M[1:] - M[:-1]) / (6.0 * hc)
    b = M[:-1] / 2.0
    c = np.diff(values, axis=0) / hc - hc * (2.0 * M[:-1] + M[1:]) / 6.0
    d = values[:-1].copy()
    return a, b, c, d


@dataclass
class CubicSpline:
    """Natural cubic spline through (knots_t, values).

    coeffs has shape (n_intervals, 4) holding (a, b, c, d) of the local cubic
    on each interval.
    """

    knots_t: np.ndarray
    values: np.ndarray
    coeffs: np.ndarray

    @property
    def n_knots(self):
        return self.knots_t.size


def build_natural_spline(knots_t, values) -> CubicSpline:
    """Build the unique natural cubic spline through the given points.

    Requires at least 4 strictly increasing knots; with fewer points a cubic
    spline degenerates to a lower-order polynomial and the caller should not
    be using this reconstruction at all.
    """
    knots_t = np.asarray(knots_t, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if knots_t.ndim != 1 or values.shape != knots_t.shape:
        raise ValueError("knots_t and values must be matching 1-D vectors")
    if knots_t.size < MIN_KNOTS:
        raise ValueError(f"insufficient knots: need >= {MIN_KNOTS}, got {knots_t.size}")
    if not np.all(np.diff(knots_t) > 0):
        raise ValueError("non-monotonic knots: times must be strictly increasing")
    if not (np.all(np.isfinite(knots_t)) and np.all(np.isfinite(values))):
        raise ValueError("knots and values must be finite")
    M = _natural_second_derivatives(knots_t, values)
    a, b, c, d = _interval_coefficients(knots_t, values, M)
    return CubicSpline(knots_t, values, np.stack([a, b, c, d], axis=1))


def eval_spline(spline: CubicSpline, t) -> np.ndarray:
    """Evaluate the spline at scalar or array t.

    Exact knot times return the stored knot values.  Times outside the knot
    range are evaluated with the boundary interval's cubic (clamped
    extrapolation), the mildest extension a natural spline offers.
    """
    t = np.asarray(t, dtype=np.float64)
    scalar = t.ndim == 0
    tq = np.atleast_1d(t)
    idx = np.clip(np.searchsorted(spline.knots_t, tq, side="right") - 1,
                  0, spline.n_knots - 2)
    dt = tq - spline.knots_t[idx]
    a, b, c, d = spline.coeffs[idx].T
    out = ((a * dt + b) * dt + c) * dt + d
    # the last knot falls into the last interval with dt = h; return the
    # stored ordinate instead so knot interpolation is exact at every knot
    at_end = tq == spline.knots_t[-1]
    if at_end.any():
        out[at_end] = spline.values[-1]
    return out[0] if scalar else out


def reconstruct_stack(stack: StrainStack, mask: FrameQualityMask) -> StrainStack:
    """Replace every bad frame of an incremental stack with per-pixel natural
    spline interpolation over the good frames.

    Good frames pass through bit-exactly.  All pixels share the same knot
    times, so one tridiagonal factorization serves the whole image: the solve
    and the polynomial evaluation are vectorized over pixels.
    """
    if stack.kind != "incremental":
        raise ValueError("reconstruction operates on incremental stacks")
    if stack.n_frames != mask.n_frames:
        raise ValueError(f"stack has {stack.n_frames} frames but mask has {mask.n_frames}")
    if mask.n_good < MIN_KNOTS:
        raise ValueError(f"insufficient good frames: need >= {MIN_KNOTS}, got {mask.n_good}")
    bad = mask.bad_indices
    out = stack.frames.copy()
    if bad.size == 0:
        return StrainStack(out, stack.sample_time_s, "incremental")

    times = frame_times(stack.n_frames, stack.sample_time_s)
    knots = times[mask.good]
    n, height, width = stack.frames.shape
    flat = stack.frames.reshape(n, height * width)
    vals = flat[mask.good]

    M = _natural_second_derivatives(knots, vals)
    a, b, c, d = _interval_coefficients(knots, vals, M)
    idx = np.clip(np.searchsorted(knots, times[bad], side="right") - 1, 0, knots.size - 2)
    dt = (times[bad] - knots[idx])[:, None]
    recon = ((a[idx] * dt + b[idx]) * dt + c[idx]) * dt + d[idx]
    out.reshape(n, height * width)[bad] = recon
    return StrainStack(out, stack.sample_time_s, "incremental")
