"""Sampled 3D curves, square-root velocity functions and the warping action.

A curve is an ``(N, 3)`` float array sampled on the uniform grid
``s_k = k / (N - 1)``.  SRVFs and warping functions live on the same grid.
"""

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

EPS_SPEED = 1e-8


class CurveError(ValueError):
    """Raised for curves that violate the sampled-curve invariants."""


def grid(n):
    return np.linspace(0.0, 1.0, n)


def as_curve(points):
    """Validate and return ``points`` as a float ``(N, 3)`` array."""
    y = np.asarray(points, dtype=float)
    if y.ndim != 2 or y.shape[1] != 3:
        raise CurveError(f"expected an (N, 3) array, got shape {y.shape}")
    if y.shape[0] < 2:
        raise CurveError("a curve needs at least 2 points")
    if not np.all(np.isfinite(y)):
        raise CurveError("curve has non-finite coordinates")
    return y


def _segment_lengths(y):
    return np.linalg.norm(np.diff(y, axis=0), axis=1)


def resample(curve, n):
    """Resample a curve onto ``n`` uniform grid points.

    The input is parameterized by normalized chord length and interpolated
    with a cubic spline, so the output is close to arc-length uniform.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    y = as_curve(curve)
    seg = _segment_lengths(y)
    keep = np.concatenate([[True], seg > 0])
    y = y[keep]
    seg = seg[seg > 0]
    total = seg.sum()
    if y.shape[0] < 2 or total <= 0:
        raise CurveError("cannot resample a zero-length curve")
    t = np.concatenate([[0.0], np.cumsum(seg)]) / total
    t[-1] = 1.0
    if y.shape[0] == 2:
        s = grid(n)[:, None]
        return y[0] + s * (y[1] - y[0])
    spline = CubicSpline(t, y, axis=0)
    out = spline(grid(n))
    out[0], out[-1] = y[0], y[-1]
    return out


def curve_length(curve):
    """Length of the piecewise-linear curve through the samples."""
    return float(_segment_lengths(as_curve(curve)).sum())


def centroid(curve):
    """Arc-length weighted centroid, i.e. the integral of y |y'| ds over L."""
    y = as_curve(curve)
    seg = _segment_lengths(y)
    total = seg.sum()
    if total <= 0:
        raise CurveError("centroid of a zero-length curve is undefined")
    mid = 0.5 * (y[1:] + y[:-1])
    return (seg[:, None] * mid).sum(axis=0) / total


def center(curve):
    y = as_curve(curve)
    return y - centroid(y)


def derivative(values):
    """Second-order central differences inside, one-sided at the ends.

    Used for warping functions: the result is positive wherever the input
    is strictly increasing, which the square root in the warping action needs.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    return np.gradient(values, 1.0 / (n - 1), axis=0, edge_order=1)


_D4_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_D4_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def curve_derivative(values):
    """Fourth-order central differences, one-sided stencils at the ends.

    Falls back to :func:`derivative` for grids shorter than 5 points.
    """
    y = np.asarray(values, dtype=float)
    n = y.shape[0]
    if n < 5:
        return derivative(y)
    h = 1.0 / (n - 1)
    d = np.empty_like(y)
    d[2:-2] = (-y[4:] + 8.0 * y[3:-1] - 8.0 * y[1:-3] + y[:-4]) / (12.0 * h)
    d[0] = np.tensordot(_D4_EDGE0, y[:5], axes=1) / h
    d[1] = np.tensordot(_D4_EDGE1, y[:5], axes=1) / h
    d[-1] = -np.tensordot(_D4_EDGE0, y[::-1][:5], axes=1) / h
    d[-2] = -np.tensordot(_D4_EDGE1, y[::-1][:5], axes=1) / h
    return d


def to_srvf(curve):
    """SRVF ``q = y' / sqrt(|y'|)``; zero where the speed is below EPS_SPEED."""
    y = as_curve(curve)
    dy = curve_derivative(y)
    speed = np.linalg.norm(dy, axis=1)
    q = np.zeros_like(dy)
    ok = speed >= EPS_SPEED
    q[ok] = dy[ok] / np.sqrt(speed[ok])[:, None]
    return q


def from_srvf(q, start=(0.0, 0.0, 0.0)):
    """Integrate ``q |q|`` from ``start``.

    Cumulative Simpson quadrature, or the trapezoid rule below 3 points.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    v = q * np.linalg.norm(q, axis=1)[:, None]
    h = 1.0 / (n - 1)
    if n >= 3:
        y = cumulative_simpson(v, dx=h, axis=0, initial=0.0)
    else:
        y = np.zeros_like(q)
        y[1:] = np.cumsum(0.5 * h * (v[1:] + v[:-1]), axis=0)
    return y + np.asarray(start, dtype=float)


def check_warping(gamma, n=None):
    g = np.asarray(gamma, dtype=float)
    if g.ndim != 1 or (n is not None and g.shape[0] != n):
        raise ValueError("warping function must be a vector on the curve grid")
    if abs(g[0]) > 1e-12 or abs(g[-1] - 1.0) > 1e-12:
        raise ValueError("warping function must fix the endpoints 0 and 1")
    if np.any(np.diff(g) <= 0):
        raise ValueError("warping function must be strictly increasing")
    return g


def interp_curve(values, at):
    """Linearly interpolate grid values (N, d) at parameter values ``at``."""
    values = np.asarray(values, dtype=float)
    s = grid(values.shape[0])
    return np.column_stack([np.interp(at, s, values[:, k]) for k in range(values.shape[1])])


def warp_curve(curve, gamma):
    """Re-parameterize a curve: ``y(gamma(s))``."""
    g = check_warping(gamma, np.asarray(curve).shape[0])
    return interp_curve(curve, g)


def warp_srvf(q, gamma):
    """SRVF of the warped curve: ``(q o gamma) sqrt(gamma')``."""
    q = np.asarray(q, dtype=float)
    g = check_warping(gamma, q.shape[0])
    if np.array_equal(g, grid(q.shape[0])):
        return q.copy()
    dg = derivative(g)
    return interp_curve(q, g) * np.sqrt(dg)[:, None]


def inner(a, b):
    """Trapezoidal L2 inner product of two (N, d) functions on the unit grid."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.shape} vs {b.shape}")
    f = np.sum(a * b, axis=tuple(range(1, a.ndim)))
    return float(np.trapezoid(f, dx=1.0 / (a.shape[0] - 1)))


def l2_norm(a):
    return float(np.sqrt(max(inner(a, a), 0.0)))


def srvf_distance(q1, q2):
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if q1.shape != q2.shape:
        raise ValueError(f"grid mismatch: {q1.shape} vs {q2.shape}")
    return l2_norm(q1 - q2)


def trapezoid_weights(n):
    w = np.full(n, 1.0 / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w
