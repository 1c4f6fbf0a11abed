"""Elastic alignment of SRVFs: Procrustes rotation, DP warping and the
iterative template (Karcher-style mean) fit."""

import logging
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import curves

log = logging.getLogger(__name__)

SLOPE_CAP = 4


@dataclass
class AlignmentResult:
    rotation: np.ndarray
    warping: np.ndarray
    aligned_srvf: np.ndarray
    residual: float
    iterations: int = 1
    converged: bool = True
    degenerate: bool = False
    residual_trace: list = field(default_factory=list)


@dataclass
class TemplateFit:
    template_curve: np.ndarray
    template_srvf: np.ndarray
    alignments: list
    shape_curves: list
    iterations: int
    objective_trace: list


def optimal_rotation(q_ref, q, return_flag=False):
    """Rotation ``O`` minimizing ``||q_ref - O q||`` over SO(3)."""
    q_ref = np.asarray(q_ref, dtype=float)
    q = np.asarray(q, dtype=float)
    if q_ref.shape != q.shape:
        raise ValueError(f"grid mismatch: {q_ref.shape} vs {q.shape}")
    w = curves.trapezoid_weights(q.shape[0])
    m = (q_ref * w[:, None]).T @ q
    u, s, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    rot = u @ np.diag([1.0, 1.0, d]) @ vt
    # rank <= 1: every rotation taking v1 to u1 is optimal; pick the one
    # closest to the identity
    degenerate = bool(s[0] <= 1e-300 or s[1] / s[0] < 1e-10)
    if degenerate:
        rot = np.eye(3) if s[0] <= 1e-300 else _minimal_rotation(vt[0], u[:, 0])
    if return_flag:
        return rot, degenerate
    return rot


def _minimal_rotation(a, b):
    """Smallest-angle rotation taking unit vector ``a`` to unit vector ``b``."""
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    c = float(np.dot(a, b))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        p = np.cross(a, np.eye(3)[np.argmin(np.abs(a))])
        p /= np.linalg.norm(p)
        return 2.0 * np.outer(p, p) - np.eye(3)
    k = axis / s
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + s * kx + (1.0 - c) * (kx @ kx)


@nb.njit(cache=True)
def _segment_cost(q_ref, q, i, j, k, l, h):
    slope = (l - j) / (k - i)
    rs = np.sqrt(slope)
    n = q.shape[0]
    total = 0.0
    for p in range(i, k + 1):
        u = j + (p - i) * slope
        lo = int(np.floor(u))
        if lo >= n - 1:
            lo = n - 2
        frac = u - lo
        c = 0.0
        for d in range(3):
            val = rs * ((1.0 - frac) * q[lo, d] + frac * q[lo + 1, d])
            diff = q_ref[p, d] - val
            c += diff * diff
        if p == i or p == k:
            c *= 0.5
        total += c
    return total * h


@nb.njit(cache=True)
def _dp_path(q_ref, q, cap):
    n = q.shape[0]
    h = 1.0 / (n - 1)
    cost = np.full((n, n), np.inf)
    back_i = -np.ones((n, n), dtype=np.int64)
    back_j = -np.ones((n, n), dtype=np.int64)
    cost[0, 0] = 0.0
    for k in range(1, n):
        for l in range(1, n):
            best = np.inf
            bi = -1
            bj = -1
            for di in range(1, cap + 1):
                i = k - di
                if i < 0:
                    break
                for dj in range(1, cap + 1):
                    j = l - dj
                    if j < 0:
                        break
                    if cost[i, j] == np.inf:
                        continue
                    c = cost[i, j] + _segment_cost(q_ref, q, i, j, k, l, h)
                    if c < best:
                        best = c
                        bi = i
                        bj = j
            cost[k, l] = best
            back_i[k, l] = bi
            back_j[k, l] = bj
    # backtrack to (0, 0)
    path_i = np.empty(n, dtype=np.int64)
    path_j = np.empty(n, dtype=np.int64)
    m = 0
    k = n - 1
    l = n - 1
    while k > 0 or l > 0:
        path_i[m] = k
        path_j[m] = l
        m += 1
        pk = back_i[k, l]
        pl = back_j[k, l]
        k = pk
        l = pl
    path_i[m] = 0
    path_j[m] = 0
    m += 1
    return path_i[:m][::-1].copy(), path_j[:m][::-1].copy(), cost[n - 1, n - 1]


def path_to_warping(path_i, path_j, n):
    """Piecewise-linear warping through lattice nodes ``(s_i, t_j)``."""
    return np.interp(np.arange(n), path_i, path_j) / (n - 1)


def optimal_warping(q_ref, q, slope_cap=SLOPE_CAP, return_cost=False):
    """DP search for the warping minimizing ``||q_ref - (q, gamma)||^2``.

    Paths are monotone lattice paths on the N x N grid with steps
    ``(di, dj)``, ``1 <= di, dj <= slope_cap``.  Each step costs the
    trapezoidal integral of the squared residual along its linear segment.
    """
    q_ref = np.ascontiguousarray(q_ref, dtype=float)
    q = np.ascontiguousarray(q, dtype=float)
    if q_ref.shape != q.shape:
        raise ValueError(f"grid mismatch: {q_ref.shape} vs {q.shape}")
    n = q.shape[0]
    pi, pj, cost = _dp_path(q_ref, q, int(slope_cap))
    gamma = path_to_warping(pi, pj, n)
    if return_cost:
        return gamma, float(cost), (pi, pj)
    return gamma


def align_pair(q_ref, q, max_iter=20, tol=1e-6, slope_cap=SLOPE_CAP, init=None):
    """Alternate Procrustes rotation and DP warping of ``q`` onto ``q_ref``.

    Each sweep optimizes the rotation for the current warping, then the
    warping of the rotated original SRVF.  A sweep is only accepted when
    it lowers the residual, so the trace is non-increasing.  ``init`` is an
    optional ``(rotation, gamma)`` starting point; the default is the
    identity pair.
    """
    q_ref = np.asarray(q_ref, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if init is None:
        rot, gamma = np.eye(3), curves.grid(n)
    else:
        rot, gamma = np.asarray(init[0], dtype=float), curves.check_warping(init[1], n)
    aligned = curves.warp_srvf(q, gamma) @ rot.T
    best = curves.srvf_distance(q_ref, aligned)
    trace = [best]
    degenerate = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new_rot, degenerate = optimal_rotation(q_ref, curves.warp_srvf(q, gamma), return_flag=True)
        new_gamma = optimal_warping(q_ref, q @ new_rot.T, slope_cap)
        new_aligned = curves.warp_srvf(q, new_gamma) @ new_rot.T
        r = curves.srvf_distance(q_ref, new_aligned)
        if r < best:
            change = best - r
            rot, gamma, aligned, best = new_rot, new_gamma, new_aligned, r
            trace.append(r)
            if change < tol:
                converged = True
                break
        else:
            converged = True
            break
    return AlignmentResult(rot, gamma, aligned, best, it, converged, degenerate, trace)


def _residual(q_ref, q, rot, gamma):
    return curves.srvf_distance(q_ref, curves.warp_srvf(q, gamma) @ rot.T)


def shape_curve(curve, rotation, gamma):
    """``O * y(gamma(s))`` for a centered curve."""
    return curves.warp_curve(curve, gamma) @ np.asarray(rotation).T


def fit_template(curve_list, max_iter=10, tol=1e-6, align_iter=20, slope_cap=SLOPE_CAP):
    """Iteratively estimate the template SRVF and align every curve to it.

    Curves are centered first.  Each outer iteration re-aligns the original
    SRVFs to the current template, starting from the previous alignment so
    a curve's fit never gets worse, then resets the template to the mean of
    the aligned SRVFs.
    """
    if len(curve_list) < 2:
        raise ValueError("fit_template needs at least 2 curves")
    ys = [curves.center(c) for c in curve_list]
    n = ys[0].shape[0]
    if any(y.shape[0] != n for y in ys):
        raise ValueError("all curves must share the same grid")
    qs = [curves.to_srvf(y) for y in ys]
    q_mu = curves.to_srvf(np.mean(ys, axis=0))
    alignments = [None] * len(qs)
    trace = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        for i, q in enumerate(qs):
            prev = alignments[i]
            init = None if prev is None else (prev.rotation, prev.warping)
            alignments[i] = align_pair(q_mu, q, max_iter=align_iter, slope_cap=slope_cap, init=init)
        objective = sum(a.residual ** 2 for a in alignments)
        trace.append(objective)
        q_mu = np.mean([a.aligned_srvf for a in alignments], axis=0)
        if len(trace) > 1 and abs(trace[-2] - trace[-1]) <= tol * max(trace[-2], 1e-300):
            break
        if objective == 0.0:
            break
    # residuals reported against the final template
    for a, q in zip(alignments, qs):
        a.residual = _residual(q_mu, q, a.rotation, a.warping)
    template_curve = curves.center(curves.from_srvf(q_mu)) if curves.l2_norm(q_mu) > 0 else np.zeros((n, 3))
    shapes = [shape_curve(y, a.rotation, a.warping) for y, a in zip(ys, alignments)]
    log.debug("template fit: %d iterations, objective %s", iterations, trace[-1])
    return TemplateFit(template_curve, q_mu, alignments, shapes, iterations, trace)
