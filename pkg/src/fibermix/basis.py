"""FPCA shape basis, fiber decomposition and path reconstruction."""

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import curves, so3
from .alignment import align_pair, fit_template

log = logging.getLogger(__name__)


@dataclass
class ShapeBasis:
    """Template curve plus ``T`` orthonormal deformation modes.

    ``basis`` has shape ``(T, N, 3)`` and is orthonormal under the
    trapezoidal L2 inner product; ``eigenvalues`` are in mm^2.
    """

    template: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray

    @property
    def T(self):
        return self.basis.shape[0]

    @property
    def n_points(self):
        return self.template.shape[0]

    @cached_property
    def template_srvf(self):
        return curves.to_srvf(self.template)

    def truncate(self, t):
        return ShapeBasis(self.template, self.basis[:t], self.eigenvalues[:t])


@dataclass
class FiberDecomposition:
    """Translation, FPCA coefficients, rotation and warping of one fiber.

    ``offset`` is the small constant by which the model shape
    ``template + sum_l c_l phi_l`` sits off-center (the arc-length centroid
    is not linear in the coefficients); it is fitted alongside the
    coefficients so that ``translation`` stays the fiber centroid.
    """

    translation: np.ndarray
    shape_coeffs: np.ndarray
    rotation: np.ndarray
    warping: np.ndarray
    recon_error: float
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def rotation_embedding(self):
        return so3.embed(self.rotation)


def fit_fpca(shape_curves, template=None, T=3):
    """Functional PCA of aligned shape curves about ``template``.

    Deviations ``g_i - template`` are vectorized into R^{3N} and the sample
    covariance (divisor n - 1) is eigendecomposed in the trapezoid-weighted
    inner product.  ``template`` defaults to the cross-sectional mean, which
    makes the full-rank projection lossless in-sample.
    """
    g = np.asarray(shape_curves, dtype=float)
    n, npts, _ = g.shape
    if n < 2:
        raise ValueError("fit_fpca needs at least 2 shape curves")
    if template is None:
        template = g.mean(axis=0)
    template = np.asarray(template, dtype=float)
    if template.shape != (npts, 3):
        raise ValueError("template and shape curves must share the grid")
    max_rank = min(n - 1, 3 * npts)
    if T > max_rank:
        warnings.warn(f"T={T} exceeds available rank {max_rank}; clamping", stacklevel=2)
        T = max_rank
    sw = np.sqrt(np.repeat(curves.trapezoid_weights(npts), 3))
    dev = (g - template).reshape(n, -1)
    centered = dev - dev.mean(axis=0)
    cov = (centered * sw).T @ (centered * sw) / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:T]
    evals = np.clip(evals[order], 0.0, None)
    phis = (evecs[:, order] / sw[:, None]).T
    for k in range(T):
        if phis[k, np.argmax(np.abs(phis[k]))] < 0:
            phis[k] = -phis[k]
    return ShapeBasis(template.copy(), phis.reshape(T, npts, 3), evals)


def project(shape_curve, basis):
    """Coefficients ``<g - template, phi_l>`` for each basis function."""
    g = np.asarray(shape_curve, dtype=float)
    if g.shape != basis.template.shape:
        raise ValueError(f"grid mismatch: {g.shape} vs {basis.template.shape}")
    d = g - basis.template
    return np.array([curves.inner(d, phi) for phi in basis.basis])


def shape_from_coeffs(coeffs, basis):
    coeffs = np.asarray(coeffs, dtype=float)
    return basis.template + np.tensordot(coeffs, basis.basis[:len(coeffs)], axes=1)


def reconstruct(d, basis):
    """``O^T (template + sum_l c_l phi_l - offset) + c1``; no warping applied."""
    shape = shape_from_coeffs(d.shape_coeffs, basis) - np.asarray(d.offset)
    return shape @ np.asarray(d.rotation) + np.asarray(d.translation)


def project_with_offset(shape_curve, basis):
    """Least-squares coefficients of ``g - template`` on the basis plus a
    free constant vector; returns ``(coeffs, offset)`` with
    ``g ~ template + sum_l c_l phi_l - offset``."""
    g = np.asarray(shape_curve, dtype=float)
    if g.shape != basis.template.shape:
        raise ValueError(f"grid mismatch: {g.shape} vs {basis.template.shape}")
    n = basis.n_points
    consts = np.zeros((3, n, 3))
    for k in range(3):
        consts[k, :, k] = 1.0
    fields_ = np.concatenate([basis.basis, consts])
    w = curves.trapezoid_weights(n)
    gram = np.einsum("anc,bnc,n->ab", fields_, fields_, w)
    rhs = np.einsum("anc,nc,n->a", fields_, g - basis.template, w)
    sol = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    return sol[:basis.T], -sol[basis.T:]


def _align_and_project(yc, q_target, basis, align_iter):
    res = align_pair(q_target, curves.to_srvf(yc), max_iter=align_iter)
    g = curves.warp_curve(yc, res.warping) @ res.rotation.T
    c, offset = project_with_offset(g, basis)
    resid = curves.l2_norm(shape_from_coeffs(c, basis) - offset - g)
    return res, c, offset, resid


def decompose_fiber(y, basis, align_iter=20, refine=3):
    """Split a fiber into translation, shape coefficients, rotation, warping.

    The centered fiber's SRVF is first aligned to the SRVF of the basis
    template and the aligned shape curve is regressed on the basis functions
    and a constant offset.  Up to ``refine`` further rounds re-align the
    fiber to the SRVF of its current model shape instead of the template,
    keeping a round only if it lowers the L2 residual; this stops shape
    variation from leaking into spurious warps.
    ``recon_error`` is the max pointwise distance between the reconstruction
    and the fiber sampled at the same (warped) parameter values.
    """
    y = curves.as_curve(y)
    if y.shape[0] != basis.n_points:
        raise ValueError("fiber must be resampled to the basis grid first")
    c1 = curves.centroid(y)
    yc = y - c1
    best = _align_and_project(yc, basis.template_srvf, basis, align_iter)
    for _ in range(refine):
        model = shape_from_coeffs(best[1], basis) - best[2]
        cand = _align_and_project(yc, curves.to_srvf(model), basis, align_iter)
        if cand[3] >= best[3]:
            break
        best = cand
    res, c2, offset, _ = best
    # rotations near pi cannot be embedded; fail here rather than downstream
    so3.log_so3(res.rotation)
    d = FiberDecomposition(c1, c2, res.rotation, res.warping, 0.0, offset)
    target = curves.warp_curve(y, res.warping)
    d.recon_error = float(np.linalg.norm(reconstruct(d, basis) - target, axis=1).max())
    return d


def pointwise_error(y, d, basis):
    """Per-point reconstruction error of fiber ``y`` (same grid)."""
    target = curves.warp_curve(curves.as_curve(y), d.warping)
    return np.linalg.norm(reconstruct(d, basis) - target, axis=1)


def build_basis(curve_list, T=3, template_iter=10, align_iter=20):
    """Fit the elastic template, then the FPCA basis of the shape curves."""
    fit = fit_template(curve_list, max_iter=template_iter, align_iter=align_iter)
    # the mean of centered curves is not itself centered (the arc-length
    # centroid is nonlinear); re-center so that decomposing the template
    # returns zero coefficients
    template = curves.center(np.mean(fit.shape_curves, axis=0))
    basis = fit_fpca(fit.shape_curves, template, T)
    return basis, fit


def save_basis(basis, path):
    lines = ["#shapebasis v1", f"N {basis.n_points}", f"T {basis.T}",
             "eigenvalues " + " ".join(format(v, ".17g") for v in basis.eigenvalues),
             "template"]
    lines += [" ".join(format(v, ".17g") for v in row) for row in basis.template]
    for k, phi in enumerate(basis.basis, start=1):
        lines.append(f"basis {k}")
        lines += [" ".join(format(v, ".17g") for v in row) for row in phi]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_basis(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("#shapebasis"):
        raise ValueError(f"{path}: not a shape basis file")
    n = int(lines[1].split()[1])
    t = int(lines[2].split()[1])
    evals = np.array([float(v) for v in lines[3].split()[1:]])

    def block(start):
        return np.array([[float(v) for v in ln.split()] for ln in lines[start:start + n]])

    pos = 4
    if lines[pos] != "template":
        raise ValueError(f"{path}: expected template block")
    template = block(pos + 1)
    pos += n + 1
    phis = []
    for _ in range(t):
        phis.append(block(pos + 1))
        pos += n + 1
    return ShapeBasis(template, np.array(phis).reshape(t, n, 3), evals)
