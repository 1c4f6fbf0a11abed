"""Synthetic fiber bundles from a translation / rotation / shape forward model.

A fiber is generated as ``O^T (base + sum_l c_l psi_l)(gamma(s)) + t + noise``
with the shape curve centered before rotating, so ``t`` is the fiber's
arc-length centroid up to noise and discretization.
"""

from dataclasses import dataclass, field

import numpy as np

from . import curves, so3


def _base_arc(s):
    return np.column_stack([60.0 * s - 30.0, 18.0 * np.sin(np.pi * s), 4.0 * np.sin(2 * np.pi * s)])


def _base_scurve(s):
    return np.column_stack([60.0 * s - 30.0, 12.0 * np.sin(2 * np.pi * s), 6.0 * np.sin(np.pi * s)])


def _base_line(s):
    return np.column_stack([60.0 * s - 30.0, 2.0 * np.sin(np.pi * s), np.zeros_like(s)])


def _base_hook(s):
    return np.column_stack([50.0 * s - 25.0, 25.0 * s ** 3, 10.0 * np.sin(np.pi * s) ** 2])


BASE_CURVES = {"arc": _base_arc, "scurve": _base_scurve, "line": _base_line, "hook": _base_hook}


def deformation_modes(s):
    """Three smooth, roughly orthogonal deformation directions (mm per unit)."""
    b = np.sin(np.pi * s)
    return np.stack([
        np.column_stack([np.zeros_like(s), np.zeros_like(s), b]),
        np.column_stack([np.zeros_like(s), np.sin(2 * np.pi * s), np.zeros_like(s)]),
        np.column_stack([np.zeros_like(s), b * np.cos(np.pi * s), np.sin(3 * np.pi * s)]),
    ])


@dataclass
class BundleSpec:
    base: str = "arc"
    shape_mean: tuple = (0.0, 0.0, 0.0)
    shape_spread: float = 0.5
    translation_mean: tuple = (0.0, 0.0, 0.0)
    translation_spread: float = 1.0
    rotation_mean: tuple = (0.0, 0.0, 0.0)
    rotation_spread: float = 0.02
    warp_spread: float = 0.0
    noise: float = 0.0
    weight: float = 1.0


@dataclass
class SynthSpec:
    """Population of subject clusters, each a mixture of fiber bundles.

    ``clusters`` lists the bundle specs of every subject cluster.  Each unit
    (a subject scan) draws its fiber count uniformly from ``count_range``
    when given, otherwise uses ``fibers_per_bundle`` per bundle.
    """

    clusters: list = field(default_factory=lambda: [[BundleSpec()]])
    subjects_per_cluster: int = 1
    fibers_per_bundle: int = 50
    count_range: tuple = None
    n_points: int = 100
    seed: int = 0
    subject_translation_spread: float = 0.0

    def validate(self):
        if not self.clusters or any(not c for c in self.clusters):
            raise ValueError("every subject cluster needs at least one bundle")
        if self.subjects_per_cluster < 1 or self.n_points < 2:
            raise ValueError("invalid subjects_per_cluster or n_points")
        for bundles in self.clusters:
            for b in bundles:
                if b.base not in BASE_CURVES:
                    raise ValueError(f"unknown base curve {b.base!r}")
                spreads = (b.shape_spread, b.translation_spread, b.rotation_spread, b.warp_spread, b.noise)
                if min(spreads) < 0:
                    raise ValueError("spreads must be non-negative")
                if b.warp_spread >= 1.0 / np.pi:
                    raise ValueError("warp_spread must be below 1/pi to stay monotone")
        if self.count_range is not None and (self.count_range[0] < 1 or self.count_range[1] < self.count_range[0]):
            raise ValueError("invalid count_range")


@dataclass
class SynthFiber:
    subject_id: str
    scan_id: str
    fiber_id: str
    points: np.ndarray
    bundle: int


@dataclass
class SynthResult:
    fibers: list
    fiber_labels: dict       # "subject:scan:fiber" -> bundle label (1-based)
    subject_labels: dict     # "subject:scan" -> cluster label (1-based)
    counts: dict             # "subject:scan" -> count


def make_fiber(bundle, rng, s):
    modes = deformation_modes(s)
    c = np.asarray(bundle.shape_mean, dtype=float) + bundle.shape_spread * rng.standard_normal(3)
    shape = BASE_CURVES[bundle.base](s) + np.tensordot(c, modes, axes=1)
    a = bundle.warp_spread * rng.uniform(-1.0, 1.0)
    gamma = s + a * np.sin(np.pi * s)
    gamma[0], gamma[-1] = 0.0, 1.0
    shape = curves.warp_curve(shape, gamma)
    shape = curves.center(shape)
    v = np.asarray(bundle.rotation_mean, dtype=float) + bundle.rotation_spread * rng.standard_normal(3)
    rot = so3.exp_so3(v)
    t = np.asarray(bundle.translation_mean, dtype=float) + bundle.translation_spread * rng.standard_normal(3)
    y = shape @ rot + t
    if bundle.noise > 0:
        y = y + bundle.noise * rng.standard_normal(y.shape)
    return y


def synth_generate(spec):
    """Generate fibers plus fiber-level and subject-level truth labels."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    s = curves.grid(spec.n_points)
    fibers, fiber_labels, subject_labels, counts = [], {}, {}, {}
    bundle_offset = 0
    for ci, bundles in enumerate(spec.clusters):
        weights = np.array([b.weight for b in bundles], dtype=float)
        weights /= weights.sum()
        for u in range(spec.subjects_per_cluster):
            sid, scan = f"subj{ci + 1}", f"scan{u + 1}"
            key = f"{sid}:{scan}"
            if spec.count_range is not None:
                total = int(rng.integers(spec.count_range[0], spec.count_range[1] + 1))
                per_bundle = rng.multinomial(total, weights)
            else:
                per_bundle = np.full(len(bundles), spec.fibers_per_bundle)
            shift = spec.subject_translation_spread * rng.standard_normal(3)
            k = 0
            for bi, (b, nb) in enumerate(zip(bundles, per_bundle)):
                for _ in range(nb):
                    fid = f"f{k + 1}"
                    y = make_fiber(b, rng, s) + shift
                    fibers.append(SynthFiber(sid, scan, fid, y, bundle_offset + bi + 1))
                    fiber_labels[f"{key}:{fid}"] = bundle_offset + bi + 1
                    k += 1
            subject_labels[key] = ci + 1
            counts[key] = int(per_bundle.sum())
        bundle_offset += len(bundles)
    return SynthResult(fibers, fiber_labels, subject_labels, counts)


# ---------------------------------------------------------------- presets

def two_bundle_spec(seed=0, n_fibers=200, offset=20.0, noise=0.5, n_points=100):
    """One subject, two bundles offset along y by ``offset`` mm."""
    half = n_fibers // 2
    b1 = BundleSpec(translation_mean=(0.0, 0.0, 0.0), noise=noise)
    b2 = BundleSpec(translation_mean=(0.0, offset, 0.0), noise=noise)
    return SynthSpec([[b1, b2]], 1, half, None, n_points, seed)


def population_spec(seed=0, fibers_per_bundle=25, n_points=60, subjects_per_cluster=3):
    """Three subject clusters, each a distinct two-bundle shape mixture."""
    def pair(base, m1, m2):
        return [BundleSpec(base, shape_mean=m1, shape_spread=0.4, translation_spread=1.0, noise=0.2),
                BundleSpec(base, shape_mean=m2, shape_spread=0.4, translation_spread=1.0, noise=0.2)]
    clusters = [pair("arc", (6.0, 0.0, 0.0), (-6.0, 0.0, 0.0)),
                pair("scurve", (0.0, 6.0, 0.0), (0.0, -6.0, 0.0)),
                pair("hook", (0.0, 0.0, 6.0), (0.0, 0.0, -6.0))]
    return SynthSpec(clusters, subjects_per_cluster, fibers_per_bundle, None, n_points, seed)


def retest_spec(seed=0, n_subjects=3, scans=3, count_range=(30, 90), n_points=60):
    """Stable per-subject bundle shapes, scan fiber counts drawn at random."""
    bases = ["arc", "scurve", "hook", "line"]
    clusters = []
    for k in range(n_subjects):
        m = np.zeros(3)
        m[k % 3] = 5.0 * (1 if k < 3 else -1)
        clusters.append([BundleSpec(bases[k % len(bases)], shape_mean=tuple(m), shape_spread=0.6,
                                    translation_spread=1.5, rotation_spread=0.03, noise=0.3)])
    return SynthSpec(clusters, scans, 0, count_range, n_points, seed, subject_translation_spread=3.0)
