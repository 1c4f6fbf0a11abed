"""Preprocessing: demeaning, decomposition and feature standardization."""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import curves
from .basis import build_basis, decompose_fiber
from .ndp import SubjectData

log = logging.getLogger(__name__)


@dataclass
class Scaling:
    """Per-coordinate affine map ``z = (x - mean) / scale``."""

    mean: np.ndarray
    scale: np.ndarray
    skipped: list = field(default_factory=list)

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.mean

    def as_dict(self):
        return {"mean": self.mean, "scale": self.scale, "skipped": self.skipped}


def fit_scaling(x, name=""):
    """Global demean plus unit variance (ddof=0) per coordinate.

    Coordinates with zero variance are centered but not rescaled.
    """
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    skipped = [int(i) for i in np.flatnonzero(sd <= 1e-12 * np.maximum(1.0, np.abs(mean)))]
    if skipped:
        warnings.warn(f"{name}: zero-variance coordinate(s) {skipped} not rescaled", RuntimeWarning, stacklevel=2)
    scale = np.where(sd > 0, sd, 1.0)
    scale[skipped] = 1.0
    return Scaling(mean, scale, skipped)


@dataclass
class Preprocessed:
    """Decomposed and standardized fibers of a dataset.

    ``raw`` holds the component vectors after per-unit demeaning, ``features``
    the standardized ones; ``unit_shift`` is the centroid removed from each
    unit's curves (zero in single-subject mode).
    """

    keys: list
    units: list
    basis: object
    decompositions: list
    raw: dict
    features: dict
    scaling: dict
    unit_shift: dict
    template_fit: object = None

    def subjects(self, components=None):
        """Group standardized features by unit for the population sampler."""
        components = components or list(self.features)
        units = np.asarray(self.units)
        out = []
        for u in dict.fromkeys(self.units):
            rows = units == u
            scan = u.partition(":")[2]
            out.append(SubjectData(u, {m: self.features[m][rows] for m in components}, int(rows.sum()), scan))
        return out

    def record(self):
        """Statistics needed to invert the preprocessing."""
        return {"scaling": {m: s.as_dict() for m, s in self.scaling.items()},
                "unit_shift": self.unit_shift}


def component_vectors(decs):
    return {"trans": np.array([d.translation for d in decs]),
            "shape": np.array([d.shape_coeffs for d in decs]),
            "rot": np.array([d.rotation_embedding for d in decs])}


def unit_centroids(dataset):
    """Mean fiber centroid of every (subject, scan) unit."""
    return {u: np.mean([curves.centroid(f.points) for f in fs], axis=0) for u, fs in dataset.units().items()}


def preprocess(dataset, basis=None, T=3, multi_subject=True, template_iter=5, align_iter=20):
    """Demean per unit, decompose every fiber, then standardize components.

    When ``basis`` is None the template and FPCA basis are fitted on the
    (demeaned) dataset itself.
    """
    if not dataset.fibers:
        raise ValueError("dataset has no fibers")
    shifts = unit_centroids(dataset) if multi_subject else {u: np.zeros(3) for u in dataset.units()}
    demeaned = [f.points - shifts[f.unit] for f in dataset.fibers]
    fit = None
    if basis is None:
        basis, fit = build_basis(demeaned, T=T, template_iter=template_iter, align_iter=align_iter)
    elif basis.n_points != dataset.n_points:
        raise ValueError(f"basis has {basis.n_points} points, data has {dataset.n_points}")
    decs = [decompose_fiber(y, basis, align_iter=align_iter) for y in demeaned]
    raw = component_vectors(decs)
    scaling = {m: fit_scaling(x, m) for m, x in raw.items()}
    feats = {m: scaling[m].apply(x) for m, x in raw.items()}
    return Preprocessed([f.key for f in dataset.fibers], [f.unit for f in dataset.fibers], basis, decs,
                        raw, feats, scaling, shifts, fit)


def invert_features(features, record, units=None):
    """Undo standardization; with ``units`` also restore the unit shift."""
    out = {m: record.scaling[m].invert(z) for m, z in features.items()}
    if units is not None and "trans" in out:
        out["trans"] = out["trans"] + np.array([record.unit_shift[u] for u in units])
    return out
