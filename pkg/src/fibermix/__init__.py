"""Elastic decomposition of brain fiber curves and Bayesian mixture clustering.

Fibers are split into translation, rotation, re-parameterization and shape;
shape is summarized by FPCA coefficients.  A finite Dirichlet product-kernel
mixture clusters the fibers of one subject, and a truncated nested Dirichlet
process clusters subjects by their whole fiber distributions.
"""

from .alignment import AlignmentResult, TemplateFit, align_pair, fit_template, optimal_rotation, optimal_warping
from .basis import (FiberDecomposition, ShapeBasis, build_basis, decompose_fiber, fit_fpca, load_basis,
                    reconstruct, save_basis)
from .curves import CurveError, from_srvf, resample, srvf_distance, to_srvf, warp_curve
from .evaluate import Partition, adjusted_rand_index, coclustering, extract_partition, rand_index
from .gaussian import NiwParams
from .io import FiberDataset, FiberRecord, load_fibers, save_fibers
from .mixture import MixtureConfig, fit_single
from .ndp import NdpConfig, NigParams, SubjectData, fit_ndp, rounded_gaussian_logpmf
from .pipeline import preprocess
from .so3 import RotationError, embed, exp_so3, log_so3
from .synth import SynthSpec, synth_generate

__version__ = "0.1.0"
