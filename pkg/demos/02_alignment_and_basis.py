# # Template, FPCA basis and fiber decomposition
#
# Each fiber is split into a translation (its centroid), a rotation, a
# warping and a few shape coefficients on an FPCA basis.  The basis is
# learned from aligned shape curves of a bundle.

import numpy as np

from fibermix import basis as bm
from fibermix import curves, so3, synth

spec = synth.SynthSpec([[synth.BundleSpec("scurve", shape_spread=1.0, translation_spread=3.0,
                                          rotation_spread=0.05, noise=0.2)]],
                       fibers_per_bundle=40, n_points=80, seed=2)
fibers = [f.points for f in synth.synth_generate(spec).fibers]

# ## Elastic template
#
# fit_template alternates between aligning every centered fiber to the
# current template (rotation by SVD, warping by dynamic programming) and
# averaging the aligned SRVFs.  The objective trace never goes up.

b, fit = bm.build_basis(fibers, T=3, template_iter=4)
print("template objective by iteration:", np.round(fit.objective_trace, 3))
print("eigenvalues:", b.eigenvalues)

# ## Decomposing a fiber
#
# A fiber built from known parts is recovered from the basis.

c_true = np.array([1.0, -0.5, 0.2])
O_true = so3.exp_so3([0.2, 0.1, -0.3])
t_true = np.array([5.0, -2.0, 8.0])
y = curves.center(bm.shape_from_coeffs(c_true, b)) @ O_true + t_true
d = bm.decompose_fiber(y, b)
print("translation", d.translation, "coefficients", d.shape_coeffs)
print("rotation error", np.linalg.norm(d.rotation - O_true))

# Real bundle fibers carry noise and shape detail beyond three modes, so the
# reconstruction error is small but not zero.

errs = [bm.decompose_fiber(f, b).recon_error for f in fibers]
print("bundle recon_error: median %.3f, max %.3f (mm)" % (np.median(errs), np.max(errs)))
