# # Curves, SRVFs and rotations
#
# A fiber is an (N, 3) array sampled on the uniform grid s_k = k / (N - 1).
# This script walks through the pieces the decomposition is built from.

import numpy as np

from fibermix import curves, so3

# ## Sampling and resampling
#
# Half a circle of radius 1 with an uneven sampling; `resample` puts it on
# a 100-point grid by chord length.

t = np.sort(np.random.default_rng(0).uniform(0, np.pi, 40))
t[0], t[-1] = 0.0, np.pi
raw = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t)])
y = curves.resample(raw, 100)
print("length", curves.curve_length(y), "vs pi", np.pi)
print("centroid", curves.centroid(y))

# ## Square-root velocity functions
#
# q = y' / sqrt(|y'|).  Integrating q |q| gives the curve back up to its
# starting point.

q = curves.to_srvf(y)
back = curves.from_srvf(q, start=y[0])
print("round trip max error", np.abs(back - y).max())

# A warping function re-parameterizes the curve without moving its path.
# Under the SRVF map the action is (q o gamma) sqrt(gamma'), which keeps
# L2 distances between two curves unchanged when both are warped alike.

s = curves.grid(100)
gamma = s + 0.2 * np.sin(np.pi * s) / np.pi
gamma[0], gamma[-1] = 0.0, 1.0
q2 = curves.to_srvf(curves.resample(raw * [1.0, 0.6, 1.0], 100))
print("distance before", curves.srvf_distance(q, q2))
print("distance after a common warp", curves.srvf_distance(curves.warp_srvf(q, gamma), curves.warp_srvf(q2, gamma)))

# ## Rotations
#
# exp_so3 maps an axis-angle vector to a rotation matrix; log_so3 inverts it
# for angles below pi.  The embedding used by the rotation kernel is just the
# log map.

v = np.array([0.3, -1.2, 0.4])
R = so3.exp_so3(v)
print("R is a rotation:", so3.is_rotation(R))
print("log(exp(v)) - v:", so3.log_so3(R) - v)
print("rotation kernel at its mode:", so3.k3_logpdf(R, v, 0.1 * np.eye(3)))
