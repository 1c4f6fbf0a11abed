# # Clustering subjects with the nested Dirichlet process
#
# Nine subjects come from three groups, each group a different two-bundle
# shape mixture.  Subjects are clustered by their whole distribution of
# shape coefficients.  The defaults are K = 9, L = 15 and 5000 sweeps with
# 500 burn-in; this walkthrough uses 1500.

import numpy as np

from fibermix import evaluate, io, synth
from fibermix.ndp import NdpConfig, fit_ndp
from fibermix.pipeline import preprocess

res = synth.synth_generate(synth.population_spec(seed=0, fibers_per_bundle=15))
ds = io.FiberDataset([io.FiberRecord(f.subject_id, f.scan_id, f.fiber_id, f.points) for f in res.fibers], 60)
pre = preprocess(ds, multi_subject=True, template_iter=2)
subjects = pre.subjects(["shape"])
truth = [res.subject_labels[s.subject_id] for s in subjects]

chain = fit_ndp(subjects, NdpConfig(n_iter=1500, burn_in=300, seed=0))
P = evaluate.coclustering(chain.subject_assign)
k = evaluate.posterior_mode_k(chain.occupied)
part = evaluate.extract_partition(P, k)
print("subject co-clustering:\n", np.round(P, 2))
print("posterior mode of k:", k, " subject ARI:", evaluate.adjusted_rand_index(part, truth))
print("posterior means: alpha %.2f, beta %.2f" % (chain.alpha.mean(), chain.beta.mean()))
