# # Shape or fiber count?
#
# Three subjects are scanned three times.  Bundle shape is stable from scan
# to scan while the number of fibers tracked varies widely.  Clustering the
# nine scans by shape should group scans of the same subject; clustering by
# count alone should not.

import numpy as np

from fibermix import evaluate, io, synth
from fibermix.ndp import NdpConfig, fit_ndp
from fibermix.pipeline import preprocess

res = synth.synth_generate(synth.retest_spec(seed=0))
ds = io.FiberDataset([io.FiberRecord(f.subject_id, f.scan_id, f.fiber_id, f.points) for f in res.fibers], 60)
pre = preprocess(ds, multi_subject=True, template_iter=2)
scans = pre.subjects(["shape"])
truth = [res.subject_labels[s.subject_id] for s in scans]
print("fiber counts per scan:", [s.count for s in scans])


def subject_ari(**kw):
    chain = fit_ndp(scans, NdpConfig(n_iter=1500, burn_in=300, seed=0, **kw))
    k = evaluate.posterior_mode_k(chain.occupied)
    return evaluate.adjusted_rand_index(evaluate.extract_partition(evaluate.coclustering(chain.subject_assign), k),
                                        truth)


# The count-only run uses the rounded-Gaussian kernel with no curve term.

print("shape ARI %.3f" % subject_ari(components=("shape",)))
print("count ARI %.3f" % subject_ari(components=(), joint_counts=True))
