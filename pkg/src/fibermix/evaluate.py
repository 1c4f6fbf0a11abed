"""Posterior clustering summaries and partition agreement indices."""

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from scipy.special import comb


@dataclass
class Partition:
    """Hard clustering with labels ``1..k``."""

    labels: np.ndarray
    discrepancy: float = None

    def __post_init__(self):
        self.labels = relabel(self.labels)

    @property
    def k(self):
        return int(self.labels.max()) if len(self.labels) else 0

    def __len__(self):
        return len(self.labels)


def relabel(labels):
    """Map arbitrary labels to ``1..k`` in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv.ravel()] + 1


def coclustering(draws):
    """Fraction of draws in which each pair of items shares a label."""
    draws = np.asarray(draws)
    if draws.ndim != 2 or draws.shape[0] == 0:
        raise ValueError("need a non-empty (n_draws, n_items) array of labels")
    n = draws.shape[1]
    p = np.zeros((n, n))
    for row in draws:
        p += row[:, None] == row[None, :]
    return p / draws.shape[0]


def posterior_mode_k(occupied):
    occupied = np.asarray(occupied, dtype=int)
    if occupied.size == 0:
        raise ValueError("empty chain")
    # argmax returns the first maximum, i.e. the smallest tied k
    return int(np.argmax(np.bincount(occupied)))


def membership_matrix(labels):
    labels = np.asarray(labels)
    return (labels[:, None] == labels[None, :]).astype(float)


def extract_partition(p, k):
    """Average-linkage clustering of ``1 - P`` cut into ``k`` clusters."""
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if k == 1 or n == 1:
        labels = np.ones(n, dtype=int)
    elif k == n:
        labels = np.arange(1, n + 1)
    else:
        dist = np.clip(1.0 - 0.5 * (p + p.T), 0.0, None)
        np.fill_diagonal(dist, 0.0)
        z = linkage(squareform(dist, checks=False), method="average")
        labels = fcluster(z, t=k, criterion="maxclust")
    part = Partition(labels)
    part.discrepancy = float(np.linalg.norm(p - membership_matrix(part.labels)))
    return part


def contingency(labels1, labels2):
    a = np.unique(np.asarray(labels1), return_inverse=True)[1].ravel()
    b = np.unique(np.asarray(labels2), return_inverse=True)[1].ravel()
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    return table


def _labels(p):
    return p.labels if isinstance(p, Partition) else np.asarray(p)


def _pair_counts(p1, p2):
    l1, l2 = _labels(p1), _labels(p2)
    if len(l1) != len(l2):
        raise ValueError("partitions must cover the same items")
    n = len(l1)
    if n < 2:
        raise ValueError("need at least 2 items")
    t = contingency(l1, l2)
    same_both = comb(t, 2).sum()
    same1 = comb(t.sum(axis=1), 2).sum()
    same2 = comb(t.sum(axis=0), 2).sum()
    return n, same_both, same1, same2


def rand_index(p1, p2):
    """(a + b) / C(n, 2) with a, b the agreeing same/different pairs."""
    n, a, s1, s2 = _pair_counts(p1, p2)
    total = comb(n, 2)
    b = total - s1 - s2 + a
    return float((a + b) / total)


def adjusted_rand_index(p1, p2):
    """Hubert-Arabie adjusted Rand index.

    When the denominator vanishes (both partitions are the same trivial
    partition) the result is 1 for identical partitions and 0 otherwise.
    """
    n, a, s1, s2 = _pair_counts(p1, p2)
    expected = s1 * s2 / comb(n, 2)
    denom = 0.5 * (s1 + s2) - expected
    if denom == 0:
        t = contingency(_labels(p1), _labels(p2))
        same = (t > 0).sum(axis=0).max() == 1 and (t > 0).sum(axis=1).max() == 1
        return 1.0 if same else 0.0
    return float((a - expected) / denom)
