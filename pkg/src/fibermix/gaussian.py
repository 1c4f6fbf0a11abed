"""Multivariate normal densities and normal-inverse-Wishart conjugate draws.

Everything here is batched over a leading group axis so the samplers can
update all mixture components in one call.
"""

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)
JITTER = 1e-10


@dataclass(frozen=True)
class NiwParams:
    mu0: np.ndarray
    lambda0: float
    Phi0: np.ndarray
    nu0: float

    def __post_init__(self):
        d = len(self.mu0)
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        if self.nu0 <= d - 1:
            raise ValueError("nu0 must exceed d - 1")
        np.linalg.cholesky(self.Phi0)

    @property
    def dim(self):
        return len(self.mu0)

    @classmethod
    def default(cls, d):
        """NIW(0, 1, I, d + 2): E[mu | Sigma] = 0 and E[Sigma] = I."""
        return cls(np.zeros(d), 1.0, np.eye(d), d + 2.0)


def mvn_logpdf(x, means, covs):
    """Log density of each row of ``x`` under each of G Gaussians.

    x: (n, d); means: (G, d); covs: (G, d, d).  Returns (n, G).
    """
    x = np.asarray(x, dtype=float)
    means = np.atleast_2d(means)
    covs = np.asarray(covs, dtype=float).reshape(means.shape[0], means.shape[1], means.shape[1])
    chol = np.linalg.cholesky(covs)
    d = x.shape[1]
    diff = x[None, :, :] - means[:, None, :]
    z = np.linalg.solve(chol, np.swapaxes(diff, 1, 2))
    maha = np.sum(z * z, axis=1)
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    return (-0.5 * (d * _LOG_2PI + logdet[:, None] + maha)).T


def suff_stats(x, labels, n_groups):
    """Counts, means and scatter matrices of ``x`` rows grouped by label."""
    x = np.asarray(x, dtype=float)
    d = x.shape[1]
    counts = np.bincount(labels, minlength=n_groups).astype(float)
    sums = np.zeros((n_groups, d))
    np.add.at(sums, labels, x)
    means = np.divide(sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)
    outer = np.zeros((n_groups, d, d))
    np.add.at(outer, labels, x[:, :, None] * x[:, None, :])
    scatter = outer - counts[:, None, None] * means[:, :, None] * means[:, None, :]
    return counts, means, scatter


def niw_posterior(prior, counts, means, scatter):
    """Conjugate update; returns (mu_n, lambda_n, Phi_n, nu_n) batched."""
    counts = np.asarray(counts, dtype=float)
    lam_n = prior.lambda0 + counts
    nu_n = prior.nu0 + counts
    mu_n = (prior.lambda0 * prior.mu0 + counts[:, None] * means) / lam_n[:, None]
    dm = means - prior.mu0
    shrink = prior.lambda0 * counts / lam_n
    phi_n = prior.Phi0 + scatter + shrink[:, None, None] * dm[:, :, None] * dm[:, None, :]
    phi_n = 0.5 * (phi_n + np.swapaxes(phi_n, 1, 2))
    return mu_n, lam_n, phi_n, nu_n


def _safe_cholesky(mats):
    try:
        return np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        log.warning("non-SPD scale matrix; adding jitter %g", JITTER)
        eye = np.eye(mats.shape[-1])
        return np.linalg.cholesky(mats + JITTER * eye)


def sample_inv_wishart(scale, df, rng):
    """Batched inverse-Wishart draws via the Bartlett decomposition.

    scale: (G, d, d); df: (G,).  If ``A`` is the Bartlett factor and
    ``scale = U U^T`` then ``U A^{-T} A^{-1} U^T`` is IW(scale, df).
    """
    scale = np.asarray(scale, dtype=float)
    g, d, _ = scale.shape
    df = np.broadcast_to(np.asarray(df, dtype=float), (g,))
    u = _safe_cholesky(scale)
    a = np.zeros((g, d, d))
    chi_df = df[:, None] - np.arange(d)[None, :]
    a[:, np.arange(d), np.arange(d)] = np.sqrt(rng.chisquare(chi_df))
    il = np.tril_indices(d, -1)
    a[:, il[0], il[1]] = rng.standard_normal((g, len(il[0])))
    b = u @ np.swapaxes(np.linalg.inv(a), 1, 2)
    sigma = b @ np.swapaxes(b, 1, 2)
    return 0.5 * (sigma + np.swapaxes(sigma, 1, 2)), b


def sample_niw(prior, counts, means, scatter, rng):
    """One (mu, Sigma) draw per group from the NIW posterior.

    Groups with zero count draw from the prior.
    """
    mu_n, lam_n, phi_n, nu_n = niw_posterior(prior, counts, means, scatter)
    sigma, root = sample_inv_wishart(phi_n, nu_n, rng)
    z = rng.standard_normal(mu_n.shape)
    mu = mu_n + np.einsum("gij,gj->gi", root, z) / np.sqrt(lam_n)[:, None]
    return mu, sigma
