"""Finite Dirichlet product-kernel mixture for one subject's fibers.

Data is a mapping from component name to an ``(n, d_m)`` feature array.
Component names are ``"trans"`` (translation, R^3), ``"shape"`` (FPCA
coefficients, R^T) and ``"rot"`` (embedded rotation, R^3).  Rotations enter
the sampler already embedded; :func:`component_loglik` accepts a rotation
matrix for the ``"rot"`` kernel directly.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import so3
from .gaussian import NiwParams, mvn_logpdf, sample_niw, suff_stats

log = logging.getLogger(__name__)

COMPONENTS = ("trans", "shape", "rot")


class SamplerError(RuntimeError):
    pass


@dataclass
class ComponentParams:
    """Per-component means ``(K, d)`` and covariances ``(K, d, d)``."""

    means: dict
    covs: dict


@dataclass
class MixtureState:
    weights: np.ndarray
    params: ComponentParams
    assignments: np.ndarray
    alpha: float

    @property
    def K(self):
        return len(self.weights)


@dataclass
class MixtureConfig:
    K: int = 10
    n_iter: int = 11000
    burn_in: int = 1000
    thin: int = 1
    alpha: float = 1.0
    priors: dict = field(default_factory=dict)
    seed: int = 0
    param_stride: int = 0

    def validate(self):
        if self.K < 2:
            raise ValueError("K must be at least 2 for a mixture")
        if self.n_iter <= self.burn_in or self.burn_in < 0 or self.thin < 1:
            raise ValueError("need n_iter > burn_in >= 0 and thin >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass
class MixtureChain:
    """Saved draws after burn-in and thinning."""

    assignments: np.ndarray
    weights: np.ndarray
    occupied: np.ndarray
    iterations: np.ndarray
    params: list
    last_state: MixtureState

    def __len__(self):
        return len(self.occupied)


def _check_data(data):
    if not data:
        raise ValueError("at least one component is required")
    unknown = set(data) - set(COMPONENTS)
    if unknown:
        raise ValueError(f"unknown components: {sorted(unknown)}")
    sizes = {len(np.asarray(v)) for v in data.values()}
    if len(sizes) != 1:
        raise ValueError("all components must have the same number of rows")
    n = sizes.pop()
    if n < 1:
        raise ValueError("no data")
    return {m: np.asarray(v, dtype=float).reshape(n, -1) for m, v in data.items()}, n


def _prior_for(priors, m, d):
    p = priors.get(m)
    return p if p is not None else NiwParams.default(d)


def component_loglik(c, m, mean, cov):
    """Log kernel density of one component datum.

    For ``m == "rot"`` a 3x3 rotation is embedded first; a length-3 vector
    is taken as already embedded.
    """
    c = np.asarray(c, dtype=float)
    if m == "rot" and c.shape == (3, 3):
        c = so3.embed(c)
    elif m not in COMPONENTS:
        raise ValueError(f"unknown component {m!r}")
    cov = np.asarray(cov, dtype=float)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance must be symmetric positive definite") from None
    return float(mvn_logpdf(c.reshape(1, -1), np.reshape(mean, (1, -1)), cov[None])[0, 0])


def loglik_matrix(data, params):
    """(n, K) sum over components of the kernel log densities."""
    out = None
    for m, x in data.items():
        ll = mvn_logpdf(x, params.means[m], params.covs[m])
        out = ll if out is None else out + ll
    return out


def sample_categorical(logp, rng):
    """One draw per row of unnormalized log probabilities."""
    logp = np.asarray(logp, dtype=float)
    mx = logp.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(mx)):
        raise SamplerError("all allocation probabilities are zero")
    p = np.exp(logp - mx)
    cum = np.cumsum(p, axis=1)
    u = rng.random(len(p)) * cum[:, -1]
    idx = (cum < u[:, None]).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def gibbs_allocations(state, data, rng):
    with np.errstate(divide="ignore"):
        logw = np.log(state.weights)
    logp = logw[None, :] + loglik_matrix(data, state.params)
    return sample_categorical(logp, rng)


def gibbs_weights(state, rng):
    K = state.K
    counts = np.bincount(state.assignments, minlength=K)
    w = rng.dirichlet(state.alpha / K + counts)
    return w / w.sum()


def gibbs_params(state, data, priors, rng):
    K = state.K
    means, covs = {}, {}
    for m, x in data.items():
        counts, xbar, scatter = suff_stats(x, state.assignments, K)
        means[m], covs[m] = sample_niw(_prior_for(priors, m, x.shape[1]), counts, xbar, scatter, rng)
    return ComponentParams(means, covs)


def joint_loglik(state, data):
    """Sum over fibers of log sum_h pi_h prod_m K_m(c_i^m; theta_h^m)."""
    data, _ = _check_data(data)
    with np.errstate(divide="ignore"):
        logw = np.log(state.weights)
    return float(logsumexp(logw[None, :] + loglik_matrix(data, state.params), axis=1).sum())


def init_state(data, K, alpha, priors, rng):
    data, n = _check_data(data)
    assign = rng.integers(0, K, size=n)
    state = MixtureState(np.full(K, 1.0 / K), None, assign, alpha)
    state.params = gibbs_params(state, data, priors, rng)
    state.weights = gibbs_weights(state, rng)
    return state


def occupied_count(assignments, K):
    return int(np.count_nonzero(np.bincount(assignments, minlength=K)))


def fit_single(data, config=None):
    """Run the three-step Gibbs sampler and return the saved draws.

    Labels in the returned chain are 0-based.
    """
    config = config or MixtureConfig()
    config.validate()
    data, n = _check_data(data)
    rng = np.random.default_rng(config.seed)
    K = config.K
    state = init_state(data, K, config.alpha, config.priors, rng)
    n_saved = len(range(config.burn_in, config.n_iter, config.thin))
    assigns = np.empty((n_saved, n), dtype=np.int64)
    weights = np.empty((n_saved, K))
    occupied = np.empty(n_saved, dtype=np.int64)
    iters = np.empty(n_saved, dtype=np.int64)
    saved_params = []
    k = 0
    for it in range(config.n_iter):
        state.assignments = gibbs_allocations(state, data, rng)
        state.weights = gibbs_weights(state, rng)
        state.params = gibbs_params(state, data, config.priors, rng)
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            assigns[k] = state.assignments
            weights[k] = state.weights
            occupied[k] = occupied_count(state.assignments, K)
            iters[k] = it
            if config.param_stride and k % config.param_stride == 0:
                saved_params.append((it, {m: v.copy() for m, v in state.params.means.items()},
                                     {m: v.copy() for m, v in state.params.covs.items()}))
            k += 1
    return MixtureChain(assigns, weights, occupied, iters, saved_params, state)
