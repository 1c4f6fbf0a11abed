"""Truncated nested Dirichlet process over subjects' fiber distributions.

Subjects are clustered by their whole fiber distribution (``zeta``); fibers
within a subject cluster ``h`` are clustered over ``L`` atoms (``xi``).  The
optional joint mode adds a rounded-Gaussian kernel on each subject's fiber
count, with the count parameters tied to the subject cluster.

Labels are 0-based throughout.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, logsumexp
from scipy.stats import truncnorm

from .gaussian import NiwParams, mvn_logpdf, sample_niw, suff_stats
from .mixture import COMPONENTS, SamplerError, sample_categorical

log = logging.getLogger(__name__)


@dataclass
class SubjectData:
    subject_id: str
    features: dict
    count: int = None
    scan_id: str = ""

    def __post_init__(self):
        sizes = {len(np.asarray(v)) for v in self.features.values()}
        if len(sizes) > 1:
            raise ValueError(f"subject {self.subject_id}: components differ in length")
        n = sizes.pop() if sizes else 0
        if self.count is None:
            self.count = n
        if self.count < 0:
            raise ValueError(f"subject {self.subject_id}: negative count")

    @property
    def n_fibers(self):
        return len(next(iter(self.features.values()))) if self.features else 0


@dataclass(frozen=True)
class NigParams:
    """Normal-inverse-gamma prior on (mean, variance) of the count kernel."""

    m0: float = 0.0
    kappa0: float = 0.01
    a0: float = 2.0
    b0: float = 2.0


@dataclass
class NdpConfig:
    K: int = 9
    L: int = 15
    n_iter: int = 5000
    burn_in: int = 500
    thin: int = 1
    components: tuple = ("shape",)
    priors: dict = field(default_factory=dict)
    alpha_prior: tuple = (3.0, 3.0)
    beta_prior: tuple = (3.0, 3.0)
    alpha: float = 1.0
    beta: float = 1.0
    sample_concentrations: bool = True
    joint_counts: bool = False
    count_prior: NigParams = NigParams()
    standardize_counts: bool = True
    prior_only: bool = False
    seed: int = 0

    def validate(self):
        if self.K < 2 or self.L < 2:
            raise ValueError("K and L must both be at least 2")
        if self.n_iter <= self.burn_in or self.burn_in < 0 or self.thin < 1:
            raise ValueError("need n_iter > burn_in >= 0 and thin >= 1")
        unknown = set(self.components) - set(COMPONENTS)
        if unknown:
            raise ValueError(f"unknown components: {sorted(unknown)}")
        if not self.components and not self.joint_counts and not self.prior_only:
            raise ValueError("no likelihood: select components or joint_counts")


@dataclass
class NdpState:
    subject_weights: np.ndarray      # (K,)
    atom_weights: np.ndarray         # (L, K), columns sum to one
    means: dict                      # m -> (L, K, d)
    covs: dict                       # m -> (L, K, d, d)
    subject_assign: np.ndarray       # (J,)
    fiber_assign: np.ndarray         # (n_total,)
    alpha: float
    beta: float
    stick_v: np.ndarray              # (K - 1,)
    stick_u: np.ndarray              # (L - 1, K)
    log1m_v: np.ndarray
    log1m_u: np.ndarray
    count_params: np.ndarray = None  # (K, 2) mean, variance

    @property
    def K(self):
        return len(self.subject_weights)

    @property
    def L(self):
        return self.atom_weights.shape[0]


@dataclass
class NdpChain:
    subject_assign: np.ndarray
    fiber_assign: np.ndarray
    occupied: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    subject_weights: np.ndarray
    iterations: np.ndarray
    subject_index: np.ndarray
    last_state: NdpState

    def __len__(self):
        return len(self.occupied)

    def fibers_of(self, j):
        return self.fiber_assign[:, self.subject_index == j]


@dataclass
class _Pooled:
    """Fibers of all subjects stacked, with the owning subject per row."""

    features: dict
    subject_index: np.ndarray
    counts: np.ndarray
    J: int


def _pool(subjects, components):
    feats = {m: np.concatenate([np.asarray(s.features[m], dtype=float).reshape(s.n_fibers, -1)
                                for s in subjects]) for m in components}
    idx = np.concatenate([np.full(s.n_fibers, j) for j, s in enumerate(subjects)])
    counts = np.array([s.count for s in subjects], dtype=int)
    return _Pooled(feats, idx.astype(np.int64), counts, len(subjects))


# ---------------------------------------------------------------- counts

def rounded_gaussian_logpmf(w, mean, var):
    """Log pmf of a Gaussian rounded up to the non-negative integers.

    Mass on ``(w - 1, w]`` goes to ``w >= 1``; all mass at or below 0 goes
    to ``w = 0``.
    """
    var = np.asarray(var, dtype=float)
    if np.any(var <= 0):
        raise ValueError("variance must be positive")
    w = np.asarray(w, dtype=float)
    sd = np.sqrt(var)
    hi = log_ndtr((w - mean) / sd)
    lo = log_ndtr((w - 1.0 - mean) / sd)
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = hi + np.log1p(-np.exp(lo - hi))
    out = np.where(w <= 0, hi, diff)
    # far in the upper tail both CDFs round to 1; use survival functions
    tail = (w > 0) & ~np.isfinite(out)
    if np.any(tail):
        shi = log_ndtr(-(w - 1.0 - mean) / sd)
        slo = log_ndtr(-(w - mean) / sd)
        with np.errstate(divide="ignore"):
            alt = shi + np.log1p(-np.exp(slo - shi))
        out = np.where(tail, alt, out)
    return out


def _count_interval(w):
    w = np.asarray(w, dtype=float)
    lo = np.where(w <= 0, -np.inf, w - 1.0)
    hi = np.where(w <= 0, 0.0, w)
    return lo, hi


def sample_latent_counts(counts, mean, var, rng):
    """Latent normals truncated to each count's rounding interval."""
    sd = np.sqrt(var)
    lo, hi = _count_interval(counts)
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    z = truncnorm.rvs(a, b, random_state=rng)
    return mean + sd * np.atleast_1d(z)


def count_prior_raw(prior, counts, standardize):
    """Express a standardized-scale NIG prior on the raw count scale."""
    if not standardize:
        return prior
    c = np.asarray(counts, dtype=float)
    loc = c.mean() if len(c) else 0.0
    scale = c.std() if len(c) > 1 and c.std() > 0 else 1.0
    return NigParams(loc + scale * prior.m0, prior.kappa0, prior.a0, scale ** 2 * prior.b0)


def sample_nig(prior, x_by_group, rng):
    """Posterior (mean, variance) draws, one per group of observations."""
    out = np.empty((len(x_by_group), 2))
    for h, x in enumerate(x_by_group):
        x = np.asarray(x, dtype=float)
        n = len(x)
        kn = prior.kappa0 + n
        an = prior.a0 + 0.5 * n
        if n:
            xbar = x.mean()
            mn = (prior.kappa0 * prior.m0 + n * xbar) / kn
            bn = prior.b0 + 0.5 * ((x - xbar) ** 2).sum() + 0.5 * prior.kappa0 * n * (xbar - prior.m0) ** 2 / kn
        else:
            mn, bn = prior.m0, prior.b0
        var = bn / rng.gamma(an)
        out[h] = (rng.normal(mn, np.sqrt(var / kn)), var)
    return out


def sample_count_params(state, counts, prior, rng, return_latent=False):
    """Data augmentation step for the count kernel parameters."""
    psi = state.count_params
    h = state.subject_assign
    latent = sample_latent_counts(counts, psi[h, 0], psi[h, 1], rng)
    groups = [latent[h == k] for k in range(state.K)]
    new = sample_nig(prior, groups, rng)
    if return_latent:
        return new, latent
    return new


# ---------------------------------------------------------------- sticks

def _sample_sticks(a, b, rng):
    """Beta(a, b) draws along with log(1 - draw), computed from gammas."""
    ga = rng.gamma(a)
    gb = rng.gamma(b)
    tot = ga + gb
    with np.errstate(divide="ignore", invalid="ignore"):
        v = ga / tot
        log1m = np.log(gb) - np.log(tot)
    if not np.all(np.isfinite(log1m)) or np.any(v <= 0):
        # extreme shapes: fall back to the numpy beta sampler, clipped
        v = np.clip(rng.beta(a, b), 1e-300, 1.0 - 1e-16)
        log1m = np.log1p(-v)
    return v, log1m


def stick_break(sticks):
    """Weights from sticks along axis 0, with a terminal stick of one."""
    sticks = np.asarray(sticks, dtype=float)
    full = np.concatenate([sticks, np.ones((1,) + sticks.shape[1:])], axis=0)
    rest = np.concatenate([np.ones((1,) + sticks.shape[1:]), np.cumprod(1.0 - sticks, axis=0)], axis=0)
    w = full * rest
    return w / w.sum(axis=0)


def sample_subject_sticks(state, rng):
    K = state.K
    m = np.bincount(state.subject_assign, minlength=K)
    tail = np.cumsum(m[::-1])[::-1]
    after = np.concatenate([tail[1:], [0]])
    v, log1m = _sample_sticks(1.0 + m[:-1], state.alpha + after[:-1], rng)
    return v, log1m, stick_break(v)


def atom_counts(state, subject_index):
    h = state.subject_assign[subject_index]
    n = np.zeros((state.L, state.K), dtype=np.int64)
    np.add.at(n, (state.fiber_assign, h), 1)
    return n


def sample_atom_sticks(state, subject_index, rng):
    n = atom_counts(state, subject_index)
    tail = np.cumsum(n[::-1], axis=0)[::-1]
    after = np.concatenate([tail[1:], np.zeros((1, state.K), dtype=np.int64)], axis=0)
    u, log1m = _sample_sticks(1.0 + n[:-1], state.beta + after[:-1], rng)
    return u, log1m, stick_break(u)


def sample_concentrations(state, alpha_prior, beta_prior, rng):
    """Gamma updates (shape, rate) for the two concentration parameters."""
    K, L = state.K, state.L
    if not (np.all(np.isfinite(state.log1m_v)) and np.all(np.isfinite(state.log1m_u))):
        raise SamplerError("a stick equal to one entered the concentration update")
    a_shape = alpha_prior[0] + (K - 1)
    a_rate = alpha_prior[1] - state.log1m_v.sum()
    b_shape = beta_prior[0] + K * (L - 1)
    b_rate = beta_prior[1] - state.log1m_u.sum()
    return rng.gamma(a_shape, 1.0 / a_rate), rng.gamma(b_shape, 1.0 / b_rate)


# ---------------------------------------------------------------- indicators

def fiber_loglik(features, state):
    """(n_total, L, K) summed kernel log densities of every fiber/atom."""
    L, K = state.L, state.K
    out = None
    for m, x in features.items():
        d = x.shape[1]
        ll = mvn_logpdf(x, state.means[m].reshape(L * K, d), state.covs[m].reshape(L * K, d, d))
        ll = ll.reshape(-1, L, K)
        out = ll if out is None else out + ll
    return out


def _count_loglik(state, counts):
    psi = state.count_params
    return rounded_gaussian_logpmf(np.asarray(counts)[:, None], psi[None, :, 0], psi[None, :, 1])


def subject_logprob(state, pooled, ll, joint_counts):
    """(J, K) unnormalized log P(zeta_j = h | -)."""
    J, K = pooled.J, state.K
    with np.errstate(divide="ignore"):
        logw = np.log(state.atom_weights)
        logpi = np.log(state.subject_weights)
    out = np.tile(logpi, (J, 1))
    if ll is not None:
        per_fiber = logsumexp(logw[None, :, :] + ll, axis=1)
        for h in range(K):
            out[:, h] += np.bincount(pooled.subject_index, weights=per_fiber[:, h], minlength=J)
    if joint_counts:
        out += _count_loglik(state, pooled.counts)
    return out


def sample_subject_assign(state, pooled, ll, rng, joint_counts=False):
    return sample_categorical(subject_logprob(state, pooled, ll, joint_counts), rng)


def sample_fiber_assign(state, pooled, ll, rng):
    h = state.subject_assign[pooled.subject_index]
    with np.errstate(divide="ignore"):
        logw = np.log(state.atom_weights[:, h].T)
    if ll is None:
        return sample_categorical(logw, rng)
    rows = np.arange(len(h))
    return sample_categorical(logw + ll[rows, :, h], rng)


def sample_atoms(state, pooled, priors, rng):
    L, K = state.L, state.K
    cell = state.fiber_assign * K + state.subject_assign[pooled.subject_index]
    means, covs = {}, {}
    for m, x in pooled.features.items():
        d = x.shape[1]
        prior = priors.get(m) or NiwParams.default(d)
        counts, xbar, scatter = suff_stats(x, cell, L * K)
        mu, sig = sample_niw(prior, counts, xbar, scatter, rng)
        means[m] = mu.reshape(L, K, d)
        covs[m] = sig.reshape(L, K, d, d)
    return means, covs


def _prior_atoms(features, priors, L, K, rng):
    means, covs = {}, {}
    for m, x in features.items():
        d = x.shape[1]
        prior = priors.get(m) or NiwParams.default(d)
        z = np.zeros(L * K)
        mu, sig = sample_niw(prior, z, np.zeros((L * K, d)), np.zeros((L * K, d, d)), rng)
        means[m], covs[m] = mu.reshape(L, K, d), sig.reshape(L, K, d, d)
    return means, covs


def init_state(pooled, config, rng, count_prior, rng_counts=None):
    K, L = config.K, config.L
    means, covs = _prior_atoms(pooled.features, config.priors, L, K, rng)
    zeta = rng.integers(0, K, size=pooled.J)
    xi = rng.integers(0, L, size=len(pooled.subject_index))
    state = NdpState(np.full(K, 1.0 / K), np.full((L, K), 1.0 / L), means, covs, zeta, xi,
                     float(config.alpha), float(config.beta),
                     np.zeros(K - 1), np.zeros((L - 1, K)), np.zeros(K - 1), np.zeros((L - 1, K)))
    if config.joint_counts and not config.prior_only:
        state.count_params = sample_nig(count_prior, [[]] * K, rng_counts or rng)
    return state


def fit_ndp(subjects, config=None):
    """Blocked Gibbs sampler for the truncated NDP.

    Each sweep: subject indicators, fiber indicators, subject sticks, atom
    sticks, atoms, concentrations, then (joint mode) count parameters.
    Count updates use their own random stream so that curve-only and joint
    runs share the curve-side random numbers.
    """
    config = config or NdpConfig()
    config.validate()
    if len(subjects) < 2:
        raise ValueError("fit_ndp needs at least 2 subjects")
    components = () if config.prior_only else tuple(config.components)
    pooled = _pool(subjects, components)
    if np.any(np.bincount(pooled.subject_index, minlength=pooled.J) == 0) and components:
        raise ValueError("every subject needs at least one fiber")
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(seeds[0])
    rng_counts = np.random.default_rng(seeds[1])
    joint = config.joint_counts and not config.prior_only
    count_prior = count_prior_raw(config.count_prior, pooled.counts, config.standardize_counts)
    state = init_state(pooled, config, rng, count_prior, rng_counts)

    n_saved = len(range(config.burn_in, config.n_iter, config.thin))
    n_total = len(pooled.subject_index)
    zetas = np.empty((n_saved, pooled.J), dtype=np.int64)
    xis = np.empty((n_saved, n_total), dtype=np.int64)
    occupied = np.empty(n_saved, dtype=np.int64)
    alphas = np.empty(n_saved)
    betas = np.empty(n_saved)
    pis = np.empty((n_saved, config.K))
    iters = np.empty(n_saved, dtype=np.int64)
    k = 0
    for it in range(config.n_iter):
        ll = fiber_loglik(pooled.features, state) if components else None
        state.subject_assign = sample_subject_assign(state, pooled, ll, rng, joint)
        state.fiber_assign = sample_fiber_assign(state, pooled, ll, rng)
        state.stick_v, state.log1m_v, state.subject_weights = sample_subject_sticks(state, rng)
        state.stick_u, state.log1m_u, state.atom_weights = sample_atom_sticks(state, pooled.subject_index, rng)
        if components:
            state.means, state.covs = sample_atoms(state, pooled, config.priors, rng)
        if config.sample_concentrations:
            state.alpha, state.beta = sample_concentrations(state, config.alpha_prior, config.beta_prior, rng)
        if joint:
            state.count_params = sample_count_params(state, pooled.counts, count_prior, rng_counts)
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            zetas[k] = state.subject_assign
            xis[k] = state.fiber_assign
            occupied[k] = np.count_nonzero(np.bincount(state.subject_assign, minlength=config.K))
            alphas[k], betas[k] = state.alpha, state.beta
            pis[k] = state.subject_weights
            iters[k] = it
            k += 1
    return NdpChain(zetas, xis, occupied, alphas, betas, pis, iters, pooled.subject_index, state)
