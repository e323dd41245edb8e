"""Move step: Metropolis-Hastings kernels targeting ``I(G(sigma u) <= 0) phi(u)``.

Two kernels are provided. The independent sampler draws candidates from a
Gaussian mixture fitted by EM to the resampled seeds; the conditional
sampler perturbs the current state with ``sqrt(1 - beta^2) u + beta xi`` and
accepts on the failure indicator alone. Both advance a whole population of
chains at once: chain ``j`` is row ``j`` of ``ChainState.u``.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .mathcore import std_normal_logpdf

log = logging.getLogger(__name__)

TARGET_ACCEPTANCE = 0.44


# ---------------------------------------------------------------------------
# Gaussian mixture proposal

@dataclass
class GaussianMixture:
    """K-component Gaussian mixture in ``R^n``.

    Attributes
    ----------
    weights : ndarray, shape (K,)
    means : ndarray, shape (K, n)
    covs : ndarray, shape (K, n, n)
    log_likelihood : list of float
        EM trace, one entry per E-step (empty for hand-built mixtures).
    n_pruned : int
        Components dropped during fitting because their weight collapsed.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    log_likelihood: list = field(default_factory=list)
    n_pruned: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.covs = np.asarray(self.covs, dtype=float).reshape(
            self.means.shape[0], self.means.shape[1], self.means.shape[1])
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights < 0):
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        self._chol = np.array([linalg.cholesky(c, lower=True) for c in self.covs])

    @property
    def n_components(self):
        return self.weights.size

    @property
    def dim(self):
        return self.means.shape[1]

    def component_logpdf(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        out = np.empty((u.shape[0], self.n_components))
        for k in range(self.n_components):
            L = self._chol[k]
            z = linalg.solve_triangular(L, (u - self.means[k]).T, lower=True)
            log_det = 2.0 * np.sum(np.log(np.diag(L)))
            out[:, k] = -0.5 * (np.sum(z * z, axis=0) + log_det + self.dim * np.log(2.0 * np.pi))
        return out

    def logpdf(self, u):
        return logsumexp(self.component_logpdf(u) + np.log(self.weights), axis=1)

    def sample(self, size, rng):
        comp = rng.choice(self.n_components, size=size, p=self.weights)
        z = rng.standard_normal((size, self.dim))
        return self.means[comp] + np.einsum("mij,mj->mi", self._chol[comp], z)


def _kmeans_pp(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(len(x), p=d2 / total) if total > 0 else rng.integers(len(x))
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def _regularized(cov, reg):
    n = cov.shape[-1]
    return cov + reg * np.trace(cov) / n * np.eye(n)


def fit_gmm(samples, n_components, rng, max_iter=500, tol=1e-6, reg=1e-6):
    """Maximum-likelihood Gaussian mixture by EM with k-means++ seeding.

    Iterates until the relative change of the log-likelihood drops below
    ``tol`` or ``max_iter`` E-steps have run. Each M-step adds
    ``reg * trace(cov) / n`` to the diagonal of every covariance. A component
    whose weight falls below ``1 / (10 N)`` is pruned and the count recorded
    in ``n_pruned``.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    n_samples, dim = x.shape
    if n_samples < 10 * n_components:
        raise ValueError(f"need at least {10 * n_components} samples for K={n_components}, got {n_samples}")
    means = _kmeans_pp(x, n_components, rng)
    cov0 = _regularized(np.atleast_2d(np.cov(x, rowvar=False)), reg)
    gm = GaussianMixture(np.full(n_components, 1.0 / n_components), means,
                         np.repeat(cov0[None], n_components, axis=0))
    trace = []
    pruned = 0
    for it in range(max_iter):
        log_joint = gm.component_logpdf(x) + np.log(gm.weights)
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(log_norm.sum())
        trace.append(ll)
        if it > 0 and abs(ll - trace[-2]) < tol * abs(trace[-2]):
            break
        resp = np.exp(log_joint - log_norm[:, None])
        nk = resp.sum(axis=0)
        keep = nk / n_samples >= 1.0 / (10.0 * n_samples)
        if not keep.all():
            dropped = int(np.count_nonzero(~keep))
            log.info("fit_gmm: pruning %d degenerate component(s)", dropped)
            pruned += dropped
            resp, nk = resp[:, keep], nk[keep]
        weights = nk / nk.sum()
        means = (resp.T @ x) / nk[:, None]
        covs = np.empty((nk.size, dim, dim))
        for k in range(nk.size):
            d = x - means[k]
            covs[k] = _regularized((resp[:, k, None] * d).T @ d / nk[k], reg)
        gm = GaussianMixture(weights, means, covs)
    gm.log_likelihood = trace
    gm.n_pruned = pruned
    return gm


# ---------------------------------------------------------------------------
# chains

@dataclass
class ChainState:
    """Current states of a population of chains.

    ``g[j]`` caches the model response at ``sigma * u[j]`` and is always
    ``<= 0``; ``accepted[j]`` counts the moves chain ``j`` made in the last
    call of a kernel.
    """

    u: np.ndarray
    g: np.ndarray
    accepted: np.ndarray = None

    def __post_init__(self):
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        if self.accepted is None:
            self.accepted = np.zeros(len(self.g), dtype=int)
        if np.any(self.g > 0):
            raise ValueError("chain states must lie in the failure domain")

    def __len__(self):
        return len(self.g)


def imh_chain(lsf, sigma, state, proposal, length, rng):
    """Independent Metropolis-Hastings with a state-independent mixture proposal.

    Runs ``length`` transitions on every chain and returns the final states.
    The acceptance ratio is ``phi(u') pi(u) / (phi(u) pi(u'))``, evaluated in
    log space and multiplied by the failure indicator of the candidate.
    """
    if length < 1:
        raise ValueError("chain length must be >= 1")
    u, g = state.u.copy(), state.g.copy()
    m = len(g)
    accepted = np.zeros(m, dtype=int)
    log_ratio_cur = std_normal_logpdf(u) - proposal.logpdf(u)
    for _ in range(length):
        cand = proposal.sample(m, rng)
        g_cand = lsf(sigma * cand)
        log_ratio_cand = std_normal_logpdf(cand) - proposal.logpdf(cand)
        log_w = np.log(rng.random(m))
        move = (g_cand <= 0) & (log_w <= log_ratio_cand - log_ratio_cur)
        u[move], g[move] = cand[move], g_cand[move]
        log_ratio_cur[move] = log_ratio_cand[move]
        accepted += move
    return ChainState(u, g, accepted)


@dataclass(frozen=True)
class AdaptiveBeta:
    """Scale of the conditional-sampling proposal and its adaptation counter."""

    beta: float = 0.6
    batch_index: int = 0
    n_accepted: int = 0
    n_proposed: int = 0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")

    @property
    def acceptance_rate(self):
        return self.n_accepted / self.n_proposed if self.n_proposed else float("nan")


def adapt_beta(beta, observed_acceptance, target=TARGET_ACCEPTANCE):
    """One step of the acceptance-rate controller.

    ``beta <- beta * exp((rate - target) / sqrt(k))`` for the k-th batch,
    clamped to ``[1e-3, 0.999]``.
    """
    k = beta.batch_index + 1
    new = beta.beta * np.exp((observed_acceptance - target) / np.sqrt(k))
    return replace(beta, beta=float(np.clip(new, 1e-3, 0.999)), batch_index=k)


def csmh_chain(lsf, sigma, state, beta, length, rng):
    """Conditional-sampling Metropolis-Hastings.

    Candidates ``sqrt(1 - b^2) u + b xi`` leave the standard normal invariant,
    so a candidate is accepted iff it fails. Returns the final states; the
    per-chain move counts are in ``accepted``.
    """
    if length < 1:
        raise ValueError("chain length must be >= 1")
    b = beta.beta if isinstance(beta, AdaptiveBeta) else float(beta)
    rho = np.sqrt(1.0 - b * b)
    u, g = state.u.copy(), state.g.copy()
    accepted = np.zeros(len(g), dtype=int)
    for _ in range(length):
        cand = rho * u + b * rng.standard_normal(u.shape)
        g_cand = lsf(sigma * cand)
        move = g_cand <= 0
        u[move], g[move] = cand[move], g_cand[move]
        accepted += move
    return ChainState(u, g, accepted)


def run_csmh_chains(lsf, sigma, seeds, beta, length, rng, n_batches=10):
    """Run one chain per seed, adapting ``beta`` after each batch of chains.

    The population is split into ``n_batches`` consecutive groups (one tenth
    of the chains each by default); after a group finishes, its acceptance
    rate drives :func:`adapt_beta`. The batch counter restarts at each call
    while the scale itself carries over. Returns ``(states, beta)``.
    """
    beta = replace(beta, batch_index=0)
    groups = np.array_split(np.arange(len(seeds)), min(n_batches, len(seeds)))
    u = np.empty_like(seeds.u)
    g = np.empty_like(seeds.g)
    accepted = np.zeros(len(seeds), dtype=int)
    for idx in groups:
        out = csmh_chain(lsf, sigma, ChainState(seeds.u[idx], seeds.g[idx]), beta, length, rng)
        u[idx], g[idx], accepted[idx] = out.u, out.g, out.accepted
        n_acc = int(out.accepted.sum())
        n_prop = idx.size * length
        beta = adapt_beta(beta, n_acc / n_prop)
        beta = replace(beta, n_accepted=beta.n_accepted + n_acc, n_proposed=beta.n_proposed + n_prop)
    return ChainState(u, g, accepted), beta
