"""Sequential directional importance sampling and its two baselines.

A run starts with crude Monte Carlo on the magnified problem ``G(sigma1 u)``
until ``n0`` failures are collected. The failures define directions whose
roots give directional importance weights for any smaller magnification;
the next magnification is chosen so that the weights have a target
coefficient of variation, and the ratio of consecutive auxiliary
probabilities is the mean weight. Directions for the next level come from
resampling by weight, drawing a radius beyond the rescaled root, and a short
Markov chain. The loop ends when the magnification reaches 1.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import AllWeightsZero, BudgetExceeded, MaxLevelsExceeded, NoRootFound
from .line_search import origin_value, solve_root
from .mathcore import chi2_log_upper_tail, make_rng, sample_truncated_chi, sample_uniform_direction
from .mcmc import AdaptiveBeta, ChainState, fit_gmm, imh_chain, run_csmh_chains

log = logging.getLogger(__name__)

KERNELS = ("csmh", "imh")


@dataclass(frozen=True)
class SdisConfig:
    """Run parameters.

    ``kernel`` is ``"csmh"`` (conditional sampling) or ``"imh"``
    (independent sampler with an ``n_components`` Gaussian mixture).
    ``enrichment`` radii are drawn per resampled direction to fit the mixture.
    """

    kernel: str
    sigma1: float = 3.0
    n0: int = 100
    chain_length: int = 5
    delta_target: float = 1.5
    n_components: int = 1
    max_levels: int = 50
    max_initial_samples: int = 10_000_000
    batch_size: int = 256
    enrichment: int = 10
    beta0: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.sigma1 < 1:
            raise ValueError("sigma1 must be >= 1")
        if self.n0 < 2:
            raise ValueError("n0 must be >= 2")
        if self.chain_length < 1:
            raise ValueError("chain_length must be >= 1")
        if not self.delta_target > 0:
            raise ValueError("delta_target must be positive")
        if self.n_components < 1 or self.max_levels < 1 or self.enrichment < 1:
            raise ValueError("n_components, max_levels and enrichment must be >= 1")


@dataclass
class DirectionalLevel:
    """One directional importance-sampling level.

    ``weights[j]`` is the ratio of the chi-square tails beyond the root of
    direction ``j`` at ``sigma_next`` and at ``sigma``; ``s_hat`` is their
    mean and ``delta_w`` their sample coefficient of variation. ``acceptance``
    is the move rate of the chains that produced the directions (NaN at the
    first level, whose directions come straight from Monte Carlo).
    """

    sigma: float
    sigma_next: float
    directions: np.ndarray
    roots: np.ndarray
    log_tails: np.ndarray
    weights: np.ndarray
    s_hat: float
    delta_w: float
    fail_radii: np.ndarray = field(repr=False, default=None)
    fail_values: np.ndarray = field(repr=False, default=None)
    acceptance: float = float("nan")
    n_redraws: int = 0
    n_fallbacks: int = 0

    @property
    def n_directions(self):
        return len(self.roots)


@dataclass
class SdisResult:
    pf_hat: float
    p_sigma1_hat: float
    n_initial: int
    n0: int
    levels: list
    cv_hat: float
    n_evaluations: int

    @property
    def k(self):
        """Number of magnification factors used, the last one being 1."""
        return len(self.levels) + 1

    @property
    def sigmas(self):
        if not self.levels:
            return [1.0]
        return [lv.sigma for lv in self.levels] + [self.levels[-1].sigma_next]


# ---------------------------------------------------------------------------
# baselines

def run_mcs(lsf, n_samples, rng, chunk=100_000):
    """Crude Monte Carlo: ``(pf_hat, cv_hat)``, ``cv_hat = inf`` without failures."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    fails = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        fails += int(np.count_nonzero(lsf(rng.standard_normal((m, lsf.dim))) <= 0))
        done += m
    pf = fails / n_samples
    cv = math.sqrt((1.0 - pf) / (n_samples * pf)) if pf > 0 else math.inf
    return pf, cv


def run_ds(lsf, n_directions, rng):
    """Directional simulation with uniform directions: ``(pf_hat, cv_hat)``.

    Each direction contributes the chi-square tail beyond its first root;
    directions without a root inside the search radius contribute 0.
    """
    if n_directions < 2:
        raise ValueError("n_directions must be >= 2")
    g0 = origin_value(lsf)
    n = lsf.dim
    terms = np.zeros(n_directions)
    dirs = sample_uniform_direction(n, rng, size=n_directions)
    for j, a in enumerate(dirs):
        try:
            r = solve_root(lsf, a, g0=g0).r
        except NoRootFound:
            continue
        terms[j] = math.exp(chi2_log_upper_tail(n, r * r))
    pf = float(terms.mean())
    if pf == 0:
        return 0.0, math.inf
    cv = float(terms.std(ddof=1) / (math.sqrt(n_directions) * pf))
    return pf, cv


# ---------------------------------------------------------------------------
# building blocks

def initial_stage(lsf, config, rng):
    """Monte Carlo on ``G(sigma1 u)`` until exactly ``n0`` failures appear.

    Normal draws are generated in batches of ``config.batch_size`` but
    evaluated in chunks no larger than the number of failures still missing,
    so no draw past the ``n0``-th failure is ever evaluated. Returns
    ``(p_sigma1_hat, failures, n_used)`` with failures in draw order.
    """
    n = lsf.dim
    need = config.n0
    us, gs = [], []
    used = 0
    buf = np.empty((0, n))
    pos = 0
    while need > 0:
        if used >= config.max_initial_samples:
            raise BudgetExceeded(
                f"{used} samples gave only {config.n0 - need} failures at sigma1={config.sigma1}")
        if pos == len(buf):
            buf = rng.standard_normal((config.batch_size, n))
            pos = 0
        take = min(need, len(buf) - pos, config.max_initial_samples - used)
        chunk = buf[pos:pos + take]
        pos += take
        g = lsf(config.sigma1 * chunk)
        used += take
        fail = g <= 0
        us.append(chunk[fail])
        gs.append(g[fail])
        need -= int(np.count_nonzero(fail))
    return config.n0 / used, ChainState(np.concatenate(us), np.concatenate(gs)), used


def _weight_cv(log_w):
    # scale-free, so shift by the max to keep tiny weights representable
    w = np.exp(log_w - np.max(log_w))
    if w.size < 2:
        return 0.0
    return float(np.std(w, ddof=1) / np.mean(w))


def _log_weights(roots, log_tails, sigma_i, sigma_c, n):
    return chi2_log_upper_tail(n, (roots * (sigma_i / sigma_c)) ** 2) - log_tails


def weights_for_sigma(roots, sigma_i, sigma_candidate, n):
    """Importance weights of a level for a candidate next magnification.

    Returns ``(weights, delta_w)``, the weights computed as differences of log
    chi-square tails and ``delta_w`` their sample coefficient of variation.
    """
    if not 1.0 <= sigma_candidate <= sigma_i:
        raise ValueError("require 1 <= sigma_candidate <= sigma_i")
    roots = np.asarray(roots, dtype=float)
    log_tails = chi2_log_upper_tail(n, roots**2)
    log_w = _log_weights(roots, log_tails, sigma_i, sigma_candidate, n)
    return np.exp(log_w), _weight_cv(log_w)


def select_sigma(roots, sigma_i, delta_target, n, tol=1e-6):
    """Next magnification: 1 if the weights at 1 are already good enough,
    otherwise the root of ``delta_w(sigma) = delta_target`` by bisection.
    Needs no model evaluations."""
    roots = np.asarray(roots, dtype=float)
    if not np.all(np.isfinite(roots) & (roots > 0)):
        raise ValueError("roots must be finite and positive")
    log_tails = chi2_log_upper_tail(n, roots**2)

    def cv(s):
        return _weight_cv(_log_weights(roots, log_tails, sigma_i, s, n))

    if sigma_i <= 1.0 or cv(1.0) <= delta_target:
        return 1.0
    lo, hi = 1.0, float(sigma_i)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cv(mid) > delta_target:
            lo = mid
        else:
            hi = mid
    return hi if hi < sigma_i else lo


class Resampled(NamedTuple):
    state: ChainState
    directions: np.ndarray
    r_min: np.ndarray
    n_redraws: int
    n_fallbacks: int


def resample_seeds(lsf, level, n_seeds, rng, max_redraws=5):
    """Seeds for the next level: directions by weight, radii beyond the root.

    Each seed is checked with one model evaluation at ``level.sigma_next``.
    A seed that lands in the safe domain (possible only when the ray crosses
    the limit state more than once) gets its radius redrawn up to
    ``max_redraws`` times and then falls back to the failing end of the root
    bracket, whose response is already known.
    """
    w = np.asarray(level.weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise AllWeightsZero(f"level at sigma={level.sigma} has no positive weight")
    n = level.directions.shape[1]
    scale = level.sigma / level.sigma_next
    idx = rng.choice(len(w), size=n_seeds, p=w / total)
    a = level.directions[idx]
    r_min = level.roots[idx] * scale
    r = sample_truncated_chi(n, r_min, rng)
    u = r[:, None] * a
    g = lsf(level.sigma_next * u)
    redraws = 0
    for _ in range(max_redraws):
        bad = np.flatnonzero(g > 0)
        if bad.size == 0:
            break
        redraws += bad.size
        r_bad = sample_truncated_chi(n, r_min[bad], rng)
        u[bad] = r_bad[:, None] * a[bad]
        g[bad] = lsf(level.sigma_next * u[bad])
    bad = np.flatnonzero(g > 0)
    if bad.size:
        log.info("resample_seeds: %d seed(s) fell back to the bracket end", bad.size)
        u[bad] = (level.fail_radii[idx[bad]] * scale)[:, None] * a[bad]
        g[bad] = level.fail_values[idx[bad]]
    return Resampled(ChainState(u, g), a, r_min, redraws, int(bad.size))


def estimate_cv(result):
    """Coefficient of variation of ``pf_hat`` assuming independent levels.

    Adds the squared CV of the Monte Carlo stage, ``(1 - p) / (N p)``, to
    ``delta_w**2 / n_directions`` of every level. Correlation between chain
    states is ignored, so the value tends to be optimistic.
    """
    p, n_init = result.p_sigma1_hat, result.n_initial
    total = (1.0 - p) / (n_init * p)
    for lv in result.levels:
        total += lv.delta_w**2 / lv.n_directions
    return math.sqrt(total)


def weight_cv_bound(epsilon, delta_p_sigma1, n0, n_levels):
    """Largest per-level weight CV compatible with an overall CV of ``epsilon``
    over ``n_levels`` directional levels (diagnostic only)."""
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    slack = (epsilon**2 - delta_p_sigma1**2) * n0 / n_levels
    return math.sqrt(slack) if slack > 0 else 0.0


# ---------------------------------------------------------------------------
# driver

def _roots(lsf, state, sigma, g0, known=None):
    """Roots along the directions of ``state``; ``known`` maps chain -> (r, r_fail, g_fail)."""
    radii = np.linalg.norm(state.u, axis=1)
    dirs = state.u / radii[:, None]
    m = len(radii)
    roots, r_fail, g_fail = np.empty(m), np.empty(m), np.empty(m)
    for j in range(m):
        if known is not None and j in known:
            roots[j], r_fail[j], g_fail[j] = known[j]
            continue
        res = solve_root(lsf, dirs[j], sigma, radii[j], g_hint=state.g[j], g0=g0)
        roots[j], r_fail[j], g_fail[j] = res.r, res.r_fail, res.g_fail
    return dirs, roots, r_fail, g_fail


def _move(lsf, config, seeds, sigma, beta, rng):
    if config.kernel == "csmh":
        return run_csmh_chains(lsf, sigma, seeds.state, beta, config.chain_length, rng)
    n = seeds.directions.shape[1]
    m = config.enrichment
    r = sample_truncated_chi(n, np.repeat(seeds.r_min, m), rng)
    points = r[:, None] * np.repeat(seeds.directions, m, axis=0)
    proposal = fit_gmm(points, config.n_components, rng)
    return imh_chain(lsf, sigma, seeds.state, proposal, config.chain_length, rng), beta


def run_sdis(lsf, config, rng=None):
    """Estimate ``P(G(U) <= 0)`` by sequential directional importance sampling.

    ``rng`` defaults to ``make_rng(config.seed)``. Raises
    :class:`MaxLevelsExceeded` if the magnification has not reached 1 after
    ``config.max_levels`` directional levels.
    """
    if rng is None:
        rng = make_rng(config.seed)
    start = lsf.n_evals
    n = lsf.dim
    g0 = origin_value(lsf)
    p1, state, n_init = initial_stage(lsf, config, rng)
    levels = []
    sigma = float(config.sigma1)
    beta = AdaptiveBeta(config.beta0)
    known = None
    acceptance = float("nan")
    seeds = None
    while sigma > 1.0:
        if len(levels) >= config.max_levels:
            raise MaxLevelsExceeded(f"sigma = {sigma:.6g} after {len(levels)} levels")
        dirs, roots, r_fail, g_fail = _roots(lsf, state, sigma, g0, known)
        log_tails = chi2_log_upper_tail(n, roots**2)
        sigma_next = select_sigma(roots, sigma, config.delta_target, n)
        log_w = _log_weights(roots, log_tails, sigma, sigma_next, n)
        weights = np.exp(log_w)
        level = DirectionalLevel(
            sigma=sigma, sigma_next=sigma_next, directions=dirs, roots=roots,
            log_tails=log_tails, weights=weights, s_hat=float(weights.mean()),
            delta_w=_weight_cv(log_w), fail_radii=r_fail, fail_values=g_fail,
            acceptance=acceptance,
        )
        if seeds is not None:
            level.n_redraws, level.n_fallbacks = seeds.n_redraws, seeds.n_fallbacks
        levels.append(level)
        log.debug("level %d: sigma %.4f -> %.4f, S=%.4g, cv_w=%.3f",
                  len(levels), sigma, sigma_next, level.s_hat, level.delta_w)
        if sigma_next == 1.0:
            break
        seeds = resample_seeds(lsf, level, config.n0, rng)
        state, beta = _move(lsf, config, seeds, sigma_next, beta, rng)
        acceptance = float(state.accepted.sum()) / (len(state) * config.chain_length)
        # a chain that never moved still sits on its seed ray, whose root is known
        still = np.flatnonzero(state.accepted == 0)
        known = {int(j): (seeds.r_min[j], np.linalg.norm(state.u[j]), state.g[j]) for j in still}
        sigma = sigma_next
    pf = p1 * math.prod(lv.s_hat for lv in levels)
    result = SdisResult(pf_hat=pf, p_sigma1_hat=p1, n_initial=n_init, n0=config.n0,
                        levels=levels, cv_hat=0.0, n_evaluations=lsf.n_evals - start)
    result.cv_hat = estimate_cv(result)
    return result
