"""Reference samplers and checks shared by the unit and acceptance tests."""

import math

import numpy as np
from scipy import stats

from sdis.limit_states import LimitState, make_model
from sdis.line_search import origin_value, rescale_root, solve_root

BENCHMARKS = ("four_branch", "two_region", "oscillator", "linear_sum:n=10:beta=4",
              "series_two_sided:n=10:beta=4")


def failure_samples(lsf, sigma, count, rng, batch=4096):
    """Exact draws of ``u ~ phi`` conditioned on ``G(sigma u) <= 0`` by rejection."""
    us, gs, have = [], [], 0
    while have < count:
        u = rng.standard_normal((batch, lsf.dim))
        g = lsf(sigma * u)
        keep = g <= 0
        us.append(u[keep])
        gs.append(g[keep])
        have += int(keep.sum())
    return np.concatenate(us)[:count], np.concatenate(gs)[:count]


def rescale_discrepancy(model_id, rng, n_dirs=200, sigma_i=3.0, sigma_next=1.0):
    """Largest relative gap between a rescaled root and a fresh solve at ``sigma_next``.

    Directions come from failure samples at ``sigma_i``. The fresh solve
    brackets ``[0, r_hint]`` with the same failing point expressed at the new
    magnification, so both searches refer to the same crossing.
    """
    lsf = make_model(model_id)
    g0 = origin_value(lsf)
    u, g = failure_samples(lsf, sigma_i, n_dirs, rng)
    worst = 0.0
    for uj, gj in zip(u, g):
        radius = np.linalg.norm(uj)
        a = uj / radius
        r_i = solve_root(lsf, a, sigma_i, radius, g_hint=gj, g0=g0).r
        hint = radius * sigma_i / sigma_next
        r_new = solve_root(lsf, a, sigma_next, hint, g_hint=gj, g0=g0).r
        worst = max(worst, abs(rescale_root(r_i, sigma_i, sigma_next) - r_new) / r_new)
    return worst


def linear_2d(threshold=1.0):
    """``G(u) = threshold - u_1`` in two dimensions."""
    return LimitState(lambda u: threshold - np.asarray(u)[..., 0], 2, name="linear_2d")


def truncated_normal_moments(threshold=1.0):
    """Mean and variance of ``N(0, 1)`` conditioned on ``x >= threshold``."""
    d = stats.truncnorm(threshold, np.inf)
    return float(d.mean()), float(d.var())


def moments_within(x, mean, var, k=3.0):
    """True if sample mean and variance of ``x`` lie within ``k`` standard errors."""
    x = np.asarray(x, dtype=float)
    n = x.size
    se_mean = math.sqrt(var / n)
    # SE of the sample variance from the fourth central moment
    m4 = np.mean((x - x.mean()) ** 4)
    se_var = math.sqrt(max(m4 - var**2, 0.0) / n)
    return abs(x.mean() - mean) <= k * se_mean and abs(x.var(ddof=1) - var) <= k * se_var
