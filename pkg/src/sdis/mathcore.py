"""Special functions, isoprobabilistic transforms and seeded samplers.

The chi-square tail is evaluated through the regularized upper incomplete
gamma function ``Q(a, x)``, with a log-scale path that stays finite when the
tail is far below the smallest double (directional roots at radius 40 in
1000 dimensions are routine at the late levels of a run).
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

_EPS = np.finfo(float).eps
_TINY = 1e-300
_MAX_TERMS = 100_000


# ---------------------------------------------------------------------------
# random streams

def make_rng(seed, *keys):
    """Return a PCG64 generator for ``seed`` and an optional sub-stream path.

    Sub-streams use the ``spawn_key`` mechanism of
    :class:`numpy.random.SeedSequence`: ``make_rng(s, i, j)`` is the stream
    spawned as child ``j`` of child ``i`` of the root sequence ``s``. Distinct
    key paths never share state, so run ``i`` of an experiment and chain
    group ``j`` inside it can be drawn independently and reproducibly.
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


# ---------------------------------------------------------------------------
# normal distribution

def std_normal_cdf(x):
    """Standard normal CDF (accurate in the lower tail, via ``erfc``)."""
    return special.ndtr(x)


def std_normal_quantile(p):
    return special.ndtri(p)


def std_normal_logpdf(u):
    """Log density of the n-variate standard normal, last axis = dimension."""
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    return -0.5 * np.sum(u * u, axis=-1) - 0.5 * n * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class NormalMarginals:
    """Independent normal inputs mapped to and from standard-normal space."""

    means: np.ndarray
    std_devs: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        stds = np.asarray(self.std_devs, dtype=float)
        if means.ndim != 1 or means.shape != stds.shape:
            raise ValueError("means and std_devs must be vectors of equal length")
        if np.any(stds <= 0):
            raise ValueError("std_devs must be strictly positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "std_devs", stds)

    @property
    def dim(self):
        return self.means.size

    def _check(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise ValueError(f"expected last dimension {self.dim}, got {v.shape[-1]}")
        return v


def to_standard_normal(x, marginals):
    x = marginals._check(x)
    return (x - marginals.means) / marginals.std_devs


def from_standard_normal(u, marginals):
    u = marginals._check(u)
    return marginals.means + marginals.std_devs * u


# ---------------------------------------------------------------------------
# incomplete gamma / chi-square tail

def _log_p_series(a, x):
    # log P(a, x) by the power series, valid for x < a + 1
    ap = a.copy()
    term = 1.0 / a
    total = term.copy()
    active = np.ones(a.shape, dtype=bool)
    for _ in range(_MAX_TERMS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ap[idx] += 1.0
        term[idx] *= x[idx] / ap[idx]
        total[idx] += term[idx]
        active[idx] = np.abs(term[idx]) >= np.abs(total[idx]) * _EPS
    else:
        raise ArithmeticError("incomplete gamma series did not converge")
    return np.log(total) - x + a * np.log(x) - special.gammaln(a)


def _log_q_cfrac(a, x):
    # log Q(a, x) by the modified Lentz continued fraction, valid for x >= a + 1
    b = x + 1.0 - a
    c = np.full(a.shape, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(a.shape, dtype=bool)
    for i in range(1, _MAX_TERMS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        an = -i * (i - a[idx])
        b[idx] += 2.0
        di = an * d[idx] + b[idx]
        di[np.abs(di) < _TINY] = _TINY
        ci = b[idx] + an / c[idx]
        ci[np.abs(ci) < _TINY] = _TINY
        di = 1.0 / di
        delta = di * ci
        d[idx], c[idx] = di, ci
        h[idx] *= delta
        active[idx] = np.abs(delta - 1.0) >= _EPS
    else:
        raise ArithmeticError("incomplete gamma continued fraction did not converge")
    return np.log(h) - x + a * np.log(x) - special.gammaln(a)


def _gammaincc_parts(a, x):
    a, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
    if np.any(a <= 0):
        raise ValueError("shape parameter must be positive")
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("argument must be nonnegative")
    shape = a.shape
    a = a.ravel().copy()
    x = x.ravel().copy()
    log_p = np.full(a.shape, np.nan)
    log_q = np.full(a.shape, np.nan)
    zero = x == 0
    inf = np.isinf(x)
    log_q[zero], log_p[zero] = 0.0, -np.inf
    log_q[inf], log_p[inf] = -np.inf, 0.0
    series = ~zero & ~inf & (x < a + 1.0)
    cfrac = ~zero & ~inf & ~series
    if series.any():
        log_p[series] = _log_p_series(a[series], x[series])
    if cfrac.any():
        log_q[cfrac] = _log_q_cfrac(a[cfrac], x[cfrac])
    return shape, series, log_p, log_q


def _like_input(values, shape):
    values = values.reshape(shape)
    return float(values) if values.ndim == 0 else values


def log_gammaincc(a, x):
    """Logarithm of the regularized upper incomplete gamma ``Q(a, x)``."""
    shape, series, log_p, log_q = _gammaincc_parts(a, x)
    log_q[series] = np.log1p(-np.exp(log_p[series]))
    return _like_input(log_q, shape)


def gammaincc(a, x):
    """Regularized upper incomplete gamma ``Q(a, x)`` on the linear scale."""
    shape, series, log_p, log_q = _gammaincc_parts(a, x)
    q = np.exp(log_q)
    q[series] = 1.0 - np.exp(log_p[series])
    return _like_input(q, shape)


def _check_dof(n):
    n = np.asarray(n)
    if np.any(n < 1):
        raise ValueError("degrees of freedom must be >= 1")
    return n.astype(float)


def chi2_upper_tail(n, x):
    """``1 - F(x)`` for the chi-square distribution with ``n`` degrees of freedom."""
    return gammaincc(_check_dof(n) / 2.0, np.asarray(x, dtype=float) / 2.0)


def chi2_log_upper_tail(n, x):
    """``log(1 - F(x))``; finite even when the tail underflows a double."""
    return log_gammaincc(_check_dof(n) / 2.0, np.asarray(x, dtype=float) / 2.0)


def chi2_log_isf(n, log_tail, rtol=1e-12, max_iter=200):
    """Inverse of :func:`chi2_log_upper_tail` in its second argument.

    Solves ``log Q(n/2, y) = log_tail`` for ``y = x/2`` by Newton's method on
    the log tail inside a maintained bracket, bisecting whenever a Newton step
    leaves it. Stops when the tail probability matches to ``rtol`` relative.
    """
    a = _check_dof(n) / 2.0
    a, t = np.broadcast_arrays(a, np.asarray(log_tail, dtype=float))
    shape = t.shape
    a = a.ravel().copy()
    t = t.ravel().copy()
    if np.any(t > 0) or np.any(np.isnan(t)):
        raise ValueError("log tail probability must be <= 0")
    y = np.zeros_like(t)
    y[np.isneginf(t)] = np.inf
    todo = np.flatnonzero((t < 0) & np.isfinite(t))
    if todo.size:
        y[todo] = _log_isf_newton(a[todo], t[todo], rtol, max_iter)
    return _like_input(2.0 * y, shape)


def _initial_guess(a, t):
    y = np.empty_like(t)
    moderate = t > np.log(1e-290)
    if moderate.any():
        y[moderate] = special.gammainccinv(a[moderate], np.exp(t[moderate]))
    deep = ~moderate
    if deep.any():
        # log Q ~ -y + (a-1) log y - lgamma(a) for large y
        ad, td = a[deep], t[deep]
        yd = -td
        for _ in range(8):
            yd = -td + (ad - 1.0) * np.log(yd) - special.gammaln(ad)
            yd = np.maximum(yd, 1e-3)
        y[deep] = yd
    bad = ~np.isfinite(y) | (y <= 0)
    y[bad] = np.maximum(a[bad], 1.0)
    return y


def _log_isf_newton(a, t, rtol, max_iter):
    y = _initial_guess(a, t)
    lo = np.zeros_like(y)
    hi = np.full_like(y, np.inf)
    done = np.zeros(y.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        ai, yi = a[idx], y[idx]
        t_sub = t[idx]
        lq = np.atleast_1d(log_gammaincc(ai, yi))
        f = lq - t_sub
        above = f > 0  # tail still too large: root lies to the right
        lo[idx] = np.where(above, yi, lo[idx])
        hi[idx] = np.where(above, hi[idx], yi)
        conv = np.abs(f) <= rtol
        conv |= np.isfinite(hi[idx]) & ((hi[idx] - lo[idx]) <= 4.0 * _EPS * hi[idx])
        # d/dy log Q = -y^(a-1) e^(-y) / (Gamma(a) Q)
        log_dens = (ai - 1.0) * np.log(yi) - yi - special.gammaln(ai)
        slope = -np.exp(log_dens - lq)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = yi - f / slope
        grow = np.isinf(hi[idx])
        bisect = 0.5 * (lo[idx] + hi[idx])
        fallback = np.where(grow, 2.0 * yi + 1.0, bisect)
        ok = np.isfinite(step) & (step > lo[idx]) & (step < hi[idx])
        y[idx] = np.where(conv, yi, np.where(ok, step, fallback))
        done[idx] = conv
    return y


def chi2_quantile(n, p):
    """Chi-square quantile: ``x`` with ``F(x) = p``."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("probability must lie in (0, 1)")
    return chi2_log_isf(n, np.log1p(-p))


# ---------------------------------------------------------------------------
# samplers

def sample_truncated_chi(n, r_min, rng, size=None):
    """Draw radii ``r >= r_min`` with ``r**2 ~ chi2(n)`` conditioned on ``r > r_min``.

    Inverse-CDF in the upper-tail parameterization: with ``u ~ U(0, 1]`` the
    returned radius solves ``Q(r^2) = u * Q(r_min^2)``, carried out on log
    tails so deep truncations (``Q(r_min^2) < 1e-300``) stay exact.
    """
    r_min = np.asarray(r_min, dtype=float)
    if np.any(r_min < 0) or not np.all(np.isfinite(r_min)):
        raise ValueError("r_min must be finite and nonnegative")
    shape = r_min.shape if size is None else np.broadcast_shapes(np.atleast_1d(size).tolist(), r_min.shape)
    r_min = np.broadcast_to(r_min, shape)
    u = 1.0 - rng.random(shape)
    log_target = np.log(u) + chi2_log_upper_tail(n, r_min**2)
    r = np.sqrt(chi2_log_isf(n, log_target))
    return np.maximum(r, r_min)


def sample_uniform_direction(n, rng, size=None):
    """Uniform unit vectors on the (n-1)-sphere, by normalizing Gaussian draws."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    lead = () if size is None else tuple(np.atleast_1d(size))
    z = rng.standard_normal(lead + (n,))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)
