"""Limit-state functions in standard-normal space and the benchmark registry.

Every model is a vectorized function over the last axis of its input; a
:class:`LimitState` wraps it with a dimension check and an evaluation
counter. Failure is the event ``g <= 0``.
"""

import functools
import logging
import math

import numpy as np

from .exceptions import DimensionError
from .mathcore import NormalMarginals, from_standard_normal, std_normal_cdf

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


class LimitState:
    """Counted performance function ``G(u)`` on ``R^dim``.

    Calling with a vector returns a float; calling with an ``(m, dim)`` array
    returns ``m`` values. ``n_evals`` grows by the number of points evaluated,
    so batching never changes the accounting. Points where the model signals
    a domain fault come back as ``-inf`` (counted as failures) and are
    tallied in ``n_faults``.
    """

    def __init__(self, func, dim, name=None):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        self.func = func
        self.dim = int(dim)
        self.name = name or getattr(func, "__name__", "lsf")
        self.n_evals = 0
        self.n_faults = 0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if u.ndim == 0 or u.shape[-1] != self.dim:
            raise DimensionError(f"{self.name}: expected length {self.dim}, got shape {u.shape}")
        g = np.asarray(self.func(u), dtype=float)
        self.n_evals += u.size // self.dim
        faults = int(np.count_nonzero(np.isneginf(g)))
        if faults:
            self.n_faults += faults
        return float(g) if g.ndim == 0 else g

    def __repr__(self):
        return f"LimitState({self.name!r}, dim={self.dim}, n_evals={self.n_evals})"


# ---------------------------------------------------------------------------
# benchmark functions

def four_branch(u):
    """Series system with four branches, two of them parabolic."""
    u = np.asarray(u, dtype=float)
    u1, u2 = u[..., 0], u[..., 1]
    d = u1 - u2
    s = (u1 + u2) / SQRT2
    branches = np.stack([
        3.0 + 0.1 * d**2 - s,
        3.0 + 0.1 * d**2 + s,
        d + 6.0 / SQRT2,
        -d + 6.0 / SQRT2,
    ])
    return branches.min(axis=0) + 2.0


def two_region(u):
    """Series system with two disjoint failure regions on either side of the origin."""
    u = np.asarray(u, dtype=float)
    u1, u2 = u[..., 0], u[..., 1]
    s = (u1 + u2) / SQRT2
    b1 = 3.2 + s
    b2 = 2.5 + 0.1 * (u1 - u2) ** 2 - s
    return np.minimum(b1, b2) + 3.0


# M, c1, c2, r, F1, t1
OSCILLATOR_MARGINALS = NormalMarginals(
    means=[1.0, 1.0, 0.1, 0.5, 0.3, 1.0],
    std_devs=[0.05, 0.1, 0.01, 0.05, 0.2, 0.2],
)


def oscillator(u):
    """Undamped single-degree-of-freedom oscillator under a rectangular pulse.

    Inputs are mapped from standard-normal space through the independent
    normal marginals of ``OSCILLATOR_MARGINALS``. Non-physical samples
    (``M <= 0`` or ``c1 + c2 <= 0``) evaluate to ``-inf``.
    """
    x = from_standard_normal(u, OSCILLATOR_MARGINALS)
    m, c1, c2, r, f1, t1 = np.moveaxis(x, -1, 0)
    bad = (m <= 0) | (c1 + c2 <= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        w0 = np.sqrt((c1 + c2) / m)
        g = 3.0 * r - np.abs(2.0 * f1 / (m * w0**2) * np.sin(w0 * t1 / 2.0))
    if np.any(bad):
        log.warning("oscillator: %d non-physical sample(s) treated as failures", int(np.count_nonzero(bad)))
        g = np.where(bad, -np.inf, g)
    return g


def linear_sum(u, beta=4.0):
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    return beta - u.sum(axis=-1) / math.sqrt(n)


def series_two_sided(u, beta=4.0):
    """Two parallel hyperplanes at distance ``beta`` on opposite sides of the origin."""
    u = np.asarray(u, dtype=float)
    s = u.sum(axis=-1) / math.sqrt(u.shape[-1])
    return np.minimum(beta - s, beta + s)


# ---------------------------------------------------------------------------
# registry

def _fixed(func, dim):
    def build(**params):
        if params:
            raise ValueError(f"{func.__name__} takes no parameters, got {sorted(params)}")
        return LimitState(func, dim, name=func.__name__)
    return build


def _linear_family(func):
    def build(n=100, beta=4.0):
        n = int(n)
        beta = float(beta)
        return LimitState(functools.partial(func, beta=beta), n, name=f"{func.__name__}:n={n}:beta={beta:g}")
    return build


# id -> (builder, description, reference failure probability or None)
MODELS = {
    "four_branch": (_fixed(four_branch, 2), "2-D four-branch series system", 1.058e-5),
    "two_region": (_fixed(two_region, 2), "2-D series system, two failure regions", 1.10e-8),
    "oscillator": (_fixed(oscillator, 6), "6-D nonlinear oscillator", 6.43e-6),
    "linear_sum": (_linear_family(linear_sum), "hyperplane beta - sum(u)/sqrt(n); params n, beta", None),
    "series_two_sided": (_linear_family(series_two_sided), "two opposite hyperplanes; params n, beta", None),
}


def parse_model_id(model_id):
    """Split ``"name:key=value:..."`` into the name and a parameter dict."""
    name, *pairs = str(model_id).strip().split(":")
    params = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ValueError(f"malformed model parameter {pair!r} in {model_id!r}")
        params[key.strip()] = float(value) if any(c in value for c in ".eE") else int(value)
    return name, params


def make_model(model_id, **params):
    """Instantiate a registered benchmark by id, e.g. ``"linear_sum:n=10:beta=3.5"``."""
    name, parsed = parse_model_id(model_id)
    if name not in MODELS:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(MODELS)}")
    parsed.update(params)
    return MODELS[name][0](**parsed)


def reference_pf(model_id, **params):
    """Known failure probability of a registered model (analytic where available)."""
    name, parsed = parse_model_id(model_id)
    parsed.update(params)
    beta = float(parsed.get("beta", 4.0))
    if name == "linear_sum":
        return float(std_normal_cdf(-beta))
    if name == "series_two_sided":
        return float(2.0 * std_normal_cdf(-beta))
    return MODELS[name][2]
