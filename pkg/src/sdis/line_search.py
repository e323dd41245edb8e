"""Root of ``G(sigma * r * a) = 0`` along a direction, and cross-level rescaling.

Roots are refined with Brent's method on a bracket whose end values are
usually known already (``G(0)`` is evaluated once per run, and the failing
end is a sample whose response was cached when it was drawn), so a root on
a limit state that is linear along the ray costs a single evaluation.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import NoRootFound, UnsafeOrigin

R_TOL = 1e-8
R_MAX = 12.0
MAX_ITER = 200


@dataclass(frozen=True)
class Root:
    """Result of a directional root search.

    ``r`` is the root estimate; ``r_fail`` is the bracket end known to satisfy
    ``G(sigma * r_fail * a) <= 0`` (equal to ``r`` when the estimate itself
    fails) and ``g_fail`` its response.
    """

    r: float
    r_fail: float
    g_fail: float
    n_evals: int


def origin_value(lsf):
    """Evaluate ``G(0)``; raises :class:`UnsafeOrigin` unless it is positive."""
    g0 = float(lsf(np.zeros(lsf.dim)))
    if not g0 > 0:
        raise UnsafeOrigin(f"G(0) = {g0} <= 0 for {lsf.name}")
    return g0


def g_tolerance(g0):
    return 1e-10 * (1.0 + abs(g0))


def _brent(f, a, b, fa, fb, r_tol, g_tol, max_iter):
    """Brent's zero-in on ``[a, b]`` with ``fa > 0 >= fb`` already known.

    Returns ``(x, fx, x_other, f_other)``: the best estimate and the opposite
    end of the final bracket. Non-finite responses force a bisection step.
    """
    xpre, xcur, fpre, fcur = a, b, fa, fb
    xblk, fblk, spre, scur = 0.0, 0.0, 0.0, 0.0
    n = 0
    while True:
        if fpre * fcur < 0:
            xblk, fblk = xpre, fpre
            spre = scur = xcur - xpre
        if abs(fblk) < abs(fcur):
            xpre, xcur, xblk = xcur, xblk, xcur
            fpre, fcur, fblk = fcur, fblk, fcur
        delta = 0.5 * r_tol * max(1.0, abs(xcur))
        sbis = 0.5 * (xblk - xcur)
        if abs(fcur) <= g_tol or abs(sbis) < delta or n >= max_iter:
            return xcur, fcur, xblk, fblk
        finite = np.isfinite(fcur) and np.isfinite(fpre) and np.isfinite(fblk)
        if finite and abs(spre) > delta and abs(fcur) < abs(fpre):
            if xpre == xblk:
                stry = -fcur * (xcur - xpre) / (fcur - fpre)
            else:
                dpre = (fpre - fcur) / (xpre - xcur)
                dblk = (fblk - fcur) / (xblk - xcur)
                stry = -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            if 2.0 * abs(stry) < min(abs(spre), 3.0 * abs(sbis) - delta):
                spre, scur = scur, stry
            else:
                spre = scur = sbis
        else:
            spre = scur = sbis
        xpre, fpre = xcur, fcur
        xcur += scur if abs(scur) > delta else (delta if sbis > 0 else -delta)
        fcur = f(xcur)
        n += 1


def solve_root(lsf, direction, sigma=1.0, r_hint=None, *, g_hint=None, g0=None,
               r_max=R_MAX, r_tol=R_TOL, max_iter=MAX_ITER):
    """Locate the root of ``G(sigma * r * a)`` along unit direction ``a``.

    With ``r_hint`` (a radius known to fail; pass its cached response as
    ``g_hint`` to save an evaluation) the bracket is ``[0, r_hint]``.
    Without it the radius grows geometrically from 1 to ``r_max`` and the
    first safe-to-fail crossing is refined. Pass ``g0`` to reuse ``G(0)``.
    """
    a = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(a) - 1.0) > 1e-10:
        raise ValueError("direction must be a unit vector")
    if sigma < 1.0:
        raise ValueError("sigma must be >= 1")
    start = lsf.n_evals
    if g0 is None:
        g0 = origin_value(lsf)
    elif not g0 > 0:
        raise UnsafeOrigin(f"G(0) = {g0} <= 0 for {lsf.name}")

    def f(r):
        return float(lsf(sigma * r * a))

    lo, g_lo = 0.0, g0
    if r_hint is not None:
        hi = float(r_hint)
        g_hi = f(hi) if g_hint is None else float(g_hint)
        if g_hi > 0:
            raise ValueError(f"hint radius {hi} is not in the failure domain (G = {g_hi})")
    else:
        hi, g_hi = None, None
        r = 1.0
        while True:
            g = f(r)
            if g <= 0:
                hi, g_hi = r, g
                break
            lo, g_lo = r, g
            if r >= r_max:
                raise NoRootFound(f"no sign change up to r = {r_max}")
            r = min(2.0 * r, r_max)
    if g_hi == 0:
        return Root(hi, hi, g_hi, lsf.n_evals - start)
    x, fx, x_other, f_other = _brent(f, lo, hi, g_lo, g_hi, r_tol, g_tolerance(g0), max_iter)
    if fx <= 0:
        r_fail, g_fail = x, fx
    else:
        r_fail, g_fail = x_other, f_other
    return Root(x, r_fail, g_fail, lsf.n_evals - start)


def find_root(lsf, direction, sigma=1.0, r_hint=None, **kwargs):
    """Radius ``r*`` with ``G(sigma * r* * a) = 0``; see :func:`solve_root`."""
    return solve_root(lsf, direction, sigma, r_hint, **kwargs).r


def rescale_root(r, sigma_i, sigma_next):
    """Root at magnification ``sigma_next`` from the root at ``sigma_i``.

    ``G(sigma_i r a) = 0`` is the same point as ``G(sigma_next r' a) = 0`` with
    ``r' = r sigma_i / sigma_next``, so no model evaluation is needed.
    """
    if sigma_next > sigma_i or sigma_next < 1.0:
        raise ValueError("require 1 <= sigma_next <= sigma_i")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("roots must be positive")
    out = r * sigma_i / sigma_next
    return float(out) if out.ndim == 0 else out
