import math

import numpy as np
import pytest

from _oracles import BENCHMARKS, rescale_discrepancy
from sdis.exceptions import NoRootFound, UnsafeOrigin
from sdis.limit_states import LimitState, make_model
from sdis.line_search import R_TOL, find_root, g_tolerance, rescale_root, solve_root
from sdis.mathcore import make_rng, sample_uniform_direction


def test_linear_closed_form_roots():
    n = 10
    lsf = make_model(f"linear_sum:n={n}:beta=4")
    a = np.ones(n) / math.sqrt(n)
    assert find_root(lsf, a) == pytest.approx(4.0, rel=1e-12)
    assert find_root(lsf, a, sigma=3.0) == pytest.approx(4.0 / 3.0, rel=1e-12)


def test_four_branch_diagonal_root():
    lsf = make_model("four_branch")
    assert find_root(lsf, np.ones(2) / math.sqrt(2)) == pytest.approx(5.0, rel=1e-10)


def test_hint_with_known_value_costs_one_evaluation_on_linear_ray():
    n = 10
    lsf = make_model(f"linear_sum:n={n}:beta=4")
    a = np.ones(n) / math.sqrt(n)
    res = solve_root(lsf, a, 1.0, 6.0, g_hint=-2.0, g0=4.0)
    assert res.r == pytest.approx(4.0, rel=1e-12)
    assert res.n_evals == lsf.n_evals == 1


def test_rescale_examples():
    assert rescale_root(5.0 / 3.0, 3.0, 1.0) == pytest.approx(5.0, rel=1e-15)
    assert rescale_root(2.7, 1.8, 1.8) == 2.7
    np.testing.assert_allclose(rescale_root(np.array([1.0, 2.0]), 2.0, 1.0), [2.0, 4.0])
    with pytest.raises(ValueError):
        rescale_root(1.0, 2.0, 3.0)
    with pytest.raises(ValueError):
        rescale_root(1.0, 2.0, 0.5)


@pytest.mark.parametrize("i, model_id", list(enumerate(BENCHMARKS)))
def test_rescale_matches_fresh_solve(i, model_id):
    for sigma_next in (1.0, 1.7):
        assert rescale_discrepancy(model_id, make_rng(20, i), sigma_next=sigma_next) <= 1e-8


@pytest.mark.parametrize("model_id", BENCHMARKS)
def test_root_meets_tolerance(model_id):
    lsf = make_model(model_id)
    g0 = float(lsf(np.zeros(lsf.dim)))
    rng = make_rng(21)
    found = 0
    for a in sample_uniform_direction(lsf.dim, rng, size=60):
        try:
            res = solve_root(lsf, a, 3.0, g0=g0)
        except NoRootFound:
            continue
        found += 1
        g = lsf(3.0 * res.r * a)
        # either the residual is small or the bracket has collapsed around r
        near = abs(g) <= g_tolerance(g0)
        tight = abs(res.r - res.r_fail) <= R_TOL * max(1.0, res.r)
        assert near or tight
        assert lsf(3.0 * res.r_fail * a) <= 0
    assert found > 0


def test_deterministic():
    lsf = make_model("two_region")
    a = np.array([-1.0, -0.8]) / np.linalg.norm([-1.0, -0.8])
    assert find_root(lsf, a, 2.0) == find_root(lsf, a, 2.0)


def test_errors():
    lsf = make_model("linear_sum:n=2:beta=4")
    with pytest.raises(ValueError):
        find_root(lsf, np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        find_root(lsf, np.array([1.0, 0.0]), sigma=0.5)
    with pytest.raises(NoRootFound):
        find_root(lsf, np.array([-1.0, 0.0]))
    with pytest.raises(ValueError):
        find_root(lsf, np.array([1.0, 0.0]), r_hint=1.0)  # hint is safe
    unsafe = LimitState(lambda u: -1.0 + 0 * np.sum(u, axis=-1), 2)
    with pytest.raises(UnsafeOrigin):
        find_root(unsafe, np.array([1.0, 0.0]))


def test_infinite_response_is_bisected():
    # the failing end reports -inf (a domain fault); the root is still found
    def g(u):
        r = np.asarray(u)[..., 0]
        return np.where(r > 5.0, -np.inf, 2.0 - r)

    lsf = LimitState(g, 1)
    assert find_root(lsf, np.array([1.0]), r_hint=10.0) == pytest.approx(2.0, rel=1e-8)
