import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gdcransac.errors import DomainError
from gdcransac.ransac import CostModel
from gdcransac.ransac.analytics import (doubly_nested_iterations, filter_savings_mu,
                                        nested_iterations, nesting_savings_nu, predict_cost,
                                        required_iterations)


def oracle_n(p, w):
    # direct transcription, independent of the package helper
    return max(1, math.ceil(math.log(1 - p) / math.log(1 - w)))


@pytest.mark.parametrize("e,n", [(0.70, 169), (0.80, 574), (0.60, 70)])
def test_required_iterations_pins(e, n):
    assert required_iterations(0.99, e, 3) == n


def test_required_iterations_zero_outliers():
    assert required_iterations(0.99, 0.0, 3) == 1


def test_required_iterations_e_one_raises():
    with pytest.raises(DomainError):
        required_iterations(0.99, 1.0, 3)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1])
def test_bad_probability(p):
    with pytest.raises(DomainError):
        required_iterations(p, 0.5, 3)


ratio = st.floats(0.0, 0.99)


@given(ratio, ratio, st.integers(1, 6))
def test_required_iterations_monotone_in_e(e_a, e_b, s):
    lo, hi = sorted((e_a, e_b))
    assert required_iterations(0.99, lo, s) <= required_iterations(0.99, hi, s)


@given(ratio, st.integers(1, 5))
def test_required_iterations_monotone_in_s(e, s):
    assert required_iterations(0.99, e, s) <= required_iterations(0.99, e, s + 1)


@given(ratio, ratio, ratio)
def test_nesting_never_costs_more(a, b, c):
    e1, e2, e = sorted((a, b, c))
    assert doubly_nested_iterations(0.99, e1, e2, e, 3) <= nested_iterations(0.99, e1, e, 3) \
        <= required_iterations(0.99, e, 3)


def test_nesting_monotonicity_sweep():
    rs = np.random.default_rng(0)
    for _ in range(1000):
        e1, e2, e = np.sort(rs.uniform(0, 0.97, 3))
        d = doubly_nested_iterations(0.99, e1, e2, e, 3)
        n = nested_iterations(0.99, e1, e, 3)
        assert d <= n <= required_iterations(0.99, e, 3)


def test_nested_iterations_degenerate_forms():
    assert nested_iterations(0.99, 0.7, 0.7, 3) == required_iterations(0.99, 0.7, 3)
    assert nested_iterations(0.99, 0.0, 0.8, 3) == oracle_n(0.99, 0.2 ** 2)
    assert doubly_nested_iterations(0.99, 0.8, 0.8, 0.8, 3) == required_iterations(0.99, 0.8, 3)
    assert doubly_nested_iterations(0.99, 0.0, 0.0, 0.8, 3) == required_iterations(0.99, 0.8, 1)


def test_nested_iterations_formula_oracle():
    from gdcransac.synthetic import SceneConfig, generate
    sc = generate(SceneConfig(outlier_ratio=0.8, seed=4))
    out = ~sc.labels
    e1, e = out[:100].mean(), out[:250].mean()
    assert nested_iterations(0.99, e1, e, 3) == oracle_n(0.99, (1 - e1) * (1 - e) ** 2)


def test_doubly_nested_needs_ordered_ratios():
    with pytest.raises(DomainError):
        doubly_nested_iterations(0.99, 0.5, 0.3, 0.8, 3)


def test_mu_identity_and_infinity():
    assert filter_savings_mu(0.7, 0.7, 3) == 1.0
    assert filter_savings_mu(0.7, 0.0, 3) == math.inf
    with pytest.raises(DomainError):
        filter_savings_mu(0.5, 0.6, 3)


@given(st.floats(0.05, 0.97), st.floats(0.0, 1.0))
def test_mu_definitional_consistency(e, frac):
    e_bar = e * frac
    if e_bar == 0:
        return
    mu = filter_savings_mu(e, e_bar, 3)
    assert mu >= 1.0
    # μ is a ratio of logs, the iteration counts are ceilings of those logs
    n_bar = required_iterations(0.99, e_bar, 3)
    n = required_iterations(0.99, e, 3)
    assert abs(mu * n_bar - n) <= mu + 1


def test_mu_consistency_within_one_iteration():
    # ±1 in the apportioned unit: N/μ against N̄
    rs = np.random.default_rng(3)
    for _ in range(1000):
        e = rs.uniform(0.3, 0.97)
        e_bar = rs.uniform(0.01, e)
        mu = filter_savings_mu(e, e_bar, 3)
        assert abs(required_iterations(0.99, e, 3) / mu - required_iterations(0.99, e_bar, 3)) <= 1 + 1e-9


def test_mu_reaches_21_at_half_outliers():
    # solve for the e_bar giving μ = 21 at e = 0.5, then check the formula round-trips
    lo, hi = 0.0, 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if filter_savings_mu(0.5, mid, 3) > 21:
            lo = mid
        else:
            hi = mid
    assert filter_savings_mu(0.5, hi, 3) == pytest.approx(21, rel=1e-9)


def test_nu_properties():
    assert nesting_savings_nu(0.7, None, 0.7, 3) == 1.0
    assert nesting_savings_nu(0.7, 0.7, 0.7, 3) == 1.0
    rs = np.random.default_rng(5)
    for _ in range(500):
        e1, e2, e = np.sort(rs.uniform(0.05, 0.97, 3))
        nu = nesting_savings_nu(e1, e2, e, 3)
        n = required_iterations(0.99, e, 3)
        assert abs(n / nu - doubly_nested_iterations(0.99, e1, e2, e, 3)) <= 1 + 1e-9
        nu1 = nesting_savings_nu(e1, None, e, 3)
        assert abs(n / nu1 - nested_iterations(0.99, e1, e, 3)) <= 1 + 1e-9


def test_nu_increases_with_e():
    es = np.linspace(0.6, 0.95, 30)
    nus = [nesting_savings_nu(0.6 * e, None, e, 3) for e in es]
    assert all(b > a for a, b in zip(nus, nus[1:]))


def test_cost_model_pins():
    assert predict_cost(169, 169, CostModel.classic()) * 1e3 == pytest.approx(7.80, rel=0.01)
    assert predict_cost(169, 44, CostModel.gdc()) * 1e3 == pytest.approx(2.94, rel=0.01)
    m = CostModel.gdc()
    assert predict_cost(100, 0, m) == 100 * m.alpha


def test_cost_model_validation():
    with pytest.raises(ValueError):
        CostModel(0.0, 1.0)
    with pytest.raises(ValueError):
        predict_cost(3, 4, CostModel())
