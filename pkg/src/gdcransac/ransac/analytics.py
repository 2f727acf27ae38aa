"""Closed-form iteration bounds, savings ratios and the per-hypothesis cost model."""
import math

from ..errors import DomainError


def _check_p(p):
    if not 0 < p < 1:
        raise DomainError(f"p must lie in (0, 1), got {p}")


def _check_ratio(name, e):
    if not 0 <= e <= 1:
        raise DomainError(f"{name} must lie in [0, 1], got {e}")
    if e == 1:
        raise DomainError(f"{name} = 1 leaves no inliers; the bound is undefined")


def iterations_for_probability(p, w):
    """Smallest N with (1 - w)**N <= 1 - p, where w is the all-inlier sample probability."""
    _check_p(p)
    if w >= 1:
        return 1
    if w <= 0:
        raise DomainError("sample success probability is zero")
    n = math.ceil(math.log(1 - p) / math.log1p(-w))
    return max(1, n)


def required_iterations(p, e, s):
    _check_ratio("e", e)
    if s < 1:
        raise DomainError("s must be at least 1")
    return iterations_for_probability(p, (1 - e) ** s)


def nested_iterations(p, e1, e, s):
    _check_ratio("e", e)
    _check_ratio("e1", e1)
    if e1 > e:
        raise DomainError("nested prefix must not have more outliers than the full list")
    return iterations_for_probability(p, (1 - e1) * (1 - e) ** (s - 1))


def doubly_nested_iterations(p, e1, e2, e, s):
    if s < 3:
        raise DomainError("doubly nested sampling needs s >= 3")
    for name, v in (("e", e), ("e1", e1), ("e2", e2)):
        _check_ratio(name, v)
    if not e1 <= e2 <= e:
        raise DomainError("require e1 <= e2 <= e")
    return iterations_for_probability(p, (1 - e1) * (1 - e2) * (1 - e) ** (s - 2))


def _log_fail(w):
    return math.log1p(-w) if w < 1 else -math.inf


def filter_savings_mu(e, e_bar, s):
    """N / N̄ for a filter lowering the outlier ratio from ``e`` to ``e_bar``.

    Returns +inf when ``e_bar`` is 0 (a single filtered hypothesis suffices).
    """
    _check_ratio("e", e)
    if not 0 <= e_bar <= e:
        raise DomainError("require 0 <= e_bar <= e")
    if e_bar == 0:
        return math.inf
    return _log_fail((1 - e_bar) ** s) / _log_fail((1 - e) ** s)


def nesting_savings_nu(e1, e2_opt, e, s):
    """N / N̄ for nested sampling; pass ``e2_opt=None`` for the singly nested form."""
    e2 = e if e2_opt is None else e2_opt
    for name, v in (("e", e), ("e1", e1), ("e2", e2)):
        _check_ratio(name, v)
    if not e1 <= e2 <= e:
        raise DomainError("require e1 <= e2 <= e")
    if s < 3:
        raise DomainError("s must be at least 3")
    tail = (1 - e) ** (s - 2)
    # same association on both sides so e1 = e2 = e gives exactly 1
    w = (1 - e1) * (1 - e2) * tail
    return _log_fail(w) / _log_fail((1 - e) * (1 - e) * tail)


def predict_cost(iterations, passed, model):
    """Total cost in seconds: every hypothesis is formed; only ``passed`` ones are scored."""
    if passed > iterations:
        raise ValueError("passed cannot exceed iterations")
    return iterations * model.alpha + passed * model.beta
