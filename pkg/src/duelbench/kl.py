"""Bernoulli KL divergence and the KL-UCB upper index."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

BISECT_TOL = 1e-9
BISECT_MAX_ITER = 100


@dataclass(frozen=True)
class KlBudget:
    """Inputs of one KL-UCB index: pulls, empirical mean, exploration budget."""

    n_pulls: int
    mean: float
    threshold: float

    def __post_init__(self):
        if self.n_pulls < 1:
            raise ValueError(f"n_pulls must be >= 1, got {self.n_pulls}")
        if not 0.0 <= self.mean <= 1.0:
            raise ValueError(f"mean must lie in [0, 1], got {self.mean}")
        if not self.threshold >= 0.0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")


@numba.njit(cache=True, nogil=True)
def _xlogy_ratio(x, y):
    # x * ln(x / y) with 0 ln 0 = 0 ln(0/0) = 0 and x ln(x/0) = +inf
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return math.inf
    return x * math.log(x / y)


@numba.njit(cache=True, nogil=True)
def kl_bernoulli_raw(p, q):
    return _xlogy_ratio(p, q) + _xlogy_ratio(1.0 - p, 1.0 - q)


@numba.njit(cache=True, nogil=True)
def kl_ucb_index_raw(n_pulls, mean, threshold):
    if threshold == 0.0:
        return mean
    if mean >= 1.0:
        return 1.0
    if mean <= 0.0:
        q = -math.expm1(-threshold / n_pulls)
        # near q = 1 rounding can leave the budget a few ulps short; step down
        while n_pulls * kl_bernoulli_raw(0.0, q) > threshold:
            q = np.nextafter(q, 0.0)
        return q
    lo = mean
    hi = 1.0
    it = 0
    while hi - lo > BISECT_TOL and it < BISECT_MAX_ITER:
        mid = 0.5 * (lo + hi)
        if n_pulls * kl_bernoulli_raw(mean, mid) <= threshold:
            lo = mid
        else:
            hi = mid
        it += 1
    return lo


def kl_bernoulli(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q).

    Returns ``math.inf`` when ``q`` puts zero mass where ``p`` does not.
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError(f"arguments must lie in [0, 1], got p={p}, q={q}")
    return float(kl_bernoulli_raw(float(p), float(q)))


def kl_ucb_index(budget: KlBudget) -> float:
    """Largest ``q >= mean`` with ``n_pulls * KL(mean, q) <= threshold``.

    Bisection on ``[mean, 1]`` to width 1e-9 (at most 100 steps); the lower
    endpoint is returned so the budget inequality holds at the result.
    """
    return float(kl_ucb_index_raw(budget.n_pulls, float(budget.mean), float(budget.threshold)))
