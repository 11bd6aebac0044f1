"""
Closed-form tail bounds, the Hoeffding confidence intervals used for every
Monte Carlo estimate, and the smooth-sampling identity.
"""

import logging
import math

import numpy as np

from .dist_core import as_event
from .errors import ZeroProbabilityEvent


logger = logging.getLogger(__name__)


def _clamp(value):
    return min(1.0, max(0.0, float(value)))


def hoeffding_bound(ranges, t, two_sided=False):
    """Pr[X - E[X] >= t] <= exp(-2 t^2 / sum (b_i - a_i)^2) for a sum of
    independent variables with X_i in [a_i, b_i]. Doubled if `two_sided`.
    """
    if t < 0:
        raise ValueError("Expected t to be nonnegative.")
    span2 = 0.0
    for a, b in ranges:
        if b < a:
            raise ValueError(f"Expected a <= b in range ({a}, {b}).")
        span2 += (b - a) ** 2
    if span2 == 0:
        return 1.0 if t == 0 else 0.0
    value = math.exp(-2 * t * t / span2)
    return _clamp(2 * value if two_sided else value)


def variance_bound(v, b, t):
    """2 exp(-t^2 / (2 (v + b t / 3))) for weighted Bernoulli sums with
    v = sum b_i^2 p_i and b = max b_i.
    """
    if v < 0 or b < 0 or t < 0:
        raise ValueError("Expected v, b and t to be nonnegative.")
    denom = 2 * (v + b * t / 3)
    if denom == 0:
        return 1.0 if t == 0 else 0.0
    return _clamp(2 * math.exp(-t * t / denom))


def scaled_bernoulli_bound(p, mu, gamma, ell, n):
    """4 exp(-p mu^2 gamma^2 / (5 ell^2 n)), the tail of |Z / mu - 1| for
    Z_i = (L_i / p_i) Bern(p_i) with |L_i| <= ell and p = min p_i.
    """
    if not 0 < p <= 1:
        raise ValueError("Expected p to be in (0, 1].")
    if not 0 <= gamma <= 1:
        raise ValueError("Expected gamma to be in [0, 1].")
    if ell <= 0 or n < 1:
        raise ValueError("Expected ell > 0 and n >= 1.")
    return _clamp(4 * math.exp(-p * mu * mu * gamma * gamma / (5 * ell * ell * n)))


def smooth_sampling_check(P, W, i):
    """Return (E_{x_<i ~ P|W}[1 / P[W | x_<i]], 1 / P[W]).

    `P` is a pmf over tuples and `i` the prefix length. The two values
    agree when every prefix of positive probability can still reach W;
    otherwise the left side is the smaller one.
    """
    W = as_event(W)
    pw = P.prob_of(W)
    if pw <= 0:
        raise ZeroProbabilityEvent(f"Event {W.label!r} has probability zero.")
    prefix_mass = {}
    prefix_win = {}
    for x, p in P.items():
        key = tuple(x[:i])
        prefix_mass[key] = prefix_mass.get(key, 0.0) + p
        if W(x):
            prefix_win[key] = prefix_win.get(key, 0.0) + p
    # P[x_<i | W] / P[W | x_<i] = P[x_<i] / P[W]
    lhs = sum(prefix_mass[key] for key in prefix_win) / pw
    return lhs, 1.0 / pw


def hoeffding_radius(trials, span=1.0, confidence=0.997):
    """Half-width of the two-sided Hoeffding interval for a mean of
    `trials` independent samples in a range of width `span`.
    """
    if trials < 1:
        raise ValueError("Expected at least one trial.")
    if not 0 < confidence < 1:
        raise ValueError("Expected confidence to be in (0, 1).")
    return span * math.sqrt(math.log(2 / (1 - confidence)) / (2 * trials))


def hoeffding_interval(mean, trials, span=1.0, confidence=0.997, low=0.0, high=1.0):
    """The Hoeffding interval around `mean`, clipped to [low, high]."""
    r = hoeffding_radius(trials, span, confidence)
    return max(low, mean - r), min(high, mean + r)


def standard_error(mean, trials):
    """Standard error of a Bernoulli mean."""
    return math.sqrt(max(mean * (1 - mean), 0.0) / trials)


# Monte Carlo domination helpers; each returns the empirical tail frequency.


def simulate_uniform_sums(k, t, trials, rng):
    """Empirical Pr[S - E[S] >= t] for S a sum of k uniform(0, 1) variables."""
    sums = rng.random((trials, k)).sum(axis=1)
    return float(np.mean(sums - k / 2 >= t))


def simulate_weighted_bernoulli(b, p, t, trials, rng):
    """Empirical Pr[|X - E[X]| >= t] for X = sum b_i Bern(p_i)."""
    b = np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    draws = rng.random((trials, len(p))) < p
    x = draws @ b
    return float(np.mean(np.abs(x - b @ p) >= t))


def simulate_scaled_bernoulli(L, p, gamma, trials, rng):
    """Empirical Pr[|Z / mu - 1| >= gamma] for Z_i = (L_i / p_i) Bern(p_i),
    with the L_i fixed nonnegative values and mu = sum L_i.
    """
    L = np.asarray(L, dtype=float)
    p = np.asarray(p, dtype=float)
    mu = L.sum()
    if mu <= 0:
        raise ValueError("Expected the L_i to have a positive sum.")
    draws = rng.random((trials, len(p))) < p
    z = draws @ (L / p)
    return float(np.mean(np.abs(z / mu - 1) >= gamma))
