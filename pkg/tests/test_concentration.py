import math

from amp_lab.concentration import (
    hoeffding_bound,
    hoeffding_interval,
    hoeffding_radius,
    scaled_bernoulli_bound,
    simulate_scaled_bernoulli,
    simulate_uniform_sums,
    simulate_weighted_bernoulli,
    smooth_sampling_check,
    standard_error,
    variance_bound,
)
from amp_lab.dist_core import bernoulli, product
from amp_lab.errors import ZeroProbabilityEvent

import numpy as np
from pytest import raises, approx


def test_hoeffding_bound():
    assert hoeffding_bound([(0, 1)] * 100, 10) == approx(math.exp(-2))
    assert hoeffding_bound([(0, 1)] * 100, 10, two_sided=True) == approx(2 * math.exp(-2))
    assert hoeffding_bound([(-1, 1)] * 4, 0) == 1.0
    # Clamped to 1
    assert hoeffding_bound([(0, 1)] * 100, 1, two_sided=True) == 1.0
    # Degenerate ranges
    assert hoeffding_bound([(2, 2)], 0) == 1.0
    assert hoeffding_bound([(2, 2)], 1) == 0.0

    with raises(ValueError):
        hoeffding_bound([(0, 1)], -1)
    with raises(ValueError):
        hoeffding_bound([(1, 0)], 1)


def test_variance_bound():
    v = 50 * 0.1 * 0.9
    assert variance_bound(v, 1, 5) == approx(2 * math.exp(-25 / (2 * (v + 5 / 3))))
    assert variance_bound(0, 0, 0) == 1.0
    assert variance_bound(0, 0, 1) == 0.0
    with raises(ValueError):
        variance_bound(-1, 1, 1)


def test_scaled_bernoulli_bound():
    value = scaled_bernoulli_bound(0.5, 200, 0.3, 1, 200)
    assert value == approx(4 * math.exp(-0.5 * 200 ** 2 * 0.09 / (5 * 200)))
    assert 0 < value < 1
    for args in [(0, 1, 0.1, 1, 1), (0.5, 1, 1.5, 1, 1), (0.5, 1, 0.1, 0, 1), (0.5, 1, 0.1, 1, 0)]:
        with raises(ValueError):
            scaled_bernoulli_bound(*args)


def test_hoeffding_interval():
    r = hoeffding_radius(10000)
    assert r == approx(math.sqrt(math.log(2 / 0.003) / 20000))
    assert hoeffding_radius(40000) == approx(r / 2)
    assert hoeffding_radius(100, span=2) == approx(2 * hoeffding_radius(100))

    lo, hi = hoeffding_interval(0.5, 10000)
    assert lo == approx(0.5 - r) and hi == approx(0.5 + r)
    # Clipped to [0, 1]
    assert hoeffding_interval(0.0, 100)[0] == 0.0
    assert hoeffding_interval(1.0, 100)[1] == 1.0

    assert standard_error(0.5, 100) == approx(0.05)
    assert standard_error(0.0, 100) == 0.0

    with raises(ValueError):
        hoeffding_radius(0)
    with raises(ValueError):
        hoeffding_radius(10, confidence=1)


def test_bounds_dominate_simulation():
    rng = np.random.default_rng(0)

    freq = simulate_uniform_sums(100, 10, 20000, rng)
    assert freq <= hoeffding_bound([(0, 1)] * 100, 10)

    b = np.ones(50)
    p = np.full(50, 0.1)
    freq = simulate_weighted_bernoulli(b, p, 5, 20000, rng)
    assert freq <= variance_bound(float(b ** 2 @ p), 1.0, 5)

    L = rng.uniform(0, 1, 2000)
    p = np.full(2000, 0.5)
    freq = simulate_scaled_bernoulli(L, p, 0.3, 2000, rng)
    bound = scaled_bernoulli_bound(0.5, L.sum(), 0.3, 1.0, 2000)
    assert bound < 0.1
    assert freq <= bound

    with raises(ValueError):
        simulate_scaled_bernoulli([0, 0], [0.5, 0.5], 0.1, 10, rng)


def test_smooth_sampling_check():
    P = product([bernoulli(0.5), bernoulli(0.5)])

    # Every prefix can still reach W: equality
    lhs, rhs = smooth_sampling_check(P, lambda x: x[1] == 1, 1)
    assert lhs == approx(2) and rhs == approx(2)

    # Prefixes that cannot reach W lower the left side
    W = lambda x: x == (1, 1)  # noqa: E731
    lhs, rhs = smooth_sampling_check(P, W, 1)
    assert lhs == approx(2) and rhs == approx(4)
    assert smooth_sampling_check(P, W, 0) == approx((4, 4))
    assert smooth_sampling_check(P, W, 2) == approx((1, 4))

    with raises(ZeroProbabilityEvent):
        smooth_sampling_check(P, lambda x: False, 1)


def test_smooth_sampling_on_random_products():
    rng = np.random.default_rng(1)
    for _ in range(20):
        P = product([bernoulli(p) for p in rng.uniform(0.1, 0.9, 3)])
        target = tuple(int(v) for v in rng.integers(0, 2, 3))
        W = lambda x, target=target: x[2] == target[2]  # noqa: E731
        for i in range(3):
            lhs, rhs = smooth_sampling_check(P, W, i)
            assert lhs == approx(rhs)
        W = lambda x, target=target: x == target  # noqa: E731
        for i in range(4):
            lhs, rhs = smooth_sampling_check(P, W, i)
            assert lhs <= rhs + 1e-9
