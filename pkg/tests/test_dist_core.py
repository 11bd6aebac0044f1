from amp_lab.dist_core import (
    EventPredicate,
    FinitePmf,
    JointIndex,
    Sentinel,
    bernoulli,
    canonical_key,
    condition,
    empirical_pmf,
    make_pmf,
    marginalize,
    point_mass,
    product,
    pushforward,
    sample_pmf,
    total_variation,
    uniform,
)
from amp_lab.errors import CoordinateError, ZeroProbabilityEvent

import numpy as np
from pytest import raises, approx


def test_finite_pmf_init():

    # Weights must be valid
    with raises(ValueError):
        FinitePmf(["a", "b"], [0.5])
    with raises(ValueError):
        FinitePmf(["a", "b"], [1.5, -0.5])
    with raises(ValueError):
        FinitePmf(["a", "b"], [0.5, 0.6])
    with raises(ValueError):
        FinitePmf(["a", "a"], [0.5, 0.5])
    with raises(ValueError):
        FinitePmf([], [])

    P = FinitePmf(["b", "a", "c"], [0.25, 0.75, 0.0])
    assert P.outcomes == ("a", "b", "c")
    assert P.support == ("a", "b")
    assert P.prob("a") == 0.75
    assert P.prob("zzz") == 0.0
    assert len(P) == 3
    assert P.as_dict() == {"a": 0.75, "b": 0.25}

    # Probabilities are read-only
    with raises(ValueError):
        P.probs[0] = 1


def test_canonical_order_of_mixed_outcomes():
    outcomes = [(1, 2), "x", 3, None, Sentinel("s"), 0.5]
    ordered = sorted(outcomes, key=canonical_key)
    assert ordered == [None, 0.5, 3, "x", (1, 2), Sentinel("s")]

    P = uniform(outcomes)
    assert P.outcomes == tuple(ordered)


def test_make_pmf_merges_duplicates():
    P = make_pmf([("a", 1), ("b", 2), ("a", 1)])
    assert P.prob("a") == approx(0.5)
    assert P.prob("b") == approx(0.5)

    with raises(ValueError):
        make_pmf([("a", 0)])
    with raises(ValueError):
        make_pmf([("a", -1), ("b", 2)])


def test_constructors():
    assert point_mass(7).as_dict() == {7: 1.0}
    assert bernoulli(0.3).prob(1) == approx(0.3)
    assert bernoulli(0.3).outcomes == (0, 1)
    assert uniform(range(4)).prob(2) == approx(0.25)

    with raises(ValueError):
        bernoulli(1.5)
    with raises(ValueError):
        uniform([])


def test_events():
    P = uniform(range(6))
    even = EventPredicate(lambda x: x % 2 == 0, "even")
    small = EventPredicate(lambda x: x < 3, "small")

    assert P.prob_of(even) == approx(0.5)
    assert P.prob_of(even & small) == approx(2 / 6)
    assert P.prob_of(even | small) == approx(4 / 6)
    assert P.prob_of(~even) == approx(0.5)
    assert P.prob_of(EventPredicate.full()) == approx(1)
    # plain callables are wrapped
    assert P.prob_of(lambda x: x == 5) == approx(1 / 6)
    assert "even" in (even & small).label


def test_condition():
    P = uniform(range(6))
    Q = condition(P, lambda x: x >= 4)
    assert Q.as_dict() == approx({4: 0.5, 5: 0.5})

    with raises(ZeroProbabilityEvent):
        condition(P, lambda x: x > 10)


def test_product_and_marginalize():
    P = product([bernoulli(0.25), uniform("ab")])
    assert P.prob((1, "a")) == approx(0.125)
    assert P.prob((0, "b")) == approx(0.375)

    M = marginalize(P, 0)
    assert M.as_dict() == approx({0: 0.75, 1: 0.25})
    M = marginalize(P, JointIndex((1, 0)))
    assert M.prob(("a", 1)) == approx(0.125)

    with raises(CoordinateError):
        marginalize(P, 2)
    with raises(CoordinateError):
        marginalize(uniform(range(3)), 0)
    with raises(CoordinateError):
        JointIndex(())


def test_map_and_pushforward():
    P = uniform(range(4))
    # deterministic
    Q = P.map_values(lambda x: x % 2)
    assert Q.as_dict() == approx({0: 0.5, 1: 0.5})
    # randomized: 0 stays, others flip a fair coin between x and -x
    kernel = lambda x: point_mass(0) if x == 0 else uniform([x, -x])  # noqa: E731
    R = pushforward(P, kernel)
    assert R.prob(0) == approx(0.25)
    assert R.prob(-3) == approx(0.125)
    assert P.expect(lambda x: x) == approx(1.5)


def test_sampling_is_seeded():
    P = make_pmf([("a", 0.2), ("b", 0.0), ("c", 0.8)])
    s1 = [P.sample(np.random.default_rng(3)) for _ in range(5)]
    s2 = [sample_pmf(P, np.random.default_rng(3)) for _ in range(5)]
    assert s1 == s2

    rng = np.random.default_rng(0)
    samples = [P.sample(rng) for _ in range(20_000)]
    assert "b" not in samples
    # 3 sigma is about 0.009 here
    assert total_variation(empirical_pmf(samples), P) < 0.015


def test_total_variation():
    P = uniform("ab")
    Q = point_mass("a")
    assert total_variation(P, Q) == approx(0.5)
    assert total_variation(P, P) == 0
    assert total_variation(point_mass("a"), point_mass("b")) == approx(1)
