from amp_lab.dist_core import (
    EventPredicate,
    Sentinel,
    bernoulli,
    make_pmf,
    marginalize,
    point_mass,
    product,
    uniform,
)
from amp_lab.divergence import (
    CutPair,
    SmoothCert,
    bern_deviation_floor,
    bern_kl,
    conditional_divergence_bound,
    conditional_kl,
    deterministic,
    kl,
    restricted_divergence_bound,
    small_event_bound,
    smooth_cert_eval,
    smooth_dp_transport,
)
from amp_lab.errors import InternalNamespaceError, SupportViolation

import math
import itertools

import numpy as np
from hypothesis import given, settings, strategies as st
from pytest import raises, approx


TOL = 1e-9


def weights(k, low=0.0):
    return st.lists(st.floats(low, 1.0), min_size=k, max_size=k).filter(
        lambda w: sum(w) > 0.01
    )


def pmf_on(k, low=0.0):
    return weights(k, low).map(lambda w: make_pmf(zip(range(k), w)))


# A pair pmf over (x, y) with x in range(2) and y in range(3)
def pair_pmf(low=0.0):
    return weights(6, low).map(lambda w: make_pmf(((k // 3, k % 3), v) for k, v in enumerate(w)))


def masking_pair(keep_p, keep_q):
    # keep x with the given probability, otherwise move it to a sentinel
    def f(keep):
        return lambda x: make_pmf([(x, keep[x]), (Sentinel(("mask", x)), 1 - keep[x])])

    return CutPair(f(keep_p), f(keep_q))


def test_kl_examples():
    assert kl(bernoulli(0.3), bernoulli(0.3)) == 0
    assert kl(point_mass(1), bernoulli(0.5)) == approx(math.log(2))
    assert kl(bernoulli(0.5), point_mass(0)) == math.inf
    # zero mass of P is ignored
    assert kl(point_mass(0), bernoulli(0.5)) == approx(math.log(2))


def test_bern_kl():
    assert bern_kl(0.4, 0.4) == 0
    assert bern_kl(1, 0.5) == approx(math.log(2))
    assert bern_kl(1, 0) == math.inf

    with raises(ValueError):
        bern_kl(1.2, 0.5)


def test_bern_deviation_floor_on_grid():
    grid = [k / 100 for k in range(1, 100)]
    for p in grid:
        for delta in grid:
            assert bern_kl((1 - delta) * p, p) >= bern_deviation_floor(p, delta) - 1e-12
            if (1 + delta) * p <= 1:
                floor = bern_deviation_floor(p, delta, upper=True)
                assert bern_kl((1 + delta) * p, p) >= floor - 1e-12

    with raises(ValueError):
        bern_deviation_floor(0.5, 1.5)
    with raises(ValueError):
        bern_deviation_floor(0.5, 1.5, upper=True)
    with raises(ValueError):
        bern_deviation_floor(0, 0.5)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6).flatmap(lambda k: st.tuples(pmf_on(k), pmf_on(k, 0.01))))
def test_information_inequality(pq):
    P, Q = pq
    d = kl(P, Q)
    assert d >= 0
    assert kl(P, P) == approx(0, abs=TOL)
    if d < 1e-12:
        assert np.allclose(P.probs, Q.probs, atol=1e-5)


@settings(max_examples=200, deadline=None)
@given(pair_pmf(), pair_pmf(0.01))
def test_chain_rule_and_monotonicity(P, Q):
    joint = kl(P, Q)
    px, qx = marginalize(P, 0), marginalize(Q, 0)
    py, qy = marginalize(P, 1), marginalize(Q, 1)
    assert joint == approx(kl(px, qx) + conditional_kl(P, Q), abs=TOL)
    assert joint >= kl(py, qy) - TOL
    assert conditional_kl(P, P) == approx(0, abs=TOL)


@settings(max_examples=100, deadline=None)
@given(pmf_on(2), pmf_on(3), pmf_on(3, 0.01))
def test_conditional_kl_of_independent_pairs(PX, PY, QY):
    P = product([PX, PY])
    Q = product([PX, QY])
    assert conditional_kl(P, Q) == approx(kl(PY, QY), abs=TOL)


@settings(max_examples=200, deadline=None)
@given(pair_pmf(), pair_pmf(0.01))
def test_conditioning_increases_divergence(P, Q):
    # D(P_Y|X || Q_Y|X) >= D(P_Y || Q_Y) when P_X = Q_X
    px = marginalize(P, 0)
    Q2 = make_pmf(((x, y), px.prob(x) * q / marginalize(Q, 0).prob(x)) for (x, y), q in Q.items())
    assert conditional_kl(P, Q2) >= kl(marginalize(P, 1), marginalize(Q2, 1)) - TOL


@settings(max_examples=200, deadline=None)
@given(pair_pmf(), pair_pmf(0.01))
def test_data_processing(P, Q):
    # a randomized function of the pair
    def kernel(xy):
        x, y = xy
        return make_pmf([(x + y, 0.7), ((x * y) % 2, 0.3)])

    assert kl(P.map(kernel), Q.map(kernel)) <= kl(P, Q) + TOL
    assert kl(P.map_values(lambda xy: xy[1]), Q.map_values(lambda xy: xy[1])) <= kl(P, Q) + TOL


@settings(max_examples=200, deadline=None)
@given(pmf_on(6, 0.01), st.sets(st.integers(0, 5), min_size=1))
def test_conditioning_and_restriction_bounds(P, members):
    W = EventPredicate(lambda x: x in members, "W")
    lhs, rhs = conditional_divergence_bound(P, W)
    assert lhs <= rhs + TOL

    Q = uniform(range(6))
    lhs, rhs = restricted_divergence_bound(P, Q, W)
    assert lhs <= rhs + TOL


@settings(max_examples=200, deadline=None)
@given(pair_pmf(0.01), pair_pmf(0.01), st.sets(st.integers(0, 1), min_size=1))
def test_conditional_divergence_given_an_event(P, Q, members):
    # E_{x ~ P_X|W} D(P_Y|x || Q_Y|x) <= D(P_Y|X || Q_Y|X) / P[W]
    W = EventPredicate(lambda xy: xy[0] in members, "W")
    pw = P.prob_of(W)
    PW = make_pmf((xy, p) for xy, p in P.items() if W(xy))
    QW = make_pmf(((x, y), q) for (x, y), q in Q.items() if x in members)
    assert conditional_kl(PW, QW) <= conditional_kl(P, Q) / pw + TOL


def test_smooth_cert_eval():
    P = make_pmf(zip(range(4), [0.1, 0.2, 0.3, 0.4]))
    Q = uniform(range(4))

    # Identity pair
    cert = smooth_cert_eval(P, Q, CutPair.identity())
    assert cert.alpha == 0
    assert cert.div == approx(kl(P, Q))

    # Everything collapses onto one sentinel
    gone = deterministic(lambda x: Sentinel("gone"))
    cert = smooth_cert_eval(P, Q, CutPair(gone, gone))
    assert cert.alpha == approx(1)
    assert cert.div == approx(0, abs=TOL)

    # Mapping onto another outcome is not allowed
    with raises(SupportViolation):
        smooth_cert_eval(P, Q, CutPair(deterministic(lambda x: (x + 1) % 4), point_mass))

    with raises(ValueError):
        SmoothCert(1.5, 0.0)
    with raises(ValueError):
        SmoothCert(0.5, -1.0)


def test_masking_pair_matches_brute_force():
    rng = np.random.default_rng(7)
    P = make_pmf(zip(range(6), rng.uniform(0.1, 1, 6)))
    Q = make_pmf(zip(range(6), rng.uniform(0.1, 1, 6)))
    keep_p = rng.uniform(0.5, 1, 6)
    keep_q = rng.uniform(0.5, 1, 6)
    cert = smooth_cert_eval(P, Q, masking_pair(keep_p, keep_q))

    alpha = sum(P.prob(x) * (1 - keep_p[x]) for x in range(6))
    images_p = {x: P.prob(x) * keep_p[x] for x in range(6)}
    images_q = {x: Q.prob(x) * keep_q[x] for x in range(6)}
    for x in range(6):
        images_p[("mask", x)] = P.prob(x) * (1 - keep_p[x])
        images_q[("mask", x)] = Q.prob(x) * (1 - keep_q[x])
    div = sum(p * math.log(p / images_q[k]) for k, p in images_p.items() if p > 0)
    assert cert.alpha == approx(alpha)
    assert cert.div == approx(div)


def test_small_event_bound_examples():
    P = make_pmf([(0, 0.1), (1, 0.9)])
    E = EventPredicate(lambda x: x == 0, "zero")
    assert small_event_bound(SmoothCert(0.0, 0.0), P, E) == approx(0.2)
    never = EventPredicate(lambda x: False, "never")
    assert small_event_bound(SmoothCert(0.01, 0.05), P, never) == approx(0.4)
    assert small_event_bound(SmoothCert(0.0, math.inf), P, E) == math.inf


def test_small_events_stay_small():
    rng = np.random.default_rng(11)
    for _ in range(50):
        k = int(rng.integers(2, 9))
        P = make_pmf(zip(range(k), rng.uniform(0, 1, k)))
        Q = make_pmf(zip(range(k), rng.uniform(0.05, 1, k)))
        pair = masking_pair(rng.uniform(0, 1, k), rng.uniform(0, 1, k))
        cert = smooth_cert_eval(P, Q, pair)
        for r in range(k + 1):
            for members in itertools.combinations(range(k), r):
                E = EventPredicate(lambda x, s=frozenset(members): x in s, "E")
                assert Q.prob_of(E) <= small_event_bound(cert, P, E) + TOL


def test_transport_with_identity_and_constant_maps():
    rng = np.random.default_rng(3)
    P = make_pmf(zip(range(5), rng.uniform(0.1, 1, 5)))
    Q = make_pmf(zip(range(5), rng.uniform(0.1, 1, 5)))
    pair = masking_pair(rng.uniform(0.3, 1, 5), rng.uniform(0.3, 1, 5))
    cert = smooth_cert_eval(P, Q, pair)

    # H = identity keeps the certificate
    moved = smooth_dp_transport(P, Q, pair, point_mass)
    cert2 = smooth_cert_eval(P, Q, moved)
    assert cert2.alpha == approx(cert.alpha, abs=TOL)
    assert cert2.div == approx(cert.div, abs=TOL)

    # H = constant loses information
    H = deterministic(lambda x: "c")
    moved = smooth_dp_transport(P, Q, pair, H)
    cert3 = smooth_cert_eval(P.map(H), Q.map(H), moved)
    assert cert3.div <= cert.div + TOL

    # H may not reach into the sentinel space
    with raises(InternalNamespaceError):
        smooth_dp_transport(P, Q, pair, deterministic(lambda x: Sentinel("x")))


def test_transport_on_random_maps():
    rng = np.random.default_rng(5)
    for _ in range(50):
        P = make_pmf(zip(range(6), rng.uniform(0, 1, 6)))
        Q = make_pmf(zip(range(6), rng.uniform(0.05, 1, 6)))
        pair = masking_pair(rng.uniform(0, 1, 6), rng.uniform(0, 1, 6))
        # a randomized H onto three labels
        table = rng.uniform(0, 1, (6, 3))

        def H(x, table=table):
            return make_pmf(zip("abc", table[x]))

        cert = smooth_cert_eval(P, Q, pair)
        moved = smooth_dp_transport(P, Q, pair, H)
        cert2 = smooth_cert_eval(P.map(H), Q.map(H), moved)
        assert cert2.div <= cert.div + TOL
        assert cert2.alpha <= cert.alpha + TOL
