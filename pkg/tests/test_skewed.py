from amp_lab.dist_core import EventPredicate, empirical_pmf, total_variation
from amp_lab.errors import (
    DensityViolation,
    PrefixOutsideSupport,
    UnreachableConditioning,
    ZeroProbabilityEvent,
)
from amp_lab.harness import degeneracy_deviation, skewed_identities
from amp_lab.instances import (
    bit_columns,
    full_family,
    make_winning_event,
    random_instance,
    termination_family,
)
from amp_lab.skewed import (
    BaseModel,
    DenseFamily,
    SkewedModel,
    build_fcut_certificate,
    column_event,
    column_of,
    gamma_eval,
    ideal_pmf,
    skewed_pmf_exact,
    skewed_sample,
    validate_density,
    weight_ledger,
)

import numpy as np
from pytest import raises, approx


def _termination_instance(p=0.5):
    base = BaseModel(2, 2, bit_columns(2, 2, p), make_winning_event("column-sums-equal", 2, 2))
    return base, termination_family(2, 2)


def test_base_model_init():
    cols = bit_columns(2, 2)
    with raises(ValueError):
        BaseModel(0, 2, cols, lambda x: True)
    with raises(ValueError):
        BaseModel(2, 3, cols, lambda x: True)
    with raises(ValueError):
        BaseModel(3, 2, cols, lambda x: True)
    with raises(TypeError):
        BaseModel(2, 2, (None, None), lambda x: True)

    base = BaseModel(2, 2, cols, lambda x: True)
    assert isinstance(base.W, EventPredicate)
    U = base.matrix_pmf()
    assert len(U) == 16
    assert U.prob(((0, 1), (1, 0))) == approx(1 / 16)
    assert column_of(((0, 1), (1, 0)), 1) == (1, 0)


def test_model_init():
    base, fam = _termination_instance()
    with raises(TypeError):
        SkewedModel(None, fam)
    with raises(TypeError):
        SkewedModel(base, None)
    with raises(ValueError):
        SkewedModel(base, termination_family(3, 2))

    never = BaseModel(2, 2, base.columns, lambda x: False)
    with raises(ZeroProbabilityEvent):
        SkewedModel(never, fam)

    model = SkewedModel(base, fam)
    assert model.base is base
    assert model.family is fam
    assert "m=2 n=2" in repr(model)
    assert model.density.delta_grid == ((0.5, 0.5), (1.0, 1.0))
    assert model.density.delta_min == 0.5
    assert model.density.prefix
    assert model.u_w == approx(6 / 16)


def test_density_validation():
    base = BaseModel(2, 2, bit_columns(2, 2), lambda x: True)
    full = EventPredicate.full()

    # An event reading another column
    cross = EventPredicate(lambda x: x[1][1] == 1, "other column")
    with raises(DensityViolation):
        validate_density(base, DenseFamily(((cross, full), (full, full))))

    # An event reading its own row
    own = column_event(0, lambda v: v[0] == 1)
    with raises(DensityViolation):
        validate_density(base, DenseFamily(((own, full), (full, full))))

    # The empty event
    empty = column_event(0, lambda v: False)
    with raises(DensityViolation):
        validate_density(base, DenseFamily(((empty, full), (full, full))))

    # Declared densities are checked
    events = termination_family(2, 2).events
    with raises(DensityViolation):
        validate_density(base, DenseFamily(events, delta_grid=((0.3, 0.5), (1, 1))))
    report = validate_density(base, DenseFamily(events, delta_grid=((0.5, 0.5), (1, 1))))
    assert report.delta_min == 0.5

    # A prefix family must be determined by the next row
    base3 = BaseModel(3, 1, bit_columns(3, 1), lambda x: True)
    late = column_event(0, lambda v: v[2] == 1)
    fam = DenseFamily(((late,), (full,), (full,)), prefix=True)
    with raises(DensityViolation):
        validate_density(base3, fam)
    assert not validate_density(base3, DenseFamily(fam.events)).prefix


def test_full_w_and_full_family_give_the_base_distribution():
    base = BaseModel(2, 2, bit_columns(2, 2, [[0.3, 0.6], [0.5, 0.8]]), lambda x: True)
    model = SkewedModel(base, full_family(2, 2))
    U = base.matrix_pmf()
    assert total_variation(model.skewed_x, U) < 1e-12
    assert total_variation(model.ideal, U) < 1e-12
    q_j = {}
    for (j, _), q in model.skewed.items():
        q_j[j] = q_j.get(j, 0.0) + q
    assert q_j == approx({0: 0.5, 1: 0.5})
    _, d = model.divergence_budget()
    assert d == approx(0, abs=1e-12)


def test_ideal_distribution():
    base, fam = _termination_instance()
    model = SkewedModel(base, fam)
    assert total_variation(model.ideal, ideal_pmf(base)) < 1e-12
    assert all(base.W(x) for x in model.ideal.support)
    assert model.ideal.prob(((0, 0), (0, 0))) == approx(1 / 6)

    # A single cell that must be one
    base = BaseModel(1, 1, bit_columns(1, 1, 0.3), make_winning_event("cell-is-one", 1, 1, 0, 0))
    model = SkewedModel(base, full_family(1, 1))
    assert model.ideal.as_dict() == {((1,),): 1.0}
    # the skewed distribution draws the cell from the base and cannot win on a zero
    with raises(UnreachableConditioning):
        model.skewed


def test_skewed_identities_on_the_termination_instance():
    base, fam = _termination_instance()
    values = skewed_identities(SkewedModel(base, fam))
    assert set(values) >= {"q_j uniform", "posterior of j", "first-round omega", "gamma mean"}
    for key, value in values.items():
        assert value <= 1e-9, key


def test_skewed_identities_on_random_instances():
    rng = np.random.default_rng(0)
    for k in range(6):
        base, fam = random_instance(rng, 2, 2, prefix=bool(k % 2))
        model = SkewedModel(base, fam)
        assert model.u_w >= 0.1
        for key, value in skewed_identities(model).items():
            assert value <= 1e-9, key


def test_full_w_degeneracy():
    base, fam = _termination_instance([[0.4, 0.7], [0.5, 0.2]])
    assert degeneracy_deviation(base, fam) <= 1e-9


def test_ledger():
    base, fam = _termination_instance()
    model = SkewedModel(base, fam)
    led = model.ledger(())
    assert led.round == 0
    assert led.omega == approx((1, 1))
    assert led.g_prev == frozenset({0, 1})
    assert led.s_set <= led.j_set

    first = model.ledger(((0, 0),))
    assert first.round == 1
    assert sum(first.omega_prime) > 0

    with raises(ValueError):
        model.ledger(((0, 0), (0, 0)))
    with raises(PrefixOutsideSupport):
        model.ledger(((2, 2),))

    ext = model.ext_ledger(((0, 0), (0, 0)))
    assert ext.U_seq.shape == (2, 2)
    with raises(PrefixOutsideSupport):
        model.ext_ledger(((0, 1), (0, 0)))


def test_divergence_budget_and_bad_t():
    base, fam = _termination_instance()
    model = SkewedModel(base, fam)
    terms, d = model.divergence_budget()
    assert len(terms) == 2
    assert all(t >= 0 for t in terms)
    assert d == approx(sum(terms))
    assert d > 0

    probs = [model.bad_t_probability(t) for t in (2, 4, 16)]
    assert all(0 <= p <= 1 for p in probs)
    assert probs[0] >= probs[1] >= probs[2]
    with raises(ValueError):
        model.bad_t_probability(0)


def test_event_flags():
    base, fam = _termination_instance()
    model = SkewedModel(base, fam)
    rng = np.random.default_rng(1)
    x = ((1, 1), (1, 1))
    flags = model.event_flags(x, rng)
    assert flags.B == (None, None)
    assert len(flags.A) == len(flags.C) == 2
    for a, tb, c in zip(flags.A, flags.tB, flags.C):
        assert c == (a and tb)
    flags = model.event_flags(x, rng, j=0)
    assert all(isinstance(b, bool) for b in flags.B)
    assert 0 <= model.b_probability(()) <= 1


def test_fcut_certificate():
    base, fam = _termination_instance()
    model = SkewedModel(base, fam)
    cert = model.fcut_certificate()
    assert len(cert.terms) == 2
    assert cert.cert.alpha == approx(1 - cert.ideal_c, abs=1e-9)
    assert cert.cert.div <= cert.bound + 1e-9
    # transporting to the coin matrices keeps the masked mass
    assert cert.projected.alpha == approx(cert.cert.alpha, abs=1e-9)
    assert cert.projected.div <= cert.cert.div + 1e-9


def test_exact_sampler_matches_the_skewed_pmf():
    base, fam = _termination_instance()
    model = SkewedModel(base, fam)
    rng = np.random.default_rng(2)
    samples = [model.sample(rng) for _ in range(20000)]
    assert total_variation(empirical_pmf(samples), model.skewed) < 0.04


def test_rejection_sampler_matches_the_skewed_pmf():
    base, fam = _termination_instance()
    model = SkewedModel(base, fam)
    rng = np.random.default_rng(3)
    samples = [skewed_sample(base, fam, rng, method="rejection") for _ in range(3000)]
    assert total_variation(empirical_pmf(samples), model.skewed) < 0.08
    with raises(ValueError):
        skewed_sample(base, fam, rng, method="magic")


def test_b_probability_identity():
    # Q[B_i | x[:i], B_<i]
    #   = sum over j in S_i of Q(j | x[:i], B_<i) U(x[i][j] in X_ij | x[:i])
    instances = [_termination_instance(), random_instance(np.random.default_rng(4), 2, 2)]
    for base, fam in instances:
        model = SkewedModel(base, fam)
        n = base.n
        post = {}
        for (j, x), q in model.skewed.items():
            for i in range(base.m):
                post.setdefault(x[:i], np.zeros(n))[j] += q
        for prefix, weights in post.items():
            led = model.ledger(prefix)
            w = np.array([weights[j] if j in led.g_prev else 0.0 for j in range(n)])
            if w.sum() <= 0:
                continue
            w = w / w.sum()
            expected = sum(w[j] * led.u_x[j] for j in led.s_set)
            assert model.b_probability(prefix) == approx(expected, abs=1e-9)


def test_function_wrappers_use_the_cached_model():
    base, fam = _termination_instance()
    model = SkewedModel(base, fam)
    assert total_variation(skewed_pmf_exact(base, fam), model.skewed) < 1e-12
    led = weight_ledger(base, fam, ())
    assert (led.round, led.u_x, led.s_set) == (0, model.ledger(()).u_x, model.ledger(()).s_set)
    assert build_fcut_certificate(base, fam).bound == approx(model.fcut_certificate().bound)

    if led.s_set:
        row, flags = (0, 0), (True, True)
        assert gamma_eval(base, fam, (), row, flags) == approx(led.gamma(row, flags))
