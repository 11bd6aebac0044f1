from amp_lab.martingale import (
    GENERATORS,
    LEMMA_CONSTANT,
    PROP_CONSTANT,
    combine,
    constant,
    empirical_exceedance,
    estimate_from_summary,
    lemma_bound,
    make_generator,
    martingale_self_test,
    multiplicative,
    prop_bound,
    ratio,
    simulate_block,
    summarize,
    survival,
)

import numpy as np
from pytest import raises, approx


def test_bounds():
    assert lemma_bound(0.01, 0.1) == approx(LEMMA_CONSTANT)
    assert prop_bound(0.01, 0.1) == approx(PROP_CONSTANT)
    assert lemma_bound(1e-4, 0.25) == approx(23 * 1e-4 * 16)
    # Vacuous values are not clamped
    assert lemma_bound(1, 0.25) > 1

    for lam in [0, -0.1, 0.3]:
        with raises(ValueError):
            lemma_bound(0.1, lam)
        with raises(ValueError):
            prop_bound(0.1, lam)


def test_simulate_block_shapes():
    rng = np.random.default_rng(0)
    block = simulate_block(multiplicative(n=7), 11, rng)
    assert block["y"].shape == (11, 8)
    for key in "rzt":
        assert block[key].shape == (11, 7)
    assert np.all(block["y"][:, 0] == 1)
    assert np.all(block["t"] == 0)
    assert np.allclose(block["y"][:, 1:], block["y"][:, :-1] * (1 + block["r"]))

    block = simulate_block(constant(n=5), 3, rng)
    assert np.all(block["y"] == 1)


def test_survival_paths():
    rng = np.random.default_rng(1)
    m = 4
    y = simulate_block(survival(m), 1000, rng)["y"]
    assert y.shape == (1000, m + 1)
    for row in y:
        alive = row > 0
        # Once halted, stays halted
        k = int(alive.sum())
        assert np.all(alive[:k])
        assert np.allclose(row[:k], (m / (m - 1)) ** np.arange(k))
    with raises(ValueError):
        survival(1)


def test_ratio_family_is_two_factor():
    gen = ratio()
    assert gen.two_factor
    rng = np.random.default_rng(2)
    y = np.full(4, 1.5)
    z, t = gen.step(y, rng)
    assert np.allclose(t, 0.05)
    assert np.allclose(np.abs(z - t), 0.04)


def test_summarize_and_combine():
    block = {
        "y": np.array([[1, 1.1, 1.3], [1, 0.95, 1.0]]),
        "r": np.array([[0.1, 0.2], [-0.05, 0.05]]),
        "z": np.array([[0.1, 0.2], [-0.05, 0.05]]),
        "t": np.zeros((2, 2)),
    }
    s = summarize(block, 0.25)
    assert s["trials"] == 2
    assert s["exceed"] == 1
    assert s["mu"] == approx(0.01 + 0.04 + 0.0025 + 0.0025)
    assert s["esum"] == approx(s["mu"])

    total = combine([s, s])
    assert total["trials"] == 4
    assert total["exceed"] == 2
    assert total["mu"] == approx(2 * s["mu"])

    est = estimate_from_summary(total, 0.25)
    assert est.p_hat == 0.5
    assert est.mu_hat == approx(s["mu"] / 2)
    assert est.ci[0] < 0.5 < est.ci[1]


def test_empirical_exceedance():
    rng = np.random.default_rng(3)
    gen = multiplicative(n=10, step=0.01)
    with raises(ValueError):
        empirical_exceedance(gen, 0.25, 999, rng)
    with raises(ValueError):
        empirical_exceedance(gen, 0.5, 1000, rng)

    est = empirical_exceedance(gen, 0.25, 5000, rng, block=2000)
    assert est.trials == 5000
    # Ten steps of 1% never stray by 25%
    assert est.p_hat == 0
    assert est.mu_hat == approx(10 * 1e-4)
    p_hat, bound, slack = est.lemma_check()
    assert bound < 1
    assert p_hat <= bound + slack


def test_lemma_holds_with_larger_steps():
    rng = np.random.default_rng(4)
    gen = multiplicative(n=50, step=0.01)
    est = empirical_exceedance(gen, 0.1, 20000, rng)
    p_hat, bound, slack = est.lemma_check()
    assert 0 < est.mu_hat
    assert p_hat <= bound + slack

    est = empirical_exceedance(ratio(n=20, cap=0.01, spread=0.01), 0.1, 5000, rng)
    p_hat, bound, slack = est.prop_check()
    assert p_hat <= bound + slack


def test_self_test():
    rng = np.random.default_rng(5)
    assert martingale_self_test(constant(), rng, histories=5, repeats=100) == 0
    for name in GENERATORS:
        gen = make_generator(name)
        assert martingale_self_test(gen, rng, histories=20, repeats=5000) < 5


def test_make_generator():
    gen = make_generator("survival", m=10)
    assert gen.name == "survival-10"
    assert gen.n == 10
    assert make_generator("multiplicative", n=3).n == 3
    with raises(ValueError):
        make_generator("nope")
