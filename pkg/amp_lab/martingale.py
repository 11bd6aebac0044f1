"""
Bounds for slowly evolving martingales, and vectorized Monte Carlo
estimation of how often a martingale strays from 1.

A generator produces paths Y_0 = 1, Y_1, ..., Y_n through a Markov step
Y_i = Y_{i-1} (1 + Z_i) / (1 + T_i), where T_i depends on the past only.
Single-factor generators use T_i = 0, so that Z_i = R_i = Y_i / Y_{i-1} - 1.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .concentration import hoeffding_interval


logger = logging.getLogger(__name__)

LEMMA_CONSTANT = 23
PROP_CONSTANT = 150


def _check_lambda(lam):
    if not 0 < lam <= 0.25:
        raise ValueError(f"Expected lambda to be in (0, 1/4], got {lam}")


def lemma_bound(mu, lam):
    """23 mu / lambda^2, bounding Pr[exists i: |Y_i - 1| >= lambda] where
    mu = E[sum min(|R_i|, R_i^2)]. Values above 1 are returned as-is.
    """
    _check_lambda(lam)
    return LEMMA_CONSTANT * mu / lam ** 2


def prop_bound(esum, lam):
    """150 esum / lambda^2, where esum = E[sum min(|Z|, Z^2) + min(|T|, T^2)]."""
    _check_lambda(lam)
    return PROP_CONSTANT * esum / lam ** 2


def _small(v):
    a = np.abs(v)
    return np.minimum(a, a * a)


@dataclass(frozen=True)
class MartingaleGenerator:
    """A family of nonnegative martingales.

    * `name` (`str`): the family label.
    * `n` (`int`): the path length.
    * `step` (callable): `(y_prev, rng) -> (z, t)`, arrays shaped like `y_prev`.
    * `two_factor` (`bool`): whether T is nontrivial.
    """

    name: str
    n: int
    step: object
    two_factor: bool = False


def simulate_block(gen, trials, rng):
    """Simulate `trials` paths; returns a dict with arrays `y` (trials, n+1)
    and `r`, `z`, `t` (trials, n).
    """
    y = np.ones((trials, gen.n + 1))
    r = np.zeros((trials, gen.n))
    z = np.zeros((trials, gen.n))
    t = np.zeros((trials, gen.n))
    for i in range(gen.n):
        prev = y[:, i]
        zi, ti = gen.step(prev, rng)
        y[:, i + 1] = prev * (1 + zi) / (1 + ti)
        alive = prev > 0
        r[:, i] = np.where(alive, (1 + zi) / (1 + ti) - 1, 0.0)
        z[:, i] = np.where(alive, zi, 0.0)
        t[:, i] = np.where(alive, ti, 0.0)
    return {"y": y, "r": r, "z": z, "t": t}


def summarize(block, lam):
    """Reduce a simulated block to the sums needed for estimates."""
    exceed = np.any(np.abs(block["y"][:, 1:] - 1) >= lam, axis=1)
    mu = _small(block["r"]).sum(axis=1)
    esum = (_small(block["z"]) + _small(block["t"])).sum(axis=1)
    return {
        "trials": int(len(exceed)),
        "exceed": int(exceed.sum()),
        "mu": float(mu.sum()),
        "mu2": float((mu * mu).sum()),
        "esum": float(esum.sum()),
        "esum2": float((esum * esum).sum()),
    }


def combine(summaries):
    """Add up block summaries."""
    total = {}
    for s in summaries:
        for key, value in s.items():
            total[key] = total.get(key, 0) + value
    return total


@dataclass(frozen=True)
class ExceedanceEstimate:
    """Monte Carlo estimate of the exceedance probability and of the
    expected sums that enter the two bounds.
    """

    lam: float
    trials: int
    p_hat: float
    ci: tuple
    mu_hat: float
    mu_se: float
    esum_hat: float
    esum_se: float

    @property
    def p_se(self) -> float:
        """Standard error of p_hat."""
        return math.sqrt(max(self.p_hat * (1 - self.p_hat), 0.0) / self.trials)

    def lemma_check(self):
        """Return (p_hat, bound, slack): the check passes if
        p_hat <= bound + slack, with slack three combined standard errors.
        """
        bound = lemma_bound(self.mu_hat, self.lam)
        coef = LEMMA_CONSTANT / self.lam ** 2
        slack = 3 * math.hypot(self.p_se, coef * self.mu_se)
        return self.p_hat, bound, slack

    def prop_check(self):
        """As `lemma_check`, for the two-factor bound."""
        bound = prop_bound(self.esum_hat, self.lam)
        coef = PROP_CONSTANT / self.lam ** 2
        slack = 3 * math.hypot(self.p_se, coef * self.esum_se)
        return self.p_hat, bound, slack


def estimate_from_summary(total, lam):
    """Turn combined block summaries into an ExceedanceEstimate."""
    k = total["trials"]
    p_hat = total["exceed"] / k
    mu_hat = total["mu"] / k
    esum_hat = total["esum"] / k
    mu_var = max(total["mu2"] / k - mu_hat ** 2, 0.0)
    esum_var = max(total["esum2"] / k - esum_hat ** 2, 0.0)
    return ExceedanceEstimate(
        lam=lam,
        trials=k,
        p_hat=p_hat,
        ci=hoeffding_interval(p_hat, k),
        mu_hat=mu_hat,
        mu_se=math.sqrt(mu_var / k),
        esum_hat=esum_hat,
        esum_se=math.sqrt(esum_var / k),
    )


def empirical_exceedance(gen, lam, trials, rng, *, block=10_000):
    """Estimate Pr[exists i: |Y_i - 1| >= lam] and mu with Hoeffding CIs.

    Returns an ExceedanceEstimate; `p_hat`, `mu_hat` and `ci` are the
    headline numbers.
    """
    _check_lambda(lam)
    if trials < 1000:
        raise ValueError("Expected at least 1000 trials.")
    summaries = []
    done = 0
    while done < trials:
        size = min(block, trials - done)
        summaries.append(summarize(simulate_block(gen, size, rng), lam))
        done += size
        logger.debug("%s: simulated %d / %d paths", gen.name, done, trials)
    return estimate_from_summary(combine(summaries), lam)


def martingale_self_test(gen, rng, histories=50, repeats=20_000):
    """Check E[Y_i | Y_{i-1}] = Y_{i-1} at states visited by the generator.

    Returns the largest deviation in units of its standard error.
    """
    paths = simulate_block(gen, histories, rng)["y"]
    cols = rng.integers(0, gen.n, size=histories)
    worst = 0.0
    for y_prev in paths[np.arange(histories), cols]:
        prev = np.full(repeats, y_prev)
        z, t = gen.step(prev, rng)
        nxt = prev * (1 + z) / (1 + t)
        se = nxt.std() / math.sqrt(repeats)
        dev = abs(nxt.mean() - y_prev)
        if dev > 0:
            worst = max(worst, dev / max(se, 1e-12))
    return worst


# %% Generator families


def _zeros(y):
    return np.zeros_like(y)


def constant(n=20):
    """Y_i = 1 for all i."""
    return MartingaleGenerator("constant", n, lambda y, rng: (_zeros(y), _zeros(y)))


def multiplicative(n=50, step=0.05):
    """Y_i = Y_{i-1} (1 + R_i) with R_i = +-step uniformly."""

    def fn(y, rng):
        return step * rng.choice([-1.0, 1.0], size=y.shape), _zeros(y)

    return MartingaleGenerator("multiplicative", n, fn)


def survival(m=4, n=None):
    """The random-termination survival weight: R_i = 1/(m-1) with
    probability 1 - 1/m and R_i = -1 with probability 1/m; 0 stays 0.
    """
    if m < 2:
        raise ValueError("Expected m >= 2.")

    def fn(y, rng):
        halt = rng.random(y.shape) < 1 / m
        return np.where(halt, -1.0, 1 / (m - 1)), _zeros(y)

    return MartingaleGenerator(f"survival-{m}", n or m, fn)


def uniform_ratio(n=50, width=0.05):
    """R_i uniform on [-width, width]."""

    def fn(y, rng):
        return rng.uniform(-width, width, size=y.shape), _zeros(y)

    return MartingaleGenerator("uniform-ratio", n, fn)


def stopped(n=50, step=0.05, stop=0.2):
    """A +-step walk frozen once |Y - 1| >= stop."""

    def fn(y, rng):
        live = np.abs(y - 1) < stop
        return np.where(live, step * rng.choice([-1.0, 1.0], size=y.shape), 0.0), _zeros(y)

    return MartingaleGenerator("stopped", n, fn)


def ratio(n=50, cap=0.05, spread=0.04):
    """Two-factor family: T_i = clip((Y_{i-1} - 1) / 2, +-cap) is known in
    advance and Z_i = T_i +- spread, so that E[(1 + Z_i) / (1 + T_i)] = 1.
    """

    def fn(y, rng):
        t = np.clip(0.5 * (y - 1), -cap, cap)
        return t + spread * rng.choice([-1.0, 1.0], size=y.shape), t

    return MartingaleGenerator("ratio", n, fn, two_factor=True)


GENERATORS = {
    "constant": constant,
    "multiplicative": multiplicative,
    "survival": survival,
    "uniform-ratio": uniform_ratio,
    "stopped": stopped,
    "ratio": ratio,
}


def make_generator(name, **params):
    """Build a generator from the registry by name."""
    try:
        factory = GENERATORS[name]
    except KeyError:
        raise ValueError(f"Unknown martingale family {name!r}") from None
    return factory(**params)
