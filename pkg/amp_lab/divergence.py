"""
KL-divergence of finite pmfs and smooth-KL certificates.

All logarithms are natural. Randomized functions are given extensionally,
as callables mapping an outcome to a FinitePmf over images.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr

from .dist_core import Sentinel, as_event, condition, make_pmf, point_mass
from .errors import SupportViolation, InternalNamespaceError


logger = logging.getLogger(__name__)


# An extended real: a nonnegative float, where math.inf means +infinity
ExtReal = float


def deterministic(fn):
    """Lift a function to a kernel returning point masses."""
    return lambda x: point_mass(fn(x))


@dataclass(frozen=True)
class CutPair:
    """A pair of randomized functions (F_P, F_Q) that may map an outcome
    onto itself or onto values outside the universe.

    * `f_p` (callable): outcome -> FinitePmf, applied to P.
    * `f_q` (callable): outcome -> FinitePmf, applied to Q.
    """

    f_p: object
    f_q: object

    @classmethod
    def identity(cls):
        """The pair that leaves every outcome in place."""
        return cls(point_mass, point_mass)


@dataclass(frozen=True)
class SmoothCert:
    """Witness that the alpha-smooth divergence is at most `div`.

    * `alpha` (`float`): the mass of P moved by F_P, in [0, 1].
    * `div` (`float`): D(F_P(P) || F_Q(Q)), possibly `math.inf`.
    """

    alpha: float
    div: float

    def __post_init__(self):
        alpha = float(self.alpha)
        if not -1e-12 <= alpha <= 1 + 1e-12:
            raise ValueError(f"alpha must be in [0, 1], got {alpha}")
        if not self.div >= 0:
            raise ValueError(f"div must be nonnegative, got {self.div}")
        object.__setattr__(self, "alpha", min(max(alpha, 0.0), 1.0))


def kl(P, Q):
    """D(P || Q), with 0 log 0/0 = 0, and +inf if P puts mass where Q does not."""
    support = [(x, p) for x, p in P.items()]
    p = np.array([w for _, w in support])
    q = np.array([Q.prob(x) for x, _ in support])
    if np.any(q <= 0):
        return math.inf
    return max(0.0, float(np.sum(rel_entr(p, q))))


def _split_pairs(PXY):
    marg = {}
    cond = {}
    for (x, y), p in PXY.items():
        marg[x] = marg.get(x, 0.0) + p
        cond.setdefault(x, []).append((y, p))
    return marg, cond


def conditional_kl(PXY, QXY):
    """E_{x ~ P_X} D(P_{Y|X=x} || Q_{Y|X=x}) for pmfs over pairs (x, y)."""
    p_marg, p_cond = _split_pairs(PXY)
    q_marg, q_cond = _split_pairs(QXY)
    total = 0.0
    for x, px in p_marg.items():
        if q_marg.get(x, 0.0) <= 0:
            return math.inf
        term = kl(make_pmf(p_cond[x]), make_pmf(q_cond[x]))
        if term == math.inf:
            return math.inf
        total += px * term
    return total


def bern_kl(p, q):
    """D(Bern(p) || Bern(q))."""
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise ValueError("Expected p and q to be in [0, 1].")
    value = float(rel_entr(p, q) + rel_entr(1 - p, 1 - q))
    return max(0.0, value)


def bern_deviation_floor(p, delta, upper=False):
    """Lower bound on bern_kl for a relative deviation `delta` from p:
    delta**2 * p / 2 below p, min(delta, delta**2) * p / 4 above p.
    """
    if not 0 < p <= 1:
        raise ValueError("Expected p to be in (0, 1].")
    if upper:
        if not 0 <= delta <= 1 / p - 1:
            raise ValueError("Expected delta to be in [0, 1/p - 1].")
        return min(delta, delta ** 2) * p / 4
    if not 0 <= delta <= 1:
        raise ValueError("Expected delta to be in [0, 1].")
    return delta ** 2 * p / 2


def conditional_divergence_bound(P, W):
    """Return (D(P|W || P), log(1/P[W]))."""
    pw = P.prob_of(W)
    return kl(condition(P, W), P), math.log(1 / pw)


def restricted_divergence_bound(P, Q, S):
    """Return (D(P|S || Q), (D(P || Q) + 1/e + 1) / P(S))."""
    ps = P.prob_of(S)
    return kl(condition(P, S), Q), (kl(P, Q) + 1 / math.e + 1) / ps


def smooth_cert_eval(P, Q, pair):
    """Evaluate a cut pair on (P, Q) by enumeration, returning a SmoothCert.

    The universe is the union of the outcomes declared by P and Q. Every
    image of an outcome x must be x itself or lie outside the universe.
    """
    universe = set(P.outcomes) | set(Q.outcomes)
    for name, f in (("f_p", pair.f_p), ("f_q", pair.f_q)):
        for x in universe:
            for y in f(x).support:
                if y != x and y in universe:
                    raise SupportViolation(
                        f"{name} maps {x!r} onto {y!r}, another outcome of the universe"
                    )
    alpha = sum(p * (1.0 - pair.f_p(x).prob(x)) for x, p in P.items())
    div = kl(P.map(pair.f_p), Q.map(pair.f_q))
    return SmoothCert(alpha, div)


def small_event_bound(cert, P, E):
    """The bound 2 * max(alpha + P[E], 4 * div) on Q[E]."""
    if cert.div == math.inf:
        return math.inf
    return 2 * max(cert.alpha + P.prob_of(as_event(E)), 4 * cert.div)


def _transport_kernel(T, f_t, H):
    # T_{X|H(X)=y} for every reachable y, as weights over x
    posterior = {}
    for x, p in T.items():
        for y, h in H(x).items():
            posterior.setdefault(y, []).append((x, p * h))
    table = {}
    for y, entries in posterior.items():
        total = sum(w for _, w in entries)
        out = []
        for x, w in entries:
            for z, q in f_t(x).items():
                image = y if z == x else Sentinel(("transport", z))
                out.append((image, w / total * q))
        table[y] = make_pmf(out)

    def kernel(y):
        pmf = table.get(y)
        return pmf if pmf is not None else point_mass(y)

    return kernel


def smooth_dp_transport(P, Q, pair, H):
    """Move a cut pair for (P, Q) to a cut pair for (H(P), H(Q)).

    `H` is a randomized function (outcome -> FinitePmf). The returned pair
    G_T(y) resamples x from T given H(X) = y, applies F_T, and keeps y when
    F_T left x in place; any other image is tagged into the sentinel space.
    """
    images = set()
    for x in set(P.outcomes) | set(Q.outcomes):
        for y in H(x).support:
            if isinstance(y, Sentinel):
                raise InternalNamespaceError(
                    f"H maps {x!r} into the reserved sentinel space"
                )
            images.add(y)
    logger.debug("Transporting cut pair onto %d images", len(images))
    g_p = _transport_kernel(P, pair.f_p, H)
    g_q = _transport_kernel(Q, pair.f_q, H)
    return CutPair(g_p, g_q)


__all__ = [
    "ExtReal",
    "Sentinel",
    "CutPair",
    "SmoothCert",
    "deterministic",
    "kl",
    "conditional_kl",
    "bern_kl",
    "bern_deviation_floor",
    "conditional_divergence_bound",
    "restricted_divergence_bound",
    "smooth_cert_eval",
    "small_event_bound",
    "smooth_dp_transport",
]
