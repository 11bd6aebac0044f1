"""
Exact probability mass functions over finite outcome spaces.

Outcomes are opaque hashable values. They are kept in a canonical order
(see `canonical_key`) so that iteration, sampling and reports do not
depend on insertion order or on the platform.
"""

import itertools
import numbers
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import ZeroProbabilityEvent, CoordinateError


RngStream = np.random.Generator

# Tolerance for weights that should sum to one
_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Sentinel:
    """A value from the reserved namespace that no user universe contains.
    The payload is a tag describing where the value came from.
    """

    payload: object

    def __repr__(self):
        return f"Sentinel({self.payload!r})"


def canonical_key(x):
    """Sort key giving a total order over mixed outcome types:
    None < numbers < strings < tuples < sentinels < anything else.
    """
    if x is None:
        return (0,)
    elif isinstance(x, numbers.Real):
        return (1, float(x))
    elif isinstance(x, str):
        return (2, x)
    elif isinstance(x, tuple):
        return (3, tuple(canonical_key(v) for v in x))
    elif isinstance(x, Sentinel):
        return (4, canonical_key(x.payload))
    else:
        return (5, type(x).__name__, repr(x))


@dataclass(frozen=True)
class EventPredicate:
    """An event, given as a total boolean function on outcomes.

    * `predicate` (callable): maps an outcome to a bool.
    * `label` (`str`): a human readable name, used in reports and errors.
    """

    predicate: object
    label: str = ""

    def __call__(self, x):
        return bool(self.predicate(x))

    def __and__(self, other):
        other = as_event(other)
        return EventPredicate(
            lambda x: self(x) and other(x), f"({self.label} & {other.label})"
        )

    def __or__(self, other):
        other = as_event(other)
        return EventPredicate(
            lambda x: self(x) or other(x), f"({self.label} | {other.label})"
        )

    def __invert__(self):
        return EventPredicate(lambda x: not self(x), f"~{self.label}")

    @classmethod
    def full(cls):
        """The event that always holds."""
        return cls(lambda x: True, "full")


def as_event(e):
    """Wrap a plain callable into an EventPredicate."""
    if isinstance(e, EventPredicate):
        return e
    elif callable(e):
        return EventPredicate(e, getattr(e, "__name__", "event"))
    else:
        raise TypeError("Expected an EventPredicate or a callable.")


@dataclass(frozen=True)
class JointIndex:
    """Coordinates inside tuple-valued outcomes.

    * `positions` (tuple of `int`): the coordinates to address, in order.
    * `names` (tuple of `str`): optional names, e.g. `("row 0", "row 1")`.

    A single position addresses a scalar; several positions a tuple.
    """

    positions: tuple
    names: tuple = ()

    def __post_init__(self):
        if isinstance(self.positions, int):
            object.__setattr__(self, "positions", (self.positions,))
        object.__setattr__(self, "positions", tuple(self.positions))
        if not self.positions:
            raise CoordinateError("A JointIndex needs at least one position.")
        if self.names and len(self.names) != len(self.positions):
            raise ValueError("JointIndex names must match the positions.")

    def check(self, arity):
        """Raise CoordinateError if a position is outside `range(arity)`."""
        for pos in self.positions:
            if not isinstance(pos, int) or not (0 <= pos < arity):
                raise CoordinateError(
                    f"Coordinate {pos!r} outside outcomes of arity {arity}."
                )

    def project(self, x):
        if len(self.positions) == 1:
            return x[self.positions[0]]
        return tuple(x[pos] for pos in self.positions)


class FinitePmf:
    """A probability mass function over a finite set of outcomes.

    * `outcomes` (sequence): distinct hashable outcome values.
    * `probs` (sequence of `float`): nonnegative weights summing to one.

    Outcomes with zero probability may be listed; they are part of the
    declared universe but not of the support.
    """

    def __init__(self, outcomes, probs):
        outcomes = list(outcomes)
        probs = np.asarray(probs, dtype=float).ravel()
        if len(outcomes) != len(probs):
            raise ValueError("Expected as many probabilities as outcomes.")
        if not outcomes:
            raise ValueError("A pmf needs at least one outcome.")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("Probabilities must be finite and nonnegative.")
        total = probs.sum()
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"Probabilities sum to {total}, expected 1.")
        order = sorted(range(len(outcomes)), key=lambda k: canonical_key(outcomes[k]))
        self._outcomes = tuple(outcomes[k] for k in order)
        self._index = {x: k for k, x in enumerate(self._outcomes)}
        if len(self._index) != len(self._outcomes):
            raise ValueError("Outcomes must be pairwise distinct.")
        self._probs = probs[order] / total
        self._probs.setflags(write=False)
        self._cdf = None

    def __repr__(self):
        items = ", ".join(f"{x!r}: {p:.4g}" for x, p in self.items())
        return f"<FinitePmf {{{items}}}>"

    def __len__(self):
        return len(self._outcomes)

    @property
    def outcomes(self) -> tuple:
        """The declared outcomes, in canonical order."""
        return self._outcomes

    @property
    def probs(self) -> np.ndarray:
        """The probabilities, aligned with `outcomes` (read-only)."""
        return self._probs

    @property
    def support(self) -> tuple:
        """The outcomes with positive probability."""
        return tuple(x for x, p in zip(self._outcomes, self._probs) if p > 0)

    def items(self):
        """Iterate over (outcome, probability) pairs of the support."""
        for x, p in zip(self._outcomes, self._probs):
            if p > 0:
                yield x, float(p)

    def prob(self, x):
        """The probability of a single outcome (zero if undeclared)."""
        k = self._index.get(x)
        return 0.0 if k is None else float(self._probs[k])

    def prob_of(self, event):
        """The probability of an event."""
        event = as_event(event)
        return float(sum(p for x, p in self.items() if event(x)))

    def expect(self, fn):
        """The expectation of a real function of the outcome."""
        return float(sum(p * fn(x) for x, p in self.items()))

    def as_dict(self):
        """The support as an {outcome: probability} dict."""
        return dict(self.items())

    def map(self, kernel):
        """Push this pmf through a randomized function, given as a
        callable mapping each outcome to a FinitePmf over images.
        """
        entries = []
        for x, p in self.items():
            image = kernel(x)
            entries.extend((y, p * q) for y, q in image.items())
        return make_pmf(entries)

    def map_values(self, fn):
        """Push this pmf through a deterministic function."""
        return make_pmf((fn(x), p) for x, p in self.items())

    def sample(self, rng):
        """Draw one outcome using the given `numpy.random.Generator`."""
        if self._cdf is None:
            self._cdf = np.cumsum(self._probs)
            self._last = int(np.flatnonzero(self._probs > 0)[-1])
        k = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return self._outcomes[min(k, self._last)]


def make_pmf(entries):
    """Build a normalized pmf from (outcome, weight) pairs. Duplicate
    outcomes are merged by summing their weights.
    """
    weights = {}
    for x, w in entries:
        w = float(w)
        if w < 0 or not np.isfinite(w):
            raise ValueError(f"Weight for {x!r} must be finite and nonnegative.")
        weights[x] = weights.get(x, 0.0) + w
    total = sum(weights.values())
    if total <= 0:
        raise ValueError("At least one weight must be positive.")
    outcomes = list(weights)
    probs = np.array([weights[x] for x in outcomes]) / total
    return FinitePmf(outcomes, probs)


def point_mass(x):
    """The pmf putting all mass on `x`."""
    return FinitePmf([x], [1.0])


def uniform(outcomes):
    """The uniform pmf over the given distinct outcomes."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("Cannot make a uniform pmf over no outcomes.")
    return FinitePmf(outcomes, np.full(len(outcomes), 1.0 / len(outcomes)))


def bernoulli(p):
    """Bern(p) over the outcomes 0 and 1."""
    if not 0 <= p <= 1:
        raise ValueError("Expected p to be in [0, 1].")
    return FinitePmf([0, 1], [1.0 - p, p])


def condition(P, E):
    """Restrict P to the event E and renormalize."""
    E = as_event(E)
    entries = [(x, p) for x, p in P.items() if E(x)]
    if not entries:
        raise ZeroProbabilityEvent(f"Event {E.label!r} has probability zero.")
    return make_pmf(entries)


def product(parts):
    """The independent joint pmf over tuples of component outcomes."""
    parts = list(parts)
    if not parts:
        raise ValueError("Expected at least one pmf.")
    outcomes = list(itertools.product(*[p.outcomes for p in parts]))
    probs = reduce(np.multiply.outer, [p.probs for p in parts]).ravel()
    return FinitePmf(outcomes, probs)


def marginalize(P, keep):
    """Sum out all coordinates of tuple outcomes except those in `keep`
    (a JointIndex, a position or a sequence of positions).
    """
    if not isinstance(keep, JointIndex):
        keep = JointIndex(keep)
    for x in P.outcomes:
        if not isinstance(x, tuple):
            raise CoordinateError("Marginalizing requires tuple outcomes.")
        keep.check(len(x))
    return make_pmf((keep.project(x), p) for x, p in P.items())


def pushforward(P, kernel):
    """Alias of `P.map(kernel)`."""
    return P.map(kernel)


def sample_pmf(P, rng):
    """Draw one outcome of P."""
    return P.sample(rng)


def total_variation(P, Q):
    """Half the L1 distance over the union of both universes."""
    universe = set(P.outcomes) | set(Q.outcomes)
    return 0.5 * float(sum(abs(P.prob(x) - Q.prob(x)) for x in universe))


def empirical_pmf(samples):
    """The empirical pmf of a sequence of hashable samples."""
    return make_pmf((x, 1.0) for x in samples)
