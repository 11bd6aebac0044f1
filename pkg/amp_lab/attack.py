"""
Provers for a single random-terminating verifier that are built from a
prover for its parallel repetition.

The attacking prover embeds the real verifier as copy `j` of the repeated
protocol. In every round it resamples the coins of the other copies,
together with a simulated continuation for copy `j`, until the oracle
prover makes every copy accept, and then forwards the oracle's reply to
copy `j`. The law of (j, coin matrix) this induces is the skewed
distribution of the winning model, which `winning_model` builds.
"""

import logging
from dataclasses import dataclass, field

from .dist_core import EventPredicate
from .errors import CapExceeded
from .protocol import (
    GroupedProver,
    ParallelVerifier,
    Prover,
    RandomTerminatingVerifier,
    SimulatorHandle,
    run_protocol,
)
from .skewed import BaseModel, get_model


logger = logging.getLogger(__name__)

DEFAULT_CAP = 10_000


@dataclass(frozen=True)
class AttackConfig:
    """Configuration of the embedding attack.

    * `n` (`int`): the copies per group of the oracle's protocol.
    * `cap` (`int`): the inner-loop cap per round and group.
    * `groups` (`int`): the number of independent groups l.
    """

    n: int
    cap: int = DEFAULT_CAP
    groups: int = 1

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 1):
            raise ValueError("Expected n to be a positive int.")
        if self.cap < 1:
            raise ValueError("Expected cap >= 1.")
        if self.groups < 1:
            raise ValueError("Expected groups >= 1.")

    @property
    def copies(self) -> int:
        """The total number of copies l * n."""
        return self.n * self.groups


@dataclass
class AttackStats:
    """What one execution of the attack did.

    * `j` (`int`): the embedding index in `range(l * n)`.
    * `iterations` (list): per round, the inner-loop count of each group.
    * `cap_hits` (list): the (round, group) pairs whose loop hit the cap.
    * `rows` (list): per round, the accepted coin row of every copy, with
      `None` at position `j`.
    """

    j: int = None
    iterations: list = field(default_factory=list)
    cap_hits: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def capped(self) -> bool:
        """Whether some inner loop gave up."""
        return bool(self.cap_hits)

    @property
    def total_iterations(self) -> int:
        """The inner-loop count summed over rounds and groups."""
        return sum(sum(per_round) for per_round in self.iterations)

    def matrix(self, real_coins, rounds=None):
        """The coin matrix of the execution: column `j` from `real_coins`,
        the others from the accepted rows. `rounds` limits the rows.
        """
        rounds = len(self.rows) if rounds is None else rounds
        return tuple(
            tuple(real_coins[r] if c == self.j else v for c, v in enumerate(self.rows[r]))
            for r in range(rounds)
        )


class EmbedAttackProver(Prover):
    """The attacking prover over l independent n-fold oracle provers.
    Create it with `embed_attack` or `grouped_embed_attack`.
    """

    def __init__(self, groups, sim, cfg):
        if not isinstance(sim, SimulatorHandle):
            raise TypeError("Expected a SimulatorHandle.")
        self._groups = tuple(groups)
        if len(self._groups) != cfg.groups:
            raise ValueError(f"Expected {cfg.groups} oracle groups, got {len(self._groups)}.")
        self._sim = sim
        self._cfg = cfg
        self._par = ParallelVerifier(sim.verifier, cfg.n)
        self.stats = AttackStats()

    @property
    def config(self) -> AttackConfig:
        """The attack configuration."""
        return self._cfg

    def reset(self, rng):
        self._rng = rng
        self._messages = []
        self._fixed = []
        self._given_up = False
        self.stats = AttackStats(j=int(rng.integers(self._cfg.copies)))

    def _fresh(self, i, c_skip=None):
        # one candidate for the rows >= i of every copy of a group
        v = self._sim.verifier
        rows = []
        for r in range(i, v.coin_rows):
            rows.append(
                tuple(
                    None if c == c_skip else v.sample_coins(r, self._rng)
                    for c in range(self._cfg.n)
                )
            )
        return rows

    def _group_coins(self, q, candidate):
        n = self._cfg.n
        fixed = [row[q * n : (q + 1) * n] for row in self._fixed]
        return tuple(fixed) + tuple(candidate)

    def _embedded_round(self, q, i):
        par = self._par
        local = self.stats.j % self._cfg.n
        for k in range(1, self._cfg.cap + 1):
            coins = self._group_coins(q, self._fresh(i, c_skip=local))
            accepted, replies = self._sim.emulate(
                par, self._groups[q], coins, local, i, self._messages
            )
            if accepted:
                return k, coins[i], replies[i][local]
        raise CapExceeded(i, self._cfg.cap)

    def _other_round(self, q, i):
        par = self._par
        for k in range(1, self._cfg.cap + 1):
            coins = self._group_coins(q, self._fresh(i))
            if run_protocol(par, self._groups[q], None, coins=coins).accepted:
                return k, coins[i]
        raise CapExceeded(i, self._cfg.cap)

    def reply(self, i, message):
        self._messages.append(message)
        if self._given_up:
            return None
        n = self._cfg.n
        q_star = self.stats.j // n
        counts = []
        row = []
        answer = None
        for q in range(self._cfg.groups):
            try:
                if q == q_star:
                    k, part, answer = self._embedded_round(q, i)
                else:
                    k, part = self._other_round(q, i)
            except CapExceeded as err:
                logger.warning("Attack gave up: %s (group %d)", err, q)
                self.stats.cap_hits.append((i, q))
                self.stats.iterations.append(tuple(counts) + (self._cfg.cap,))
                self._given_up = True
                return None
            counts.append(k)
            row.extend(part)
        self.stats.iterations.append(tuple(counts))
        self._fixed.append(tuple(row))
        self.stats.rows.append(tuple(row))
        return answer


def embed_attack(oracle, sim, cfg):
    """The rejection-continuation prover for one copy of the verifier of
    `sim`, using the deterministic n-fold prover `oracle`.
    """
    if cfg.groups != 1:
        raise ValueError("embed_attack takes a single group; use grouped_embed_attack.")
    return EmbedAttackProver([oracle], sim, cfg)


def grouped_embed_attack(oracle, sim, cfg):
    """The grouped rejection-continuation prover. `oracle` is a
    GroupedProver of `cfg.groups` independent n-fold provers; each group's
    coins are resampled separately until that group accepts.
    """
    if not isinstance(oracle, GroupedProver):
        raise TypeError("Expected a GroupedProver as the oracle.")
    if oracle.group_size != cfg.n or len(oracle.parts) != cfg.groups:
        raise ValueError("The oracle does not match the attack configuration.")
    return EmbedAttackProver(oracle.parts, sim, cfg)


def winning_model(verifier, oracle, n):
    """The coin model of the n-fold repetition of the random-terminating
    `verifier` against the deterministic `oracle`.

    Returns (base, family): the base model has one column per copy with
    the verifier's coin layout and W = "the oracle makes every copy
    accept"; the family holds the termination events.
    """
    if not isinstance(verifier, RandomTerminatingVerifier):
        raise TypeError("Expected a random-terminating verifier.")
    par = ParallelVerifier(verifier, n)

    def wins(x):
        return run_protocol(par, oracle, None, coins=x).accepted

    col = verifier.column_pmf()
    base = BaseModel(verifier.coin_rows, n, (col,) * n, EventPredicate(wins, "oracle wins"))
    return base, verifier.family(n)


def bounding_function_gap(base, fam, event):
    """Return (Q_X[T], Idl_X[T], gamma_needed) for the event T, where
    gamma_needed = max(0, Q_X[T] - 2 Idl_X[T]) is the smallest slack that
    keeps Q_X[T] <= 2 Idl_X[T] + gamma.
    """
    model = get_model(base, fam)
    q = model.skewed_x.prob_of(event)
    p = model.ideal.prob_of(event)
    return q, p, max(0.0, q - 2 * p)


__all__ = [
    "AttackConfig",
    "AttackStats",
    "EmbedAttackProver",
    "embed_attack",
    "grouped_embed_attack",
    "winning_model",
    "bounding_function_gap",
]
