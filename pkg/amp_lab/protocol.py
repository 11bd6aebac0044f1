"""
A small round-based engine for interactive protocols: verifiers, provers,
the random-terminating transform, parallel repetition and soundness
estimation.

Verifier coins are laid out in advance as rows, one symbol per row, so
that the coins of an n-fold repetition form an m x n coin matrix and a
protocol run can be replayed from a fixed matrix.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .concentration import hoeffding_interval
from .dist_core import EventPredicate, Sentinel, point_mass, product, uniform
from .errors import MalformedMessage
from .skewed import DenseFamily, column_event


logger = logging.getLogger(__name__)

# The message a halted verifier sends for the remaining rounds
HALT = Sentinel("halt")


class Verifier:
    """Base class for verifiers.

    A verifier declares `rounds` and `coin_rows`; row `r` of its coins is
    drawn from `coin_pmf(r)`. In round `i` it sends `message(i, coins,
    replies)`, where `replies` holds the prover replies of the rounds
    before `i`. After the reply of round `i` it may halt and accept
    (`halted(i, coins)`); otherwise `verdict(coins, replies)` decides
    after the last round.
    """

    rounds = 1

    @property
    def coin_rows(self) -> int:
        """The number of coin rows."""
        return self.rounds

    def coin_pmf(self, row):
        """The pmf of coin row `row`."""
        return point_mass(None)

    def sample_coins(self, row, rng):
        return self.coin_pmf(row).sample(rng)

    def column_pmf(self):
        """The pmf of the full coin vector (one column of a coin matrix)."""
        return product([self.coin_pmf(r) for r in range(self.coin_rows)])

    def message(self, i, coins, replies):
        raise NotImplementedError()

    def check_reply(self, i, reply):
        """Raise MalformedMessage if `reply` is not a valid round-i reply."""
        pass

    def check_round(self, i, coins, reply):
        self.check_reply(i, reply)

    def halted(self, i, coins):
        return False

    def halt_round(self, coins):
        """The first round after which the verifier halts, or None."""
        for i in range(self.rounds):
            if self.halted(i, coins):
                return i
        return None

    def verdict(self, coins, replies):
        raise NotImplementedError()

    def copy_verdicts(self, coins, replies):
        """Per-copy verdicts, for repeated verifiers."""
        return None


class Prover:
    """Base class for provers. `reset` starts a new execution; `reply`
    answers the verifier message of round `i`.
    """

    def reset(self, rng):
        self._rng = rng

    def reply(self, i, message):
        raise NotImplementedError()


@dataclass(frozen=True)
class Transcript:
    """The record of one protocol execution.

    * `coins` (tuple): the verifier coins, one entry per row.
    * `messages` (tuple): the verifier message of each round played.
    * `replies` (tuple): the prover reply of each round played.
    * `accepted` (`bool`): the verdict.
    * `halted_round` (`int` or `None`): the round after which the verifier
      halted and accepted early.
    * `copy_verdicts` (tuple or `None`): per-copy verdicts of a repeated
      verifier.
    * `diagnostic` (`str`): why a malformed reply led to rejection.
    """

    coins: tuple
    messages: tuple
    replies: tuple
    accepted: bool
    halted_round: int = None
    copy_verdicts: tuple = None
    diagnostic: str = ""


def sample_column(v, rng):
    """Draw all coin rows of `v`."""
    return tuple(v.sample_coins(r, rng) for r in range(v.coin_rows))


def run_protocol(v, p, rng, coins=None, run_to_end=False):
    """Run verifier `v` against prover `p` and return a Transcript.

    With `coins` given, the run replays that coin vector instead of
    drawing fresh coins. With `run_to_end`, an early halt does not stop
    the interaction: the verifier sends HALT for the remaining rounds and
    the replies are not checked.
    """
    if coins is None:
        coins = sample_column(v, rng)
    coins = tuple(coins)
    p.reset(rng)
    messages = []
    replies = []
    halted_round = None
    for i in range(v.rounds):
        if halted_round is None:
            msg = v.message(i, coins, tuple(replies))
        else:
            msg = HALT
        reply = p.reply(i, msg)
        messages.append(msg)
        replies.append(reply)
        if halted_round is not None:
            continue
        try:
            v.check_round(i, coins, reply)
        except MalformedMessage as err:
            logger.debug("Rejecting malformed reply in round %d: %s", i, err)
            return Transcript(
                coins, tuple(messages), tuple(replies), False, diagnostic=str(err)
            )
        if v.halted(i, coins):
            halted_round = i
            if not run_to_end:
                break
    replies = tuple(replies)
    accepted = halted_round is not None or bool(v.verdict(coins, replies))
    copy_verdicts = v.copy_verdicts(coins, replies)
    return Transcript(
        coins, tuple(messages), replies, accepted, halted_round, copy_verdicts
    )


def estimate_soundness(v, p, trials, rng, confidence=0.997):
    """Estimate the acceptance probability of `v` against `p`.

    Returns (p_hat, (ci_low, ci_high)) with a two-sided Hoeffding interval.
    """
    if trials < 1:
        raise ValueError("Expected at least one trial.")
    wins = 0
    for _ in range(trials):
        wins += run_protocol(v, p, rng).accepted
    p_hat = wins / trials
    return p_hat, hoeffding_interval(p_hat, trials, confidence=confidence)


# %% Random termination


class RandomTerminatingVerifier(Verifier):
    """The random-terminating variant of `inner`: at the end of every round
    it halts and accepts with probability 1/m.

    The coins have m + 1 rows. Row `r` is the pair (inner coin of row `r`,
    termination symbol for the end of round `r - 1`); row 0 carries no
    termination symbol and row m no inner coin. A termination symbol is
    uniform on `range(m)` and means "halt" when it is 0.
    """

    def __init__(self, inner):
        if not isinstance(inner, Verifier):
            raise TypeError("Expected a Verifier to wrap.")
        if inner.rounds < 2:
            raise ValueError("Random termination needs at least 2 rounds.")
        if inner.coin_rows != inner.rounds:
            raise ValueError("Expected one inner coin row per round.")
        self._inner = inner
        self.rounds = inner.rounds

    def __repr__(self):
        return f"<RandomTerminatingVerifier of {self._inner!r}>"

    @property
    def inner(self) -> Verifier:
        """The wrapped verifier."""
        return self._inner

    @property
    def coin_rows(self) -> int:
        return self.rounds + 1

    @property
    def delta(self) -> float:
        """The termination probability per round."""
        return 1 / self.rounds

    def coin_pmf(self, row):
        m = self.rounds
        inner = self._inner.coin_pmf(row) if row < m else point_mass(None)
        term = uniform(range(m)) if row >= 1 else point_mass(None)
        return product([inner, term])

    def sample_coins(self, row, rng):
        m = self.rounds
        inner = self._inner.sample_coins(row, rng) if row < m else None
        term = int(rng.integers(m)) if row >= 1 else None
        return inner, term

    def inner_coins(self, coins):
        return tuple(row[0] for row in coins[: self.rounds])

    def message(self, i, coins, replies):
        return self._inner.message(i, self.inner_coins(coins), replies)

    def check_reply(self, i, reply):
        self._inner.check_reply(i, reply)

    def halted(self, i, coins):
        return coins[i + 1][1] == 0 or self._inner.halted(i, self.inner_coins(coins))

    def verdict(self, coins, replies):
        if self.halt_round(coins) is not None:
            return True
        return self._inner.verdict(self.inner_coins(coins), replies)

    def termination_event(self, i, j):
        """The column-j event "halt at the end of round i", on coin matrices."""
        return column_event(j, lambda col: col[i + 1][1] == 0, f"halt {i} (col {j})")

    def family(self, n):
        """The termination events as a DenseFamily over n columns: row i
        holds "halt at the end of round i" and row m the full event.
        """
        m = self.rounds
        rows = [tuple(self.termination_event(i, j) for j in range(n)) for i in range(m)]
        rows.append((EventPredicate.full(),) * n)
        deltas = [(1 / m,) * n for _ in range(m)] + [(1.0,) * n]
        return DenseFamily(tuple(rows), delta_grid=tuple(deltas), prefix=True, name="rt")


def random_terminating_wrap(v):
    """Wrap `v` into its random-terminating variant."""
    return RandomTerminatingVerifier(v)


# %% Parallel repetition


def column_of(coins, c):
    return tuple(row[c] for row in coins)


class ParallelVerifier(Verifier):
    """n independent copies of `inner`. Coin rows and messages are n-tuples,
    replies must be n-tuples, and the verifier accepts iff every copy
    accepts. A copy that halted sends HALT and its replies are ignored.
    """

    def __init__(self, inner, n):
        if not isinstance(inner, Verifier):
            raise TypeError("Expected a Verifier to repeat.")
        if not (isinstance(n, int) and n >= 1):
            raise ValueError("Expected n to be a positive int.")
        self._inner = inner
        self._n = n
        self.rounds = inner.rounds

    def __repr__(self):
        return f"<ParallelVerifier {self._n} x {self._inner!r}>"

    @property
    def inner(self) -> Verifier:
        """The repeated verifier."""
        return self._inner

    @property
    def copies(self) -> int:
        """The number of copies n."""
        return self._n

    @property
    def coin_rows(self) -> int:
        return self._inner.coin_rows

    def coin_pmf(self, row):
        return product([self._inner.coin_pmf(row)] * self._n)

    def sample_coins(self, row, rng):
        return tuple(self._inner.sample_coins(row, rng) for _ in range(self._n))

    def copy_halted_before(self, c, i, coins):
        col = column_of(coins, c)
        return any(self._inner.halted(s, col) for s in range(i))

    def copy_message(self, c, i, coins, replies):
        """The message of copy `c` in round `i`."""
        if self.copy_halted_before(c, i, coins):
            return HALT
        copy_replies = tuple(r[c] for r in replies)
        return self._inner.message(i, column_of(coins, c), copy_replies)

    def message(self, i, coins, replies):
        return tuple(self.copy_message(c, i, coins, replies) for c in range(self._n))

    def check_round(self, i, coins, reply):
        if not (isinstance(reply, tuple) and len(reply) == self._n):
            raise MalformedMessage(f"Expected a {self._n}-tuple in round {i}.")
        for c, r in enumerate(reply):
            if self.copy_halted_before(c, i, coins):
                continue
            try:
                self._inner.check_reply(i, r)
            except MalformedMessage as err:
                raise MalformedMessage(f"copy {c}: {err}") from None

    def halted(self, i, coins):
        return all(self.copy_halted_before(c, i + 1, coins) for c in range(self._n))

    def copy_verdict(self, c, coins, replies):
        col = column_of(coins, c)
        if self._inner.halt_round(col) is not None:
            return True
        return bool(self._inner.verdict(col, tuple(r[c] for r in replies)))

    def copy_verdicts(self, coins, replies):
        return tuple(self.copy_verdict(c, coins, replies) for c in range(self._n))

    def verdict(self, coins, replies):
        return all(self.copy_verdicts(coins, replies))


def parallel_repeat(v, n):
    """The n-fold parallel repetition of `v`."""
    return ParallelVerifier(v, n)


class ProductProver(Prover):
    """A prover for a repeated verifier built from independent parts, each
    answering `arity` consecutive copies. With arity 1 a part sees the
    message of its copy; otherwise the tuple of its copies' messages.
    Parts are not consulted on HALT messages.
    """

    def __init__(self, parts, arity=1):
        self._parts = tuple(parts)
        if not self._parts:
            raise ValueError("Expected at least one part.")
        self._arity = int(arity)

    @property
    def parts(self) -> tuple:
        """The component provers."""
        return self._parts

    @property
    def arity(self) -> int:
        """The number of copies each part answers."""
        return self._arity

    def reset(self, rng):
        for part in self._parts:
            part.reset(rng)

    def reply(self, i, message):
        out = []
        k = self._arity
        for q, part in enumerate(self._parts):
            chunk = message[q * k : (q + 1) * k]
            if all(msg is HALT for msg in chunk):
                out.extend([None] * k)
            elif k == 1:
                out.append(part.reply(i, chunk[0]))
            else:
                out.extend(part.reply(i, tuple(chunk)))
        return tuple(out)


class GroupedProver(ProductProver):
    """An (l * n)-fold prover made of l independent n-fold provers."""

    def __init__(self, groups, n):
        super().__init__(groups, arity=n)

    @property
    def group_size(self) -> int:
        """The copies per group n."""
        return self._arity


# %% Simulation of random-terminating verifiers


class SimulatorHandle:
    """Continuation sampler for a random-terminating verifier.

    Conditioned on the event "halt at the end of round i", the future of
    the verifier is known: it accepts and sends HALT from then on. This
    event has density 1/m and is determined by the rows up to i + 1.
    """

    def __init__(self, verifier):
        if not isinstance(verifier, RandomTerminatingVerifier):
            raise TypeError("Expected a random-terminating verifier.")
        self._v = verifier

    @property
    def verifier(self) -> RandomTerminatingVerifier:
        """The simulated verifier."""
        return self._v

    @property
    def density(self) -> float:
        """The density of the conditioning event."""
        return self._v.delta

    def delta_event(self, i):
        """The conditioning event for round `i`, on coin vectors."""
        return EventPredicate(lambda col: col[i + 1][1] == 0, f"halt {i}")

    def sample_continuation(self, prefix, i, rng):
        """Complete the coin rows `prefix` (rows 0..i) conditioned on the
        halt at the end of round i.
        """
        v = self._v
        if len(prefix) != i + 1:
            raise ValueError(f"Expected {i + 1} coin rows, got {len(prefix)}.")
        rows = list(prefix)
        inner = v.inner.sample_coins(i + 1, rng) if i + 1 < v.rounds else None
        rows.append((inner, 0))
        for r in range(i + 2, v.coin_rows):
            rows.append(v.sample_coins(r, rng))
        return tuple(rows)

    def complete(self, messages, replies, i):
        """The simulated transcript of an execution that halts after round i."""
        return Transcript(
            None, tuple(messages[: i + 1]), tuple(replies[: i + 1]), True, halted_round=i
        )

    def emulate(self, par, oracle, coins, j, i, real_messages):
        """Run the deterministic `oracle` against the repeated verifier `par`
        with copy j played by the simulation: it sends `real_messages` up to
        round i and then halts and accepts. The coins of copy j are never
        read.

        Returns (all_accept, replies).
        """
        oracle.reset(None)
        replies = []
        for s in range(par.rounds):
            msg = tuple(
                (real_messages[s] if s <= i else HALT)
                if c == j
                else par.copy_message(c, s, coins, replies)
                for c in range(par.copies)
            )
            reply = oracle.reply(s, msg)
            if not (isinstance(reply, tuple) and len(reply) == par.copies):
                return False, tuple(replies)
            for c, r in enumerate(reply):
                if c == j or msg[c] is HALT:
                    continue
                try:
                    par.inner.check_reply(s, r)
                except MalformedMessage:
                    return False, tuple(replies + [reply])
            replies.append(reply)
        replies = tuple(replies)
        accepted = all(par.copy_verdict(c, coins, replies) for c in range(par.copies) if c != j)
        return accepted, replies


def rt_simulator(v_rt):
    """The simulator handle of a random-terminating verifier."""
    return SimulatorHandle(v_rt)


# %% Toy protocols


@dataclass(frozen=True)
class Sealed:
    """A value the verifier hands over that only an oracle prover may open."""

    value: object

    def __repr__(self):
        return "Sealed(...)"

    def open(self):
        return self.value


class AlwaysAccept(Verifier):
    """Accepts every interaction."""

    def __init__(self, rounds=2):
        self.rounds = int(rounds)

    def __repr__(self):
        return f"<AlwaysAccept rounds={self.rounds}>"

    def message(self, i, coins, replies):
        return "ping"

    def verdict(self, coins, replies):
        return True


class CoinGuessing(Verifier):
    """The verifier draws a secret in `range(2 ** bits)`, hands it over
    sealed in round 0 and accepts iff the last reply equals the secret.
    """

    def __init__(self, rounds=2, bits=1):
        if rounds < 1 or bits < 1:
            raise ValueError("Expected rounds >= 1 and bits >= 1.")
        self.rounds = int(rounds)
        self.bits = int(bits)

    def __repr__(self):
        return f"<CoinGuessing rounds={self.rounds} bits={self.bits}>"

    def coin_pmf(self, row):
        if row == 0:
            return uniform(range(2 ** self.bits))
        return point_mass(None)

    def sample_coins(self, row, rng):
        return int(rng.integers(2 ** self.bits)) if row == 0 else None

    def message(self, i, coins, replies):
        return Sealed(coins[0]) if i == 0 else "guess"

    def check_reply(self, i, reply):
        if i == self.rounds - 1:
            if not isinstance(reply, (int, np.integer)) or not 0 <= reply < 2 ** self.bits:
                raise MalformedMessage(f"Expected a guess in range({2 ** self.bits}).")

    def verdict(self, coins, replies):
        return replies[-1] == coins[0]


class BlindProver(Prover):
    """Guesses uniformly at random in every round."""

    def __init__(self, bits=1):
        self.bits = int(bits)

    def reply(self, i, message):
        return int(self._rng.integers(2 ** self.bits))


class OracleProver(Prover):
    """Opens the sealed secret and sends it in every round."""

    def reset(self, rng):
        self._secret = None

    def reply(self, i, message):
        if isinstance(message, Sealed):
            self._secret = message.open()
        return self._secret


class SealCopyingProver(Prover):
    """An n-fold prover that opens the seal of copy `source` and sends that
    secret to every copy. It wins when all secrets agree.
    """

    def __init__(self, n, source=0):
        self.n = int(n)
        self.source = int(source)

    def reset(self, rng):
        self._secret = 0

    def reply(self, i, message):
        msg = message[self.source]
        if isinstance(msg, Sealed):
            self._secret = msg.open()
        return (self._secret,) * self.n


def _ce_verifier(**params):
    from .counterexample import CEParams, IdealPKE, ce_verifier

    return ce_verifier(CEParams(**params), IdealPKE())


def _bin_verifier(**params):
    from .counterexample import IdealPKE, bin_verifier

    return bin_verifier(IdealPKE(), **params)


TOY_VERIFIERS = {
    "always-accept": AlwaysAccept,
    "coin-guess": CoinGuessing,
    "ce": _ce_verifier,
    "bin": _bin_verifier,
}


def make_verifier(name, **params):
    """Build a toy verifier from the registry by name."""
    try:
        factory = TOY_VERIFIERS[name]
    except KeyError:
        raise ValueError(f"Unknown toy verifier {name!r}") from None
    return factory(**params)


__all__ = [
    "HALT",
    "Verifier",
    "Prover",
    "Transcript",
    "run_protocol",
    "estimate_soundness",
    "RandomTerminatingVerifier",
    "random_terminating_wrap",
    "ParallelVerifier",
    "parallel_repeat",
    "ProductProver",
    "GroupedProver",
    "SimulatorHandle",
    "rt_simulator",
    "Sealed",
    "AlwaysAccept",
    "CoinGuessing",
    "BlindProver",
    "OracleProver",
    "SealCopyingProver",
    "make_verifier",
]
