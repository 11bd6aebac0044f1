"""
A protocol whose parallel repetition loses soundness slowly even with
random termination, and the attacker that shows it.

The verifier encrypts a random bit, and accepts if the prover commits to
encryptions of bits whose XOR is that bit. A single copy cannot be won by
a prover that cannot decrypt, but against n parallel copies a prover can
forward each copy's ciphertext to the others. Random termination only
blocks this when one of the copies still needed for the forwarding halts
right after the first round.

Encryption is replaced by an ideal table: ciphertexts are opaque handles,
and only the holder of the table can map them back.
"""

import logging
import math
from dataclasses import dataclass

from .dist_core import Sentinel, bernoulli, point_mass, product, uniform
from .errors import MalformedMessage
from .protocol import HALT, Prover, Verifier


logger = logging.getLogger(__name__)

# The message of a verifier that accepts without playing
BOTTOM = Sentinel("bottom")


@dataclass(frozen=True)
class Ciphertext:
    """An opaque ciphertext handle."""

    handle: int

    def __repr__(self):
        return f"Ciphertext(#{self.handle})"


class IdealPKE:
    """An ideal public-key encryption table for plaintexts (bit, tag).

    Encryption is injective and public; decryption needs the table and is
    logged in `dec_calls`, so that a prover's use of it can be audited.
    """

    def __init__(self):
        self._handles = {}
        self._plaintexts = []
        self.dec_calls = 0

    def enc(self, b, r):
        """The ciphertext of (b, r)."""
        key = (int(b), int(r))
        handle = self._handles.get(key)
        if handle is None:
            handle = len(self._plaintexts)
            self._handles[key] = handle
            self._plaintexts.append(key)
        return Ciphertext(handle)

    def dec(self, c):
        """The plaintext of `c`, or None for a foreign value."""
        self.dec_calls += 1
        return self._plaintext(c)

    def _plaintext(self, c):
        if isinstance(c, Ciphertext) and 0 <= c.handle < len(self._plaintexts):
            return self._plaintexts[c.handle]
        return None

    def opens(self, c, b, r):
        """Whether `c` is the encryption of (b, r). Used by the verifier."""
        try:
            return self._plaintext(c) == (int(b), int(r))
        except (TypeError, ValueError):
            return False


@dataclass(frozen=True)
class CEParams:
    """Parameters of the protocol.

    * `m` (`int`): the number of rounds, at least 2.
    * `eps` (`float`): the soundness gap, in (0, 1/3]; the verifier plays
      with probability 3 eps and accepts outright otherwise.
    * `n` (`int`): the number of parallel copies the prover talks to.
    * `kappa` (`int`): the tag length in bits.
    """

    m: int = 4
    eps: float = 0.1
    n: int = 40
    kappa: int = 32

    def __post_init__(self):
        if not (isinstance(self.m, int) and self.m >= 2):
            raise ValueError("Expected m to be an int >= 2.")
        if not 0 < self.eps <= 1 / 3:
            raise ValueError("Expected eps to be in (0, 1/3].")
        if not (isinstance(self.n, int) and self.n >= 2):
            raise ValueError("Expected n to be an int >= 2.")
        if self.kappa < 1:
            raise ValueError("Expected kappa >= 1.")


def _xor(bits):
    out = 0
    for b in bits:
        out ^= int(b)
    return out


class CEVerifier(Verifier):
    """The verifier of the protocol.

    Row 0 of the coins is (d, b, r): with d = 1 (probability 1 - 3 eps)
    the verifier sends BOTTOM and halts accepting. Otherwise round 0 sends
    B = Enc(b, r), round 1 reveals (b, r) and the remaining rounds are
    dummies. The prover replies with n - 1 ciphertexts C_k in round 0 and
    their openings in round 1. The verifier accepts iff every C_k opens as
    sent, differs from B, and the opened bits XOR to b.

    With `dilute=False` there is no d coin.
    """

    def __init__(self, params, pke, dilute=True):
        self.params = params
        self.pke = pke
        self.dilute = bool(dilute)
        self.rounds = params.m

    def __repr__(self):
        return f"<CEVerifier {self.params} dilute={self.dilute}>"

    @property
    def play_probability(self) -> float:
        """The probability that the verifier does not accept outright."""
        return 3 * self.params.eps if self.dilute else 1.0

    def coin_pmf(self, row):
        if row > 0:
            return point_mass(None)
        d = bernoulli(1 - self.play_probability)
        return product([d, bernoulli(0.5), uniform(range(2 ** self.params.kappa))])

    def sample_coins(self, row, rng):
        if row > 0:
            return None
        d = int(rng.random() >= self.play_probability)
        b = int(rng.integers(2))
        r = int(rng.integers(2 ** self.params.kappa))
        return d, b, r

    def message(self, i, coins, replies):
        d, b, r = coins[0]
        if d == 1:
            return BOTTOM
        elif i == 0:
            return self.pke.enc(b, r)
        elif i == 1:
            return b, r
        else:
            return "dummy"

    def check_reply(self, i, reply):
        k = self.params.n - 1
        if i < 2 and not (isinstance(reply, tuple) and len(reply) == k):
            raise MalformedMessage(f"Expected a {k}-tuple in round {i}.")

    def halted(self, i, coins):
        return i == 0 and coins[0][0] == 1

    def verdict(self, coins, replies):
        d, b, r = coins[0]
        if d == 1:
            return True
        B = self.pke.enc(b, r)
        cts, openings = replies[0], replies[1]
        bits = []
        for c, opening in zip(cts, openings):
            if c == B or not isinstance(opening, tuple) or len(opening) != 2:
                return False
            if not self.pke.opens(c, *opening):
                return False
            bits.append(opening[0])
        return _xor(bits) == b


def ce_verifier(params, pke):
    """The diluted m-round verifier."""
    return CEVerifier(params, pke)


def bin_verifier(pke, n=2, kappa=32):
    """The two-round warm-up verifier without dilution."""
    return CEVerifier(CEParams(m=2, eps=1 / 3, n=n, kappa=kappa), pke, dilute=False)


# %% Provers


class HonestProver(Prover):
    """Decrypts B and commits to a random sharing of its bit."""

    def __init__(self, params, pke):
        self.params = params
        self.pke = pke

    def reply(self, i, message):
        k = self.params.n - 1
        if i == 0:
            if not isinstance(message, Ciphertext):
                return (None,) * k
            b, _ = self.pke.dec(message)
            bits = [int(v) for v in self._rng.integers(2, size=k - 1)]
            bits.append(b ^ _xor(bits))
            self._openings = tuple(
                (v, int(self._rng.integers(2 ** self.params.kappa))) for v in bits
            )
            return tuple(self.pke.enc(*o) for o in self._openings)
        elif i == 1:
            return self._openings
        return None


class NaiveProver(Prover):
    """Commits to random bits before seeing b; wins half of the played runs."""

    def __init__(self, params, pke):
        self.params = params
        self.pke = pke

    def reply(self, i, message):
        k = self.params.n - 1
        if i == 0:
            self._openings = tuple(
                (int(self._rng.integers(2)), int(self._rng.integers(2 ** self.params.kappa)))
                for _ in range(k)
            )
            return tuple(self.pke.enc(*o) for o in self._openings)
        elif i == 1:
            return self._openings
        return None


class ReplayProver(Prover):
    """Sends B back as its first ciphertext and opens it once revealed.
    The verifier rejects any reply that contains B.
    """

    def __init__(self, params, pke):
        self.params = params
        self.pke = pke

    def reply(self, i, message):
        k = self.params.n - 1
        if i == 0:
            self._B = message
            self._rest = tuple((0, int(self._rng.integers(2 ** 16))) for _ in range(k - 1))
            return (message,) + tuple(self.pke.enc(*o) for o in self._rest)
        elif i == 1:
            if not isinstance(message, tuple):
                return (None,) * k
            return (tuple(message),) + self._rest
        return None


class CEAttacker(Prover):
    """The n-fold attacker. It never decrypts.

    In round 0 it sends every active copy (one that did not send BOTTOM)
    the ciphertexts of all other copies, using fresh encryptions of its
    own random bits for the inactive ones. In round 1 it forwards the
    revealed openings, unless an active copy has halted, in which case its
    opening is unknown and the attacker sends well-formed garbage.
    """

    def __init__(self, params, pke):
        self.params = params
        self.pke = pke

    def reset(self, rng):
        self._rng = rng
        self._active = ()
        self._own = {}

    def reply(self, i, message):
        n = self.params.n
        if i == 0:
            self._active = tuple(c for c in range(n) if message[c] is not BOTTOM)
            sent = list(message)
            for c in range(n):
                if c not in self._active:
                    opening = (
                        int(self._rng.integers(2)),
                        int(self._rng.integers(2 ** self.params.kappa)),
                    )
                    self._own[c] = opening
                    sent[c] = self.pke.enc(*opening)
            return tuple(tuple(sent[:c] + sent[c + 1 :]) for c in range(n))
        elif i == 1:
            if any(message[c] is HALT for c in self._active):
                logger.debug("An active copy halted; sending garbage")
                return ((None,) * (n - 1),) * n
            openings = [
                tuple(message[c]) if c in self._active else self._own[c] for c in range(n)
            ]
            return tuple(tuple(openings[:c] + openings[c + 1 :]) for c in range(n))
        return (None,) * n


def ce_attacker(params, pke):
    """The attacker against the n-fold repetition of the random-terminating
    verifier, sharing the public table `pke` with it.
    """
    return CEAttacker(params, pke)


PROVERS = {
    "honest": HonestProver,
    "naive": NaiveProver,
    "replay": ReplayProver,
}


# %% Closed forms


def attack_success_exact(eps, n, m, dilute=True):
    """The success probability of the attacker against n copies of the
    random-terminating verifier.

    A copy plays with probability 3 eps. The attacker loses exactly when
    some playing copy halts right after round 0 while another playing copy
    reaches the verdict, or when no copy halts that way, some playing copy
    reaches the verdict and the XOR of all bits is 1.
    """
    play = 3 * eps if dilute else 1.0
    h = 1 / m
    # a playing copy that survives round 0 halts later with probability q
    q = (1 - h) * (1 - (1 - h) ** (m - 1))

    def g(a):
        return (1 - play * (1 - a)) ** n

    return g(h + q) + 0.5 * (g(1 - h) - g(q))


def naive_success_exact(eps):
    """The acceptance probability of the naive prover on one copy."""
    return 1 - 1.5 * eps


def lower_bound_value(eps, n, m):
    """(1 - eps)^(14 n / m)."""
    if not 0 <= eps < 1:
        raise ValueError("Expected eps to be in [0, 1).")
    return (1 - eps) ** (14 * n / m)


def rate_bound(eps, m):
    """The largest decay rate of the attack success in n: 14 |ln(1 - eps)| / m."""
    return 14 * abs(math.log(1 - eps)) / m


__all__ = [
    "BOTTOM",
    "Ciphertext",
    "IdealPKE",
    "CEParams",
    "CEVerifier",
    "ce_verifier",
    "bin_verifier",
    "HonestProver",
    "NaiveProver",
    "ReplayProver",
    "CEAttacker",
    "ce_attacker",
    "attack_success_exact",
    "naive_success_exact",
    "lower_bound_value",
    "rate_bound",
]
