# The docstring below is used as part of the reference docs. It describes
# the parts that cannot be described well via the properties and methods.

"""

### Coin matrices and prefixes

A coin matrix `x` is a tuple of `m` rows, each a tuple of `n` symbols, so
that `x[i][j]` is row `i` of column `j`. Columns are drawn independently;
each column table of a `BaseModel` is a `FinitePmf` over length-`m` symbol
vectors. A prefix `x[:i]` holds the rows before round `i`.

The ideal distribution is the base distribution conditioned on the winning
event `W`. The skewed distribution picks a column `j` uniformly, and then
for every round draws `x[i][j]` from the base distribution and the rest of
row `i` from the ideal distribution conditioned on the column event
`E[i][j]`.


### Exact analysis

All quantities are computed by enumerating the coin matrices in the support
of the base distribution, so a `SkewedModel` is meant for tiny instances
(a few thousand matrices). The module functions (`ideal_pmf`,
`skewed_pmf_exact`, `weight_ledger`, ...) wrap a cached `SkewedModel`.
`skewed_sample(..., method="rejection")` does not enumerate and works on
larger instances.

"""

# ### Developer notes ###
#
# ## Vectorized conditionals
#
# Every conditional probability is a ratio of two group sums over the
# enumerated matrices. A prefix x[:i] gets an integer code, and so do
# x[:i+1] and the pair (x[:i], x[i][j]). `_gsum(v, codes)` returns, for each
# matrix, the sum of `v` over all matrices sharing its code. Quantities
# that depend on the prefix only are therefore stored per matrix, in arrays
# shaped (m, n, K) or (m, K).
#
# ## Undefined values
#
# Outside the ideal support the ratios are 0/0. They are left as nan, and
# every comparison with nan is False, so those matrices never enter the
# index sets or the events.


import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import rel_entr

from .dist_core import EventPredicate, FinitePmf, Sentinel, as_event, condition, make_pmf
from .divergence import CutPair, deterministic, smooth_cert_eval, smooth_dp_transport
from .errors import (
    DensityViolation,
    EmptyGoodSet,
    PrefixOutsideSupport,
    UnreachableConditioning,
    ZeroProbabilityEvent,
    CapExceeded,
)


logger = logging.getLogger(__name__)

# Thresholds of the good-event machinery
BETA_MAX = 1.1
TDELTA_MIN = 0.9
OMEGA_TOL = 0.1
UX_MIN = 0.9
G_MIN = 0.9
GAMMA_MAX = 0.5

_TOL = 1e-12


def _gsum(values, codes):
    return np.bincount(codes, weights=values)[codes]


def _ratio(num, den, fill=np.nan):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.full(np.broadcast(num, den).shape, fill, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _codes(keys):
    table = {}
    codes = np.array([table.setdefault(key, len(table)) for key in keys], dtype=np.intp)
    return codes, table


def column_of(x, j):
    """The column vector `x^j` of a coin matrix."""
    return tuple(row[j] for row in x)


def column_event(j, fn, label=""):
    """An event on coin matrices that reads column `j` only."""
    return EventPredicate(lambda x: fn(column_of(x, j)), label or f"E(col {j})")


@dataclass(frozen=True)
class BaseModel:
    """The base distribution U of m x n coin matrices with independent
    columns, together with the winning event W.

    * `m` (`int`): the number of rows.
    * `n` (`int`): the number of columns.
    * `columns` (tuple of `FinitePmf`): one pmf per column over
      length-m symbol vectors.
    * `W` (`EventPredicate`): the winning event on coin matrices.
    """

    m: int
    n: int
    columns: tuple
    W: object

    def __post_init__(self):
        if not (isinstance(self.m, int) and self.m >= 1):
            raise ValueError("Expected m to be a positive int.")
        if not (isinstance(self.n, int) and self.n >= 1):
            raise ValueError("Expected n to be a positive int.")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "W", as_event(self.W))
        if len(self.columns) != self.n:
            raise ValueError(f"Expected {self.n} column pmfs, got {len(self.columns)}.")
        for col in self.columns:
            if not isinstance(col, FinitePmf):
                raise TypeError("Column tables must be FinitePmf objects.")
            for v in col.outcomes:
                if not (isinstance(v, tuple) and len(v) == self.m):
                    raise ValueError(f"Column outcome {v!r} is not a length-{self.m} tuple.")

    def matrix_pmf(self):
        """U_X as a pmf over coin matrices (support only)."""
        entries = []
        supports = [list(col.items()) for col in self.columns]
        for combo in itertools.product(*supports):
            p = math.prod(w for _, w in combo)
            x = tuple(zip(*[v for v, _ in combo]))
            entries.append((x, p))
        return make_pmf(entries)


@dataclass(frozen=True)
class DenseFamily:
    """An m x n grid of column-local events E[i][j] on coin matrices.

    * `events` (grid of `EventPredicate`): `events[i][j]` must read column
      `j` only.
    * `delta_grid` (grid of `float` or `None`): the declared densities; when
      given they are checked against the computed ones.
    * `prefix` (`bool`): whether E[i][j] is determined by rows `<= i + 1`.
    * `name` (`str`): a label for reports.
    """

    events: tuple
    delta_grid: tuple = None
    prefix: bool = False
    name: str = ""

    def __post_init__(self):
        events = tuple(tuple(as_event(e) for e in row) for row in self.events)
        if not events or len({len(row) for row in events}) != 1:
            raise ValueError("Expected a rectangular, nonempty grid of events.")
        object.__setattr__(self, "events", events)
        if self.delta_grid is not None:
            grid = tuple(tuple(float(d) for d in row) for row in self.delta_grid)
            object.__setattr__(self, "delta_grid", grid)

    @property
    def shape(self) -> tuple:
        """(m, n)"""
        return len(self.events), len(self.events[0])


@dataclass(frozen=True)
class DensityReport:
    """Result of `validate_density`."""

    delta_grid: tuple
    delta_min: float
    prefix: bool


@dataclass(frozen=True)
class MeasurementLedger:
    """The measurement ledger of one round, for a fixed prefix x[:i].
    All per-column fields are tuples indexed by column.
    """

    round: int
    omega_prime: tuple
    omega: tuple
    tdelta: tuple
    beta: tuple
    x_sets: tuple
    u_x: tuple
    j_set: frozenset
    g_prev: frozenset
    s_set: frozenset

    def beta_prime(self, j, symbol):
        """beta[j](symbol) if the symbol is in x_sets[j], else 0."""
        return self.beta[j][symbol] if symbol in self.x_sets[j] else 0.0

    def good_set(self, x_i):
        """The good columns after row `x_i` is revealed."""
        return frozenset(j for j in self.s_set if x_i[j] in self.x_sets[j])

    def gamma(self, x_i, y_i):
        """The gamma measurement of row `x_i` with event indicators `y_i`."""
        if not self.s_set:
            raise EmptyGoodSet(f"No potentially good column in round {self.round}.")
        num = sum(
            self.omega[j] * self.beta_prime(j, x_i[j]) / self.tdelta[j]
            for j in self.s_set
            if y_i[j]
        )
        den = sum(self.omega[j] * self.u_x[j] for j in self.s_set)
        return num / den - 1


@dataclass(frozen=True)
class EventFlags:
    """Per-round event indicators for one coin matrix."""

    G: tuple
    T: tuple
    Tprime: tuple
    A: tuple
    B: tuple
    qb: tuple
    tB: tuple
    C: tuple


@dataclass(frozen=True)
class ExtLedger:
    """The additional per-(round, column) ratios of one coin matrix, as
    arrays shaped (m, n). `U_seq[i]` and `V_seq[i]` include row i.
    """

    alpha: np.ndarray
    rho: np.ndarray
    tau: np.ndarray
    xi: np.ndarray
    U_seq: np.ndarray
    V_seq: np.ndarray
    R_seq: np.ndarray


@dataclass(frozen=True)
class FcutCertificate:
    """The f_cut witness and its audit record.

    * `cert`: SmoothCert for the extended pair of distributions.
    * `terms`: the per-round conditional divergences.
    * `ideal_c`: Idl[C_<=m].
    * `projected`: SmoothCert of the cut pair transported to (Idl_X, Q_X).
    """

    cert: object
    terms: tuple
    ideal_c: float
    projected: object

    @property
    def bound(self) -> float:
        """The sum of the per-round terms."""
        return float(sum(self.terms))


class _Enumeration:
    """Enumerated support of U with prefix codes and event values."""

    def __init__(self, base, family):
        if not isinstance(base, BaseModel):
            raise TypeError("Expected a BaseModel.")
        if not isinstance(family, DenseFamily):
            raise TypeError("Expected a DenseFamily.")
        if family.shape != (base.m, base.n):
            raise ValueError(
                f"Family shape {family.shape} does not match ({base.m}, {base.n})."
            )
        m, n = base.m, base.n
        U = base.matrix_pmf()
        self.matrices = U.outcomes
        self.index = {x: k for k, x in enumerate(self.matrices)}
        self.u = U.probs.copy()
        K = len(self.matrices)
        logger.debug("Enumerated %d coin matrices (m=%d, n=%d)", K, m, n)
        self.e = np.array(
            [[[bool(E(x)) for x in self.matrices] for E in row] for row in family.events],
            dtype=float,
        ).reshape(m, n, K)
        self.code_lt = []
        self.prefix_table = []
        for i in range(m + 1):
            codes, table = _codes(x[:i] for x in self.matrices)
            self.code_lt.append(codes)
            self.prefix_table.append(table)
        self.code_ltj = [
            [_codes((x[:i], x[i][j]) for x in self.matrices)[0] for j in range(n)]
            for i in range(m)
        ]
        # codes of the first i entries of column j, for i = 0 .. m
        self.col_code = [
            [_codes(column_of(x, j)[:i] for x in self.matrices)[0] for j in range(n)]
            for i in range(m + 1)
        ]

    def code_le(self, i):
        return self.code_lt[i + 1]


def _check_density(enum, base, family):
    m, n = base.m, base.n
    u = enum.u
    grid = []
    for i in range(m):
        row = []
        for j in range(n):
            e = enum.e[i, j]
            full_col = enum.col_code[m][j]
            # column locality: constant on every fixing of column j
            lo = _gsum(e * u, full_col) / _gsum(u, full_col)
            bad = np.flatnonzero(np.abs(lo - e) > _TOL)
            if len(bad):
                x = enum.matrices[bad[0]]
                raise DensityViolation(i, j, column_of(x, j), "depends on other columns")
            codes = enum.col_code[i + 1][j]
            dens = _gsum(e * u, codes) / _gsum(u, codes)
            if np.ptp(dens) > 1e-9:
                k = int(np.argmax(np.abs(dens - dens[0]) > 1e-9))
                fixing = column_of(enum.matrices[k], j)[: i + 1]
                raise DensityViolation(i, j, fixing, "conditional density is not constant")
            delta = float(dens[0])
            if delta <= 0:
                raise DensityViolation(i, j, (), "density is zero")
            if family.delta_grid is not None and abs(family.delta_grid[i][j] - delta) > 1e-9:
                raise DensityViolation(
                    i, j, (), f"declared density {family.delta_grid[i][j]} but found {delta}"
                )
            if family.prefix and i + 2 <= m:
                codes = enum.col_code[i + 2][j]
                lo = _gsum(e * u, codes) / _gsum(u, codes)
                bad = np.flatnonzero(np.abs(lo - e) > _TOL)
                if len(bad):
                    fixing = column_of(enum.matrices[bad[0]], j)[: i + 2]
                    raise DensityViolation(i, j, fixing, "not determined by the next row")
            row.append(delta)
        grid.append(tuple(row))
    grid = tuple(grid)
    return DensityReport(grid, min(min(row) for row in grid), bool(family.prefix))


def validate_density(base, fam):
    """Check that the family is column-local, has constant conditional
    density per cell, and is prefix when flagged. Returns a DensityReport.
    """
    return _check_density(_Enumeration(base, fam), base, fam)


class SkewedModel:
    """Exact enumeration of the ideal and skewed distributions of a tiny
    instance. Upon instantiation one provides:

    * `base` (`BaseModel`): the column tables and the winning event W.
    * `family` (`DenseFamily`): the column events E[i][j].

    The family is validated on construction (raising `DensityViolation`),
    and U[W] must be positive (else `ZeroProbabilityEvent`). Everything else
    is computed lazily and cached.
    """

    def __init__(self, base, family):
        self._base = base
        self._family = family
        self._enum = enum = _Enumeration(base, family)
        self._density = _check_density(enum, base, family)
        w = np.array([base.W(x) for x in enum.matrices], dtype=float)
        self._u_w = float((enum.u * w).sum())
        if self._u_w <= 0:
            raise ZeroProbabilityEvent(f"Event {base.W.label!r} has probability zero.")
        self._w = w
        self._idl = enum.u * w / self._u_w
        self._delta = np.array(self._density.delta_grid)

    def __repr__(self):
        b = self._base
        return f"<SkewedModel m={b.m} n={b.n} matrices={len(self._enum.matrices)}>"

    @property
    def base(self) -> BaseModel:
        """The base model."""
        return self._base

    @property
    def family(self) -> DenseFamily:
        """The column event family."""
        return self._family

    @property
    def density(self) -> DensityReport:
        """The validated density grid."""
        return self._density

    @property
    def u_w(self) -> float:
        """U[W]."""
        return self._u_w

    @property
    def matrices(self) -> tuple:
        """The enumerated coin matrices, in canonical order."""
        return self._enum.matrices

    @cached_property
    def ideal(self) -> FinitePmf:
        """Idl_X = U_X conditioned on W."""
        X = self._enum.matrices
        return make_pmf((X[k], p) for k, p in enumerate(self._idl) if p > 0)

    @cached_property
    def skewed(self) -> FinitePmf:
        """The skewed joint pmf over (j, coin matrix)."""
        X = self._enum.matrices
        qjx = self._qjx
        entries = [
            ((j, X[k]), qjx[j, k]) for j in range(self._base.n) for k in np.flatnonzero(qjx[j] > 0)
        ]
        return make_pmf(entries)

    @cached_property
    def skewed_x(self) -> FinitePmf:
        """The skewed pmf of the coin matrix alone."""
        X = self._enum.matrices
        qx = self._qjx.sum(axis=0)
        return make_pmf((X[k], qx[k]) for k in np.flatnonzero(qx > 0))

    # %% Internals

    @cached_property
    def _qjx(self):
        enum = self._enum
        m, n = self._base.m, self._base.n
        arr = self._arrays
        qjx = np.zeros((n, len(enum.matrices)))
        for j in range(n):
            running = np.full(len(enum.matrices), 1.0 / n)
            for i in range(m):
                ie = self._idl * enum.e[i, j]
                num = _gsum(ie, enum.code_le(i))
                den = _gsum(ie, enum.code_ltj[i][j])
                reach = running * arr["ucol"][i, j] > 0
                if np.any(reach & (den <= 0)):
                    k = int(np.flatnonzero(reach & (den <= 0))[0])
                    raise UnreachableConditioning(
                        f"Idl[E[{i}][{j}] | history] = 0 on a reachable history "
                        f"{enum.matrices[k][:i]!r} with x[{i}][{j}] = {enum.matrices[k][i][j]!r}"
                    )
                running = running * arr["ucol"][i, j] * _ratio(num, den, fill=0.0)
            qjx[j] = running
        return qjx

    @cached_property
    def _arrays(self):
        enum = self._enum
        m, n = self._base.m, self._base.n
        u, idl, e = enum.u, self._idl, enum.e
        K = len(enum.matrices)
        shape = (m, n, K)
        ucol = np.empty(shape)
        idl_x = np.empty(shape)
        tdelta = np.empty(shape)
        e_le = np.empty(shape)
        e_ltj = np.empty(shape)
        beta = np.empty(shape)
        uw_cond = np.empty(shape)
        for i in range(m):
            lt, le = enum.code_lt[i], enum.code_le(i)
            u_lt, idl_lt, idl_le = _gsum(u, lt), _gsum(idl, lt), _gsum(idl, le)
            for j in range(n):
                ltj = enum.code_ltj[i][j]
                ie = idl * e[i, j]
                ucol[i, j] = _gsum(u, ltj) / u_lt
                idl_x[i, j] = _ratio(_gsum(idl, ltj), idl_lt)
                tdelta[i, j] = _ratio(_gsum(ie, lt), idl_lt)
                e_le[i, j] = _ratio(_gsum(ie, le), idl_le)
                e_ltj[i, j] = _ratio(_gsum(ie, ltj), _gsum(idl, ltj))
                beta[i, j] = ucol[i, j] * _ratio(_gsum(ie, lt), _gsum(ie, ltj), fill=np.inf)
                uw_cond[i, j] = _ratio(
                    _gsum(u * self._w * e[i, j], ltj), _gsum(u * e[i, j], ltj)
                )
        with np.errstate(invalid="ignore", divide="ignore"):
            step = ucol / idl_x
            omega_prime = np.ones(shape)
            for i in range(1, m):
                omega_prime[i] = omega_prime[i - 1] * step[i - 1]
            R = n * omega_prime / omega_prime.sum(axis=1, keepdims=True)
            fac = np.where(e_le == 0, 0.0, e_le / e_ltj)
            omega = R.copy()
            for i in range(1, m):
                omega[i] = omega[i] * np.prod(fac[:i], axis=0)
        return {
            "ucol": ucol,
            "idl_x": idl_x,
            "tdelta": tdelta,
            "e_le": e_le,
            "e_ltj": e_ltj,
            "beta": beta,
            "uw_cond": uw_cond,
            "omega_prime": omega_prime,
            "omega": omega,
            "R": R,
        }

    @cached_property
    def _sets(self):
        enum = self._enum
        m, n = self._base.m, self._base.n
        arr = self._arrays
        u = enum.u
        delta = self._delta[:, :, None]
        in_x = arr["beta"] <= BETA_MAX + _TOL
        u_x = np.empty_like(arr["beta"])
        for i in range(m):
            for j in range(n):
                u_x[i, j] = _gsum(u * in_x[i, j], enum.code_lt[i]) / _gsum(u, enum.code_lt[i])
        with np.errstate(invalid="ignore"):
            in_j = (
                (arr["tdelta"] >= TDELTA_MIN * delta - _TOL)
                & (np.abs(arr["omega"] - 1) <= OMEGA_TOL + _TOL)
                & (u_x >= UX_MIN - _TOL)
            )
        good = np.empty_like(in_j)
        s_set = np.empty_like(in_j)
        prev = np.ones(in_j.shape[1:], dtype=bool)
        for i in range(m):
            s_set[i] = prev & in_j[i]
            good[i] = s_set[i] & in_x[i]
            prev = good[i]
        return {"in_x": in_x, "u_x": u_x, "in_j": in_j, "good": good, "s": s_set}

    def _good_before(self, i):
        good = self._sets["good"]
        if i == 0:
            return np.ones(good.shape[1:], dtype=bool)
        return good[i - 1]

    @cached_property
    def gamma_array(self) -> np.ndarray:
        """gamma of every round at every matrix (nan where undefined), shaped (m, K)."""
        arr, sets = self._arrays, self._sets
        s = sets["s"]
        with np.errstate(invalid="ignore", divide="ignore"):
            beta_p = np.where(sets["in_x"], arr["beta"], 0.0)
            hit = s & (self._enum.e > 0)
            num = np.where(hit, arr["omega"] * beta_p / arr["tdelta"], 0.0).sum(axis=1)
            den = np.where(s, arr["omega"] * sets["u_x"], 0.0).sum(axis=1)
            return _ratio(num, den) - 1

    @cached_property
    def _flags(self):
        enum = self._enum
        m, n = self._base.m, self._base.n
        s = self._sets["s"]
        idl = self._idl
        gamma = self.gamma_array
        G = s.sum(axis=1) >= G_MIN * n - _TOL
        with np.errstate(invalid="ignore"):
            T = np.abs(gamma) <= GAMMA_MAX
        Tp = np.empty_like(T)
        for i in range(m):
            lt = enum.code_lt[i]
            Tp[i] = _ratio(_gsum(idl * T[i], lt), _gsum(idl, lt)) >= 1 - 1 / n - _TOL
        A = G & T & Tp
        A_le = np.logical_and.accumulate(A, axis=0)
        return {"G": G, "T": T, "Tprime": Tp, "A": A, "A_le": A_le}

    @cached_property
    def _qb(self):
        enum = self._enum
        m = self._base.m
        qjx = self._qjx
        qb = np.empty((m, len(enum.matrices)))
        qbx = np.empty_like(qb)
        for i in range(m):
            lt = enum.code_lt[i]
            now = (qjx * self._sets["good"][i]).sum(axis=0)
            before = (qjx * self._good_before(i)).sum(axis=0)
            qb[i] = _ratio(_gsum(now, lt), _gsum(before, lt), fill=0.0)
            qbx[i] = _ratio(now, before, fill=0.0)
        return qb, qbx

    def _prefix_code(self, x_prefix):
        x_prefix = tuple(tuple(row) for row in x_prefix)
        i = len(x_prefix)
        if i >= self._base.m:
            raise ValueError(f"A prefix has at most {self._base.m - 1} rows.")
        code = self._enum.prefix_table[i].get(x_prefix)
        if code is None:
            raise PrefixOutsideSupport(f"Prefix {x_prefix!r} is outside the base support.")
        members = np.flatnonzero(self._enum.code_lt[i] == code)
        if self._idl[members].sum() <= 0:
            raise PrefixOutsideSupport(f"Prefix {x_prefix!r} is outside the ideal support.")
        return i, members

    def _matrix_index(self, x):
        x = tuple(tuple(row) for row in x)
        k = self._enum.index.get(x)
        if k is None or self._idl[k] <= 0:
            raise PrefixOutsideSupport(f"Matrix {x!r} is outside the ideal support.")
        return k

    # %% Public analysis

    def conditional_mean(self, values, i):
        """E_Idl[values | x[:i]] for per-matrix values, as a per-matrix array
        (nan outside the ideal support of the prefix).
        """
        lt = self._enum.code_lt[i]
        return _ratio(_gsum(self._idl * np.asarray(values, dtype=float), lt), _gsum(self._idl, lt))

    def ledger(self, x_prefix):
        """The MeasurementLedger of round `len(x_prefix)`."""
        i, members = self._prefix_code(x_prefix)
        arr, sets = self._arrays, self._sets
        enum = self._enum
        n = self._base.n
        k0 = members[0]
        beta = []
        for j in range(n):
            table = {}
            for k in members:
                table[enum.matrices[k][i][j]] = float(arr["beta"][i, j, k])
            beta.append(table)
        x_sets = tuple(
            frozenset(s for s, b in beta[j].items() if b <= BETA_MAX + _TOL) for j in range(n)
        )
        prev = self._good_before(i)[:, k0]
        return MeasurementLedger(
            round=i,
            omega_prime=tuple(arr["omega_prime"][i, :, k0].tolist()),
            omega=tuple(arr["omega"][i, :, k0].tolist()),
            tdelta=tuple(arr["tdelta"][i, :, k0].tolist()),
            beta=tuple(beta),
            x_sets=x_sets,
            u_x=tuple(self._sets["u_x"][i, :, k0].tolist()),
            j_set=frozenset(np.flatnonzero(sets["in_j"][i, :, k0]).tolist()),
            g_prev=frozenset(np.flatnonzero(prev).tolist()),
            s_set=frozenset(np.flatnonzero(sets["s"][i, :, k0]).tolist()),
        )

    def event_flags(self, x, rng, j=None):
        """EventFlags of the matrix `x`. B needs the column `j`; without it
        B is a tuple of None.
        """
        k = self._matrix_index(x)
        f = self._flags
        qb, _ = self._qb
        m = self._base.m
        tB = tuple(bool(rng.random() < qb[i, k]) for i in range(m))
        A = tuple(bool(a) for a in f["A"][:, k])
        if j is None:
            B = (None,) * m
        else:
            B = tuple(bool(g) for g in self._sets["good"][:, j, k])
        return EventFlags(
            G=tuple(bool(v) for v in f["G"][:, k]),
            T=tuple(bool(v) for v in f["T"][:, k]),
            Tprime=tuple(bool(v) for v in f["Tprime"][:, k]),
            A=A,
            B=B,
            qb=tuple(float(v) for v in qb[:, k]),
            tB=tB,
            C=tuple(a and b for a, b in zip(A, tB)),
        )

    def b_probability(self, x_prefix):
        """Q[B_i | x[:i], B_<i] with i = len(x_prefix)."""
        i, members = self._prefix_code(x_prefix)
        qb, _ = self._qb
        return float(qb[i, members[0]])

    def ext_arrays(self):
        """The additional ratios at every matrix as a dict of arrays shaped
        (m, n, K): alpha, rho, tau, xi, U, V, R.
        """
        arr = self._arrays
        delta = self._delta[:, :, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            td = arr["tdelta"]
            u_fac = np.where((arr["e_ltj"] == 0) & (td == 0), 1.0, arr["e_ltj"] / td)
            v_fac = np.where((arr["e_le"] == 0) & (td == 0), 1.0, arr["e_le"] / td)
            return {
                "alpha": arr["ucol"] / arr["idl_x"] - 1,
                "rho": td / delta - 1,
                "tau": arr["e_le"] / delta - 1,
                "xi": arr["e_ltj"] / delta - 1,
                "U": np.cumprod(u_fac, axis=0),
                "V": np.cumprod(v_fac, axis=0),
                "R": arr["R"],
            }

    def ext_ledger(self, x):
        """The ExtLedger of the matrix `x`."""
        k = self._matrix_index(x)
        ext = self.ext_arrays()
        return ExtLedger(
            alpha=ext["alpha"][:, :, k],
            rho=ext["rho"][:, :, k],
            tau=ext["tau"][:, :, k],
            xi=ext["xi"][:, :, k],
            U_seq=ext["U"][:, :, k],
            V_seq=ext["V"][:, :, k],
            R_seq=ext["R"][:, :, k],
        )

    def divergence_budget(self):
        """Return (per-round d_i, d): the conditional divergence of the
        ideal row-and-event distribution from the base one.
        """
        enum = self._enum
        n = self._base.n
        u, idl = enum.u, self._idl
        weights = 2 ** np.arange(n)
        out = []
        for i in range(self._base.m):
            ybits = (enum.e[i] > 0).T @ weights
            groups, _ = _codes(zip(enum.code_le(i).tolist(), ybits.tolist()))
            lt = enum.code_lt[i]
            p_g = np.bincount(groups, weights=idl)
            u_g = np.bincount(groups, weights=u)
            parent = np.zeros(len(p_g), dtype=np.intp)
            parent[groups] = lt
            p_pref = np.bincount(lt, weights=idl)[parent]
            u_pref = np.bincount(lt, weights=u)[parent]
            live = p_g > 0
            ref = p_pref[live] * u_g[live] / u_pref[live]
            out.append(max(0.0, float(rel_entr(p_g[live], ref).sum())))
        return tuple(out), float(sum(out))

    def bad_t_probability(self, t):
        """Pr over x ~ Idl and j ~ Q(j | x) that some round has
        U[W | x[:i], x[i][j], E[i][j]] < U[W] / t.
        """
        if not t > 0:
            raise ValueError("Expected t > 0.")
        qjx = self._qjx
        qx = qjx.sum(axis=0)
        n = self._base.n
        post = np.where(qx > 0, qjx / np.where(qx > 0, qx, 1.0), 1.0 / n)
        with np.errstate(invalid="ignore"):
            low = np.any(self._arrays["uw_cond"] < self._u_w / t, axis=0)
        return float((self._idl * (post * low).sum(axis=0)).sum())

    def fcut_certificate(self):
        """Build the f_cut certificate. Returns an FcutCertificate."""
        enum = self._enum
        m = self._base.m
        X = enum.matrices
        f = self._flags
        A_le = f["A_le"]
        qb, qbx = self._qb
        qx = self._qjx.sum(axis=0)
        idl = self._idl
        p_bits = A_le * qb
        pa_lt = np.empty_like(qb)
        for i in range(m):
            lt = enum.code_lt[i]
            before = A_le[i - 1] if i else np.ones(len(X), dtype=bool)
            pa_lt[i] = _ratio(_gsum(idl * A_le[i], lt), _gsum(idl * before, lt), fill=0.0)
        q_bits = pa_lt * qbx

        def extend(weights, bits):
            entries = []
            for k in np.flatnonzero(weights > 0):
                for y in itertools.product((0, 1), repeat=m):
                    w = weights[k]
                    for i, yi in enumerate(y):
                        w *= bits[i, k] if yi else 1 - bits[i, k]
                    if w > 0:
                        entries.append((tuple(zip(y, X[k])), w))
            return make_pmf(entries)

        P_ext = extend(idl, p_bits)
        Q_ext = extend(qx, q_bits)
        cut = CutPair(deterministic(_f_cut), deterministic(_f_cut))
        cert = smooth_cert_eval(P_ext, Q_ext, cut)
        ideal_c = float((idl * np.prod(p_bits, axis=0)).sum())
        logger.debug("f_cut certificate: alpha=%g div=%g", cert.alpha, cert.div)

        terms = []
        running = np.ones(len(X))
        for i in range(m):
            running = running * qb[i]
            weight = idl * A_le[i] * running
            total = weight.sum()
            if total <= 0:
                terms.append(0.0)
                continue
            lt, le = enum.code_lt[i], enum.code_le(i)
            q_row = (self._qjx * self._sets["good"][i]).sum(axis=0)
            p_le = np.bincount(le, weights=idl * A_le[i])
            q_le = np.bincount(le, weights=q_row)
            parent = np.zeros(len(p_le), dtype=np.intp)
            parent[le] = lt
            p_pref = np.bincount(lt, weights=idl * A_le[i])
            q_pref = np.bincount(lt, weights=q_row)
            w_pref = np.bincount(lt, weights=weight) / total
            term = 0.0
            for c in np.flatnonzero(w_pref > 0):
                rows = np.flatnonzero((parent == c) & (p_le > 0))
                if q_pref[c] <= 0 or np.any(q_le[rows] <= 0):
                    term = math.inf
                    break
                pc = p_le[rows] / p_pref[c]
                qc = q_le[rows] / q_pref[c]
                term += w_pref[c] * max(0.0, float(rel_entr(pc, qc).sum()))
            terms.append(term)

        projected = smooth_cert_eval(
            self.ideal,
            self.skewed_x,
            smooth_dp_transport(P_ext, Q_ext, cut, deterministic(_drop_bits)),
        )
        return FcutCertificate(cert, tuple(terms), ideal_c, projected)

    def sample(self, rng):
        """Draw (j, x) from the skewed distribution by exact conditioning."""
        enum = self._enum
        m, n = self._base.m, self._base.n
        X = enum.matrices
        j = int(rng.integers(n))
        code = 0
        k = 0
        for i in range(m):
            mask = enum.code_lt[i] == code
            w = enum.u * mask
            k1 = int(rng.choice(len(X), p=w / w.sum()))
            mask = enum.code_ltj[i][j] == enum.code_ltj[i][j][k1]
            w = self._idl * enum.e[i, j] * mask
            total = w.sum()
            if total <= 0:
                raise UnreachableConditioning(
                    f"Idl[E[{i}][{j}] | history] = 0 on a sampled history"
                )
            k = int(rng.choice(len(X), p=w / total))
            code = enum.code_le(i)[k]
        return j, X[k]


def _f_cut(s):
    for k, (y, _) in enumerate(s):
        if y == 0:
            return Sentinel(("cut", s[:k]))
    return s


def _drop_bits(s):
    return tuple(row for _, row in s)


@lru_cache(maxsize=32)
def get_model(base, fam):
    """A cached SkewedModel for (base, fam)."""
    return SkewedModel(base, fam)


def ideal_pmf(base):
    """Idl_X = U_X | W as an exact pmf."""
    U = base.matrix_pmf()
    return condition(U, base.W)


def skewed_pmf_exact(base, fam):
    """The exact skewed pmf over (j, coin matrix)."""
    return get_model(base, fam).skewed


def skewed_sample(base, fam, rng, *, method="exact", max_tries=10_000):
    """Draw (j, x) from the skewed distribution.

    With `method="rejection"` every row of the other columns is found by
    drawing fresh continuations from U until W and E[i][j] hold; this does
    not enumerate, and raises CapExceeded after `max_tries` draws.
    """
    if method == "exact":
        return get_model(base, fam).sample(rng)
    elif method == "rejection":
        return _sample_rejection(base, fam, rng, max_tries)
    else:
        raise ValueError(f"Unknown sampling method {method!r}")


def _sample_rejection(base, fam, rng, max_tries):
    m, n = base.m, base.n
    cache = {}

    def continuation(t, prefix):
        key = (t, prefix)
        if key not in cache:
            cache[key] = condition(base.columns[t], lambda v: v[: len(prefix)] == prefix)
        return cache[key].sample(rng)

    j = int(rng.integers(n))
    cols = [()] * n
    for i in range(m):
        cols[j] = cols[j] + (continuation(j, cols[j])[i],)
        E = fam.events[i][j]
        for tries in range(1, max_tries + 1):
            vecs = [continuation(t, cols[t]) for t in range(n)]
            x = tuple(zip(*vecs))
            if base.W(x) and E(x):
                break
        else:
            raise CapExceeded(i, max_tries)
        logger.debug("Row %d accepted after %d draws", i, tries)
        for t in range(n):
            if t != j:
                cols[t] = cols[t] + (vecs[t][i],)
    return j, tuple(zip(*cols))


def weight_ledger(base, fam, x_prefix):
    """The MeasurementLedger of round `len(x_prefix)`."""
    return get_model(base, fam).ledger(x_prefix)


def gamma_eval(base, fam, x_prefix, x_i, y_i):
    """gamma of row `x_i` with event indicators `y_i`, after `x_prefix`."""
    return get_model(base, fam).ledger(x_prefix).gamma(x_i, y_i)


def event_flags(base, fam, x, rng, j=None):
    """EventFlags of the coin matrix `x`."""
    return get_model(base, fam).event_flags(x, rng, j=j)


def b_probability(base, fam, x_prefix):
    """Q[B_i | x[:i], B_<i]."""
    return get_model(base, fam).b_probability(x_prefix)


def build_fcut_certificate(base, fam):
    """The f_cut smooth-KL certificate and its audit record."""
    return get_model(base, fam).fcut_certificate()


def divergence_budget(base, fam):
    """Return (per-round d_i, d)."""
    return get_model(base, fam).divergence_budget()


def ext_ledger(base, fam, x):
    """The ExtLedger of the coin matrix `x`."""
    return get_model(base, fam).ext_ledger(x)


def bad_t_probability(base, fam, t):
    """The exact probability of the Bad_t event."""
    return get_model(base, fam).bad_t_probability(t)


def ideal_running_time_diagnostic(base, fam, t):
    """Report-only numbers around the running-time bound: p_t, d, delta and
    the implied constant (p_t - 2m/t) * delta * n / (d + 1).
    """
    model = get_model(base, fam)
    p_t = model.bad_t_probability(t)
    _, d = model.divergence_budget()
    delta = model.density.delta_min
    implied = (p_t - 2 * base.m / t) * delta * base.n / (d + 1)
    return {"p_t": p_t, "d": d, "delta": delta, "implied_constant": implied}
