"""
Builtin column tables, winning events and event families, random tiny
instances, and the flat instance file format.

An instance file looks like this:

```
# comments and blank lines are ignored
2 2
col 0: 0,0 0.25 0,1 0.25 1,0 0.25 1,1 0.25
col 1: 0,0 0.25 0,1 0.25 1,0 0.25 1,1 0.25
W column-sums-equal
family termination
```

The header gives `m n`. Each `col j:` line lists outcome/probability
pairs, where an outcome is a comma-separated vector of `m` symbols; `col *:`
applies to every column. The `W` and `family` lines name a builtin and its
parameters.
"""

import logging

import numpy as np

from .dist_core import EventPredicate, bernoulli, make_pmf, product
from .errors import ConfigError, LabError
from .skewed import BaseModel, DenseFamily, SkewedModel, column_event


logger = logging.getLogger(__name__)


# %% Column tables


def bit_columns(m, n, p=0.5):
    """n independent columns of m independent bits. `p` is the probability
    of a one, either a number or an (m, n) grid.
    """
    grid = np.broadcast_to(np.asarray(p, dtype=float), (m, n))
    return tuple(product([bernoulli(grid[i, j]) for i in range(m)]) for j in range(n))


def product_columns(row_pmfs, n):
    """n identical columns whose rows are independent draws from
    `row_pmfs[i]`.
    """
    col = product(list(row_pmfs))
    return (col,) * n


# %% Winning events


def _bits_index(x):
    index = 0
    for row in x:
        for v in row:
            index = 2 * index + int(v)
    return index


def _w_full(m, n):
    return EventPredicate(lambda x: True, "full")


def _w_column_sums_equal(m, n):
    def fn(x):
        sums = {sum(row[j] for row in x) for j in range(n)}
        return len(sums) == 1

    return EventPredicate(fn, "column-sums-equal")


def _w_cell_is_one(m, n, row, col):
    row, col = int(row), int(col)
    if not (0 <= row < m and 0 <= col < n):
        raise ValueError(f"Cell ({row}, {col}) is outside a {m} x {n} matrix.")
    return EventPredicate(lambda x: x[row][col] == 1, f"cell-is-one {row} {col}")


def _w_some_one(m, n, row):
    row = int(row)
    if not 0 <= row < m:
        raise ValueError(f"Row {row} is outside a matrix with {m} rows.")
    return EventPredicate(lambda x: any(v == 1 for v in x[row]), f"some-one {row}")


def _w_majority(m, n, threshold=None):
    k = (m * n + 1) // 2 if threshold is None else int(threshold)
    return EventPredicate(lambda x: sum(map(sum, x)) >= k, f"majority {k}")


def _w_table(m, n, mask):
    if len(mask) != 2 ** (m * n) or set(mask) - {"0", "1"}:
        raise ValueError(f"Expected a 0/1 mask of length {2 ** (m * n)}.")
    return EventPredicate(lambda x: mask[_bits_index(x)] == "1", f"table {mask}")


WINNING_EVENTS = {
    "full": _w_full,
    "column-sums-equal": _w_column_sums_equal,
    "cell-is-one": _w_cell_is_one,
    "some-one": _w_some_one,
    "majority": _w_majority,
    "table": _w_table,
}


def make_winning_event(name, m, n, *params):
    """Build a builtin winning event by name."""
    try:
        factory = WINNING_EVENTS[name]
    except KeyError:
        raise ValueError(f"Unknown winning event {name!r}") from None
    return factory(m, n, *params)


# %% Event families


def full_family(m, n):
    """E[i][j] always holds (density 1)."""
    full = EventPredicate.full()
    return DenseFamily(tuple((full,) * n for _ in range(m)), prefix=True, name="full")


def termination_family(m, n):
    """E[i][j] is "the bit of column j in row i + 1 is one"; the last row
    is full.
    """
    rows = []
    for i in range(m - 1):
        rows.append(tuple(_bit_event(j, ((i + 1, 1),)) for j in range(n)))
    rows.append((EventPredicate.full(),) * n)
    return DenseFamily(tuple(rows), prefix=True, name="termination")


def _bit_event(j, cells):
    cells = tuple(cells)
    if not cells:
        return EventPredicate.full()
    label = ",".join(f"{r}={b}" for r, b in cells)
    return column_event(j, lambda v: all(v[r] == b for r, b in cells), f"col {j}: {label}")


def bit_grid_family(m, n, spec):
    """E[i][j] requires the listed bits of column j in later rows.

    `spec` lists rows separated by `|`, cells by `;`, and within a cell the
    required `row=bit` items separated by `,`; `-` is the full event.
    For example `1=1;1=0|-;-` with m = n = 2.
    """
    row_specs = spec.split("|")
    if len(row_specs) != m:
        raise ValueError(f"Expected {m} rows in the bit-grid spec.")
    rows = []
    prefix = True
    for i, row_spec in enumerate(row_specs):
        cell_specs = row_spec.split(";")
        if len(cell_specs) != n:
            raise ValueError(f"Expected {n} cells in row {i} of the bit-grid spec.")
        row = []
        for j, cell in enumerate(cell_specs):
            cells = []
            cell = cell.strip()
            if cell != "-":
                for item in cell.split(","):
                    r, _, b = item.partition("=")
                    r, b = int(r), int(b)
                    if not i < r < m:
                        raise ValueError(f"Cell ({i}, {j}) may only read rows {i + 1}..{m - 1}.")
                    cells.append((r, b))
                    prefix = prefix and r == i + 1
            row.append(_bit_event(j, cells))
        rows.append(tuple(row))
    return DenseFamily(tuple(rows), prefix=prefix, name=f"bit-grid {spec}")


FAMILIES = {
    "full": full_family,
    "termination": termination_family,
    "bit-grid": bit_grid_family,
}


def make_family(name, m, n, *params):
    """Build a builtin event family by name."""
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise ValueError(f"Unknown event family {name!r}") from None
    return factory(m, n, *params)


# %% Random instances


def _random_grid_spec(rng, m, n, prefix):
    rows = []
    for i in range(m):
        cells = []
        for j in range(n):
            later = list(range(i + 1, m))
            if prefix:
                later = later[:1]
            chosen = [r for r in later if rng.random() < 0.5]
            if chosen:
                cells.append(",".join(f"{r}={int(rng.integers(2))}" for r in chosen))
            else:
                cells.append("-")
        rows.append(";".join(cells))
    return "|".join(rows)


def random_instance(rng, m, n, min_u_w=0.1, prefix=None, max_tries=1000):
    """A random tiny instance: binary product columns, a random winning
    table with U[W] >= min_u_w and a random dense family. Only instances
    whose skewed distribution is well defined are returned.

    Returns (base, family).
    """
    if prefix is None:
        prefix = bool(rng.integers(2))
    for _ in range(max_tries):
        p = rng.uniform(0.3, 0.7, size=(m, n)).round(2)
        columns = bit_columns(m, n, p)
        keep = rng.uniform(0.5, 0.95)
        mask = "".join("1" if rng.random() < keep else "0" for _ in range(2 ** (m * n)))
        if "1" not in mask:
            continue
        base = BaseModel(m, n, columns, _w_table(m, n, mask))
        fam = bit_grid_family(m, n, _random_grid_spec(rng, m, n, prefix))
        try:
            model = SkewedModel(base, fam)
            if model.u_w < min_u_w:
                continue
            model.skewed
        except LabError:
            continue
        return base, fam
    raise ValueError(f"No valid random instance found in {max_tries} tries.")


# %% Instance files


def _parse_symbol(token):
    try:
        return int(token)
    except ValueError:
        return token


def parse_instance(text):
    """Parse the flat instance format. Returns (base, family)."""
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise ConfigError("Empty instance description.")
    try:
        m, n = (int(v) for v in lines[0].split())
    except ValueError:
        raise ConfigError(f"Expected a header 'm n', got {lines[0]!r}") from None
    columns = [None] * n
    W = None
    fam = None
    for line in lines[1:]:
        head, *rest = line.split()
        try:
            if head == "col":
                label, _, body = line[len("col"):].partition(":")
                tokens = body.split()
                if len(tokens) % 2:
                    raise ConfigError(f"Unpaired outcome/probability in {line!r}")
                entries = []
                for outcome, prob in zip(tokens[::2], tokens[1::2]):
                    vec = tuple(_parse_symbol(s) for s in outcome.split(","))
                    if len(vec) != m:
                        raise ConfigError(f"Outcome {outcome!r} does not have {m} symbols")
                    entries.append((vec, float(prob)))
                pmf = make_pmf(entries)
                label = label.strip()
                targets = range(n) if label == "*" else [int(label)]
                for j in targets:
                    columns[j] = pmf
            elif head == "W":
                W = make_winning_event(rest[0], m, n, *rest[1:])
            elif head == "family":
                fam = make_family(rest[0], m, n, *rest[1:])
            else:
                raise ConfigError(f"Unknown instance line {line!r}")
        except (ValueError, IndexError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"Invalid instance line {line!r}: {err}") from err
    if any(col is None for col in columns):
        missing = [j for j, col in enumerate(columns) if col is None]
        raise ConfigError(f"Missing column tables for {missing}")
    if W is None or fam is None:
        raise ConfigError("An instance needs a W line and a family line.")
    return BaseModel(m, n, tuple(columns), W), fam


def load_instance(path):
    """Read an instance file. Returns (base, family)."""
    with open(path, "rb") as f:
        text = f.read().decode()
    logger.info("Loaded instance from %s", path)
    return parse_instance(text)


def format_bit_instance(m, n, p=0.5, w="full", family="termination"):
    """Render an instance file for binary columns with bit probability p."""
    lines = [f"{m} {n}"]
    col = bit_columns(m, 1, p)[0]
    body = " ".join(f"{','.join(map(str, v))} {q!r}" for v, q in col.items())
    lines.append(f"col *: {body}")
    lines.append(f"W {w}")
    lines.append(f"family {family}")
    return "\n".join(lines) + "\n"


__all__ = [
    "bit_columns",
    "product_columns",
    "make_winning_event",
    "make_family",
    "full_family",
    "termination_family",
    "bit_grid_family",
    "random_instance",
    "parse_instance",
    "load_instance",
    "format_bit_instance",
]
