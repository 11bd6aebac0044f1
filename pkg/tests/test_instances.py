from amp_lab.errors import ConfigError
from amp_lab.instances import (
    bit_columns,
    bit_grid_family,
    format_bit_instance,
    load_instance,
    make_family,
    make_winning_event,
    parse_instance,
    product_columns,
    random_instance,
    termination_family,
)
from amp_lab.dist_core import bernoulli
from amp_lab.skewed import SkewedModel

import numpy as np
from pytest import raises, approx


EXAMPLE = """
# comments and blank lines are ignored
2 2
col 0: 0,0 0.25 0,1 0.25 1,0 0.25 1,1 0.25
col 1: 0,0 0.25 0,1 0.25 1,0 0.25 1,1 0.25
W column-sums-equal
family termination
"""


def test_bit_columns():
    cols = bit_columns(2, 3, 0.25)
    assert len(cols) == 3
    assert cols[0].prob((1, 1)) == approx(1 / 16)
    cols = bit_columns(2, 2, [[0.1, 0.2], [0.3, 0.4]])
    assert cols[1].prob((1, 1)) == approx(0.2 * 0.4)
    assert cols[0].prob((0, 1)) == approx(0.9 * 0.3)

    cols = product_columns([bernoulli(0.5), bernoulli(0.1)], 2)
    assert cols[0] is cols[1]
    assert cols[0].prob((0, 1)) == approx(0.05)


def test_winning_events():
    x = ((1, 0), (1, 0))
    assert make_winning_event("full", 2, 2)(x)
    assert not make_winning_event("column-sums-equal", 2, 2)(x)
    assert make_winning_event("column-sums-equal", 2, 2)(((1, 0), (0, 1)))
    assert make_winning_event("cell-is-one", 2, 2, "1", "0")(x)
    assert not make_winning_event("some-one", 2, 2, 0)(((0, 0), (1, 1)))
    assert make_winning_event("majority", 2, 2)(x)
    assert not make_winning_event("majority", 2, 2, 3)(x)
    # the mask is read in row-major bit order
    mask = "0" * 10 + "1" + "0" * 5
    assert make_winning_event("table", 2, 2, mask)(x)
    assert not make_winning_event("table", 2, 2, mask)(((0, 0), (0, 0)))

    with raises(ValueError):
        make_winning_event("nope", 2, 2)
    with raises(ValueError):
        make_winning_event("cell-is-one", 2, 2, 2, 0)
    with raises(ValueError):
        make_winning_event("some-one", 2, 2, 5)
    with raises(ValueError):
        make_winning_event("table", 2, 2, "0101")


def test_families():
    fam = termination_family(3, 2)
    assert fam.shape == (3, 2)
    assert fam.prefix
    x = ((0, 0), (1, 0), (0, 1))
    assert fam.events[0][0](x)
    assert not fam.events[0][1](x)
    assert fam.events[1][1](x)
    assert fam.events[2][0](x)

    fam = bit_grid_family(2, 2, "1=1;1=0|-;-")
    assert fam.prefix
    assert fam.events[0][1](((0, 0), (0, 0)))
    assert not fam.events[0][0](((0, 0), (0, 0)))

    fam = make_family("bit-grid", 3, 1, "2=1|-|-")
    assert not fam.prefix

    with raises(ValueError):
        bit_grid_family(2, 2, "0=1;-|-;-")
    with raises(ValueError):
        bit_grid_family(2, 2, "-;-")
    with raises(ValueError):
        bit_grid_family(2, 2, "-|-;-")
    with raises(ValueError):
        make_family("nope", 2, 2)


def test_parse_instance():
    base, fam = parse_instance(EXAMPLE)
    assert (base.m, base.n) == (2, 2)
    assert fam.name == "termination"
    assert base.W.label == "column-sums-equal"
    assert SkewedModel(base, fam).u_w == approx(6 / 16)

    # col * fills every column
    text = format_bit_instance(2, 3, 0.5, w="majority", family="full")
    base, fam = parse_instance(text)
    assert base.n == 3
    assert base.columns[0] is base.columns[2]
    assert fam.name == "full"
    assert "majority" in base.W.label


def test_parse_instance_errors():
    bad = [
        "",
        "# only a comment",
        "2\ncol *: 0,0 1\nW full\nfamily full",
        "2 2\ncol *: 0,0\nW full\nfamily full",
        "2 2\ncol *: 0,0,0 1\nW full\nfamily full",
        "2 2\ncol 0: 0,0 1\nW full\nfamily full",
        "2 2\ncol *: 0,0 1\nfamily full",
        "2 2\ncol *: 0,0 1\nW nope\nfamily full",
        "2 2\ncol *: 0,0 1\nW full\nfamily full\nfoo bar",
        "2 2\ncol *: 0,0 x\nW full\nfamily full",
    ]
    for text in bad:
        with raises(ConfigError):
            parse_instance(text)


def test_load_instance(tmp_path):
    path = tmp_path / "instance.txt"
    path.write_text(EXAMPLE)
    base, fam = load_instance(str(path))
    assert base.m == 2
    assert fam.shape == (2, 2)


def test_random_instance():
    rng = np.random.default_rng(0)
    for prefix in (True, False, None):
        base, fam = random_instance(rng, 2, 2, prefix=prefix)
        model = SkewedModel(base, fam)
        assert model.u_w >= 0.1
        if prefix:
            assert fam.prefix
        assert len(model.skewed) > 0
