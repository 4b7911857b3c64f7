import math

import numpy as np
import pytest

from bccpolar.source import (
    LAYERS, PRESETS, JointSource, Layer, SourceFormatError, auxiliaries, bsc, bsc_pair,
    entropy, info_quantity, load_source, make_layer, mutual_information, parse_source,
    product_channel, sample, theorem1_corner, validate,
)


def hb(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


GOOD = """\
# bsc pair
card_y = 2
card_z = 2
factor_uvx = 0.5 0 0 0 0 0 0 0.5   # placeholder, replaced below
factor_yz_given_x[0] = 0.7125 0.2375 0.0375 0.0125
factor_yz_given_x[1] = 0.0125 0.0375 0.2375 0.7125
"""


def test_binary_entropy_reference_values():
    # h(0.1) and h(0.25), computed by hand
    assert hb(0.1) == pytest.approx(0.4689955935892812, abs=1e-12)
    assert hb(0.25) == pytest.approx(0.8112781244591328, abs=1e-12)


def test_parse_roundtrip_text():
    src = bsc_pair()
    again = parse_source(src.to_text())
    np.testing.assert_allclose(again.pmf, src.pmf, atol=1e-15)
    assert again.digest() == src.digest()


def test_parse_json_matches_text():
    text = """{
      "card_y": 2, "card_z": 2,
      "factor_uvx": [0.5, 0, 0, 0.5, 0, 0, 0, 0],
      "factor_yz_given_x": [[0.9, 0, 0, 0.1], [0.1, 0, 0, 0.9]]
    }"""
    src = parse_source(text)
    assert src.card_y == 2 and src.pmf.sum() == pytest.approx(1.0)
    assert src.factor_yz_given_x[0, 0, 0] == 0.9


def test_parse_fractions():
    text = GOOD.replace("0.5 0 0 0 0 0 0 0.5", "1/2 0 0 0 0 0 0 1/2")
    assert parse_source(text).factor_uvx[1, 1, 1] == 0.5


@pytest.mark.parametrize("mutate, line", [
    (lambda t: t.replace("card_y = 2", "card_y = two"), 2),
    (lambda t: t.replace("factor_uvx = 0.5", "factor_uvx = 0.4"), 4),
    (lambda t: t.replace("0.7125 0.2375", "0.7125"), 5),
    (lambda t: t.replace("0.0125 0.0375 0.2375", "0.0125 -0.0375 0.2375"), 6),
    (lambda t: t + "bogus = 1\n", 7),
    (lambda t: t + "what is this\n", 7),
])
def test_parse_errors_carry_line_numbers(mutate, line):
    with pytest.raises(SourceFormatError) as err:
        parse_source(mutate(GOOD))
    assert err.value.lineno == line
    assert str(err.value).startswith(f"line {line}:")


def test_parse_missing_row():
    text = "\n".join(GOOD.splitlines()[:-1])
    with pytest.raises(SourceFormatError, match="missing factor_yz_given_x"):
        parse_source(text)


def test_unknown_preset():
    with pytest.raises(SourceFormatError, match="unknown preset"):
        load_source("preset:nope")


def test_bsc_pair_information_quantities():
    src = bsc_pair(0.05, 0.25)
    assert entropy(src, "U") == 0.0
    assert entropy(src, "V", "U") == pytest.approx(1.0)
    assert mutual_information(src, "V", "Y", "U") == pytest.approx(1 - hb(0.05), abs=1e-12)
    assert mutual_information(src, "V", "Z", "U") == pytest.approx(1 - hb(0.25), abs=1e-12)
    assert info_quantity(src, "X", "V") == 0.0
    corner = theorem1_corner(src)
    assert corner.r_o == 0.0 and corner.r_r == 0.0
    assert corner.r_s == pytest.approx(hb(0.25) - hb(0.05), abs=1e-12)
    assert corner.r_s == pytest.approx(0.5249, abs=1e-4)


def test_marginal_orders_axes_as_requested():
    src = PRESETS["bec-bsc"]()
    assert src.marginal("ZU").shape == (2, 2)
    np.testing.assert_allclose(src.marginal("ZU"), src.marginal("UZ").T)


def test_validate():
    assert validate(bsc_pair())
    # Eve better than Bob: no secrecy
    bad = JointSource(auxiliaries(), product_channel(bsc(0.25), bsc(0.05)))
    rep = validate(bad)
    assert not rep and any("secrecy" in v for v in rep.violations)
    # common message visible to Bob but hidden from Eve is outside the supported ordering
    worse = JointSource(auxiliaries(0.5, 0.0, 0.0), product_channel(np.eye(2), bsc(0.5)))
    assert any("ordering" in v for v in validate(worse).violations)


def test_sample_deterministic_and_marginals():
    src = bsc_pair()
    a = sample(src, 200_000, 3)
    np.testing.assert_array_equal(a, sample(src, 200_000, 3))
    assert np.all(a[:, 0] == 0)
    flip_y = np.mean(a[:, 2] != a[:, 3])
    assert abs(flip_y - 0.05) < 4 * math.sqrt(0.05 * 0.95 / a.shape[0])


def test_layers():
    src = PRESETS["bec-bsc"]()
    for name in LAYERS:
        layer = make_layer(src, name)
        assert layer.joint.sum() == pytest.approx(1.0)
        target, _, side = name.partition("|")
        assert layer.entropy() == pytest.approx(entropy(src, target, side), abs=1e-12)
    with pytest.raises(ValueError):
        make_layer(src, "Y|X")
    ident = Layer.identity()
    assert ident.entropy() == 0.0
    assert np.isinf(ident.llr).all()
