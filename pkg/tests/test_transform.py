import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bccpolar import kernels
from bccpolar.kernels import DECIDE, FIXED, SAMPLE, UNIFORM
from bccpolar.source import Layer, PRESETS, make_layer
from bccpolar.transform import (
    IndexRule, ScContext, ZeroProbabilityPrefix, check_length, sc_decode, sc_encode,
    sc_posterior, transform,
)


def kron_matrix(N):
    G = np.array([[1]], dtype=np.int64)
    while G.shape[0] < N:
        G = np.kron(G, np.array([[1, 0], [1, 1]]))
    return G


def brute_posterior(layer, side_code, prefix, i):
    """P(u_i = 1 | u_<i = prefix, side) by summing over all raw vectors."""
    N = side_code.size
    G = kron_matrix(N)
    num = den = 0.0
    for x in itertools.product((0, 1), repeat=N):
        x = np.array(x)
        p = np.prod(layer.joint[x, side_code])
        u = x @ G % 2
        if np.array_equal(u[:i], prefix):
            den += p
            num += p * u[i]
    if den == 0:
        return None
    return num / den


def random_layer(rng, card):
    joint = rng.dirichlet(np.ones(2 * card)).reshape(2, card)
    if rng.random() < 0.3:  # exact zeros exercise the infinite-LLR paths
        joint[rng.integers(2), rng.integers(card)] = 0.0
        joint /= joint.sum()
    return Layer("T|S", "T", "S", (card,), joint)


@pytest.mark.parametrize("N", [2, 4, 8, 16, 32])
def test_matches_kronecker_matrix(N, rng):
    x = rng.integers(0, 2, size=(50, N), dtype=np.uint8)
    np.testing.assert_array_equal(transform(x), x.astype(np.int64) @ kron_matrix(N) % 2)


def test_involution_and_shapes(rng):
    x = rng.integers(0, 2, size=(7, 64), dtype=np.uint8)
    np.testing.assert_array_equal(transform(transform(x)), x)
    assert transform(x[0]).shape == (64,)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        transform(np.zeros(6, dtype=np.uint8))
    with pytest.raises(ValueError):
        transform(np.array([0, 2]))
    with pytest.raises(ValueError):
        check_length(0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 6), st.data())
def test_linearity(n, data):
    N = 1 << n
    bits = st.lists(st.integers(0, 1), min_size=N, max_size=N)
    a = np.array(data.draw(bits), dtype=np.uint8)
    b = np.array(data.draw(bits), dtype=np.uint8)
    np.testing.assert_array_equal(transform(a ^ b), transform(a) ^ transform(b))


def test_sc_posterior_matches_brute_force(rng):
    checked = 0
    for N in (2, 4, 8):
        for _ in range(12):
            layer = random_layer(rng, 3)
            side = rng.integers(0, 3, size=N)
            ctx = ScContext(layer, {"S": side})
            i = int(rng.integers(N))
            x = rng.integers(0, 2, size=N)
            prefix = transform(x.astype(np.uint8))[:i]
            want = brute_posterior(layer, side, prefix, i)
            if want is None:
                with pytest.raises(ZeroProbabilityPrefix):
                    sc_posterior(ctx, prefix, i)
                continue
            assert sc_posterior(ctx, prefix, i) == pytest.approx(want, abs=1e-9)
            checked += 1
    assert checked > 20


def test_unconditioned_layer_posterior():
    layer = make_layer(PRESETS["bec-bsc"](), "U")
    ctx = ScContext.blank(layer, 4)
    p1 = layer.joint[1, 0]
    # u_0 is the xor of all four raw bits
    want = 0.5 * (1 - (1 - 2 * p1) ** 4)
    assert sc_posterior(ctx, [], 0) == pytest.approx(want, abs=1e-12)


def test_decode_recovers_noiseless():
    layer = Layer.identity("X")
    x = np.array([1, 0, 1, 1, 0, 0, 1, 0])
    ctx = ScContext(layer, {"X": x})
    res = sc_decode(ctx, IndexRule.build(8, default=DECIDE))
    np.testing.assert_array_equal(res.bits, transform(x.astype(np.uint8)))
    assert res.ok


def test_encode_is_deterministic_given_rng():
    layer = make_layer(PRESETS["bec-bsc"](), "V|U")
    side = {"U": np.array([[0, 1, 1, 0]] * 5)}
    ctx = ScContext(layer, side)
    rule = IndexRule.build(4, default=SAMPLE, fixed={0: 1}, uniform=[3])
    a = sc_encode(ctx, rule, 9)
    np.testing.assert_array_equal(a, sc_encode(ctx, rule, 9))
    assert np.all(a[:, 0] == 1)


def test_index_rule_validation():
    with pytest.raises(ValueError):
        IndexRule(np.array([0, 9, 0, 0]), np.zeros(4))
    with pytest.raises(ValueError):
        IndexRule(np.zeros(4), np.zeros(3))
    rule = IndexRule.build(4, fixed={1: 1}, uniform=[2], decide=[3])
    assert list(rule.actions) == [SAMPLE, FIXED, UNIFORM, DECIDE]


@pytest.mark.skipif(kernels.BACKEND != "numba", reason="numba unavailable")
@pytest.mark.parametrize("N", [1, 2, 8, 64])
def test_backends_agree(N, rng):
    B = 40
    leaf = rng.normal(0, 2, size=(B, N))
    leaf[rng.random((B, N)) < 0.1] = np.inf
    leaf[rng.random((B, N)) < 0.1] = -np.inf
    actions = rng.integers(0, 4, size=N).astype(np.int8)
    fixed = rng.integers(0, 2, size=(B, N), dtype=np.uint8)
    rand = rng.random((B, N))
    a = kernels.sc_run(leaf, actions, fixed, rand, backend="numpy")
    b = kernels.sc_run(leaf, actions, fixed, rand, backend="numba")
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[2], b[2])
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-12)
    bits = rng.integers(0, 2, size=(B, N), dtype=np.uint8)
    np.testing.assert_array_equal(kernels.butterfly(bits, "numpy"), kernels.butterfly(bits, "numba"))
    np.testing.assert_allclose(kernels.genie_llr(leaf, bits, "numpy"), kernels.genie_llr(leaf, bits, "numba"),
                               rtol=1e-12, atol=1e-12)
