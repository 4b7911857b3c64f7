import math

import numpy as np
import pytest

from bccpolar.channel import BroadcastChannel, transmit
from bccpolar.source import PRESETS, bsc, product_channel


def test_identity_channel():
    ch = BroadcastChannel(product_channel(np.eye(2), np.eye(2)))
    x = np.random.default_rng(0).integers(0, 2, size=(3, 4, 64))
    y, z = ch.transmit(x, 1)
    np.testing.assert_array_equal(y, x)
    np.testing.assert_array_equal(z, x)


def test_bsc_crossover_within_three_sigma():
    n = 100_000
    ch = BroadcastChannel(product_channel(bsc(0.1), bsc(0.3)))
    x = np.random.default_rng(1).integers(0, 2, size=n)
    y, z = ch.transmit(x, 2)
    for out, p in ((y, 0.1), (z, 0.3)):
        assert abs(np.mean(out != x) - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_joint_frequencies_match_matrix():
    # correlated outputs: y and z share the same flip half of the time
    m = np.zeros((2, 2, 2))
    m[0] = [[0.6, 0.1], [0.1, 0.2]]
    m[1] = m[0][::-1, ::-1]
    ch = BroadcastChannel(m)
    n = 1_000_000
    x = np.random.default_rng(3).integers(0, 2, size=n)
    y, z = transmit(ch, x, 4)
    for xv in (0, 1):
        sel = x == xv
        freq = np.bincount(y[sel] * 2 + z[sel], minlength=4) / sel.sum()
        se = np.sqrt(m[xv].ravel() * (1 - m[xv].ravel()) / sel.sum())
        assert np.all(np.abs(freq - m[xv].ravel()) <= 4 * se + 1e-12)


def test_same_seed_same_outputs():
    ch = BroadcastChannel.from_source(PRESETS["bec-bsc"]())
    x = np.random.default_rng(5).integers(0, 2, size=(10, 32))
    a = ch.transmit(x, 9)
    b = ch.transmit(x, 9)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert a[0].max() == 2  # erasures occur


def test_with_eve_and_degrade():
    ch = BroadcastChannel.from_source(PRESETS["bsc-pair"]())
    noisy = ch.with_eve(np.full((2, 3), 1 / 3))
    assert noisy.card_z == 3
    np.testing.assert_allclose(noisy.matrix.sum(axis=2), ch.matrix.sum(axis=2))
    deg = ch.degrade_eve(bsc(0.1))
    # BSC(0.25) followed by BSC(0.1) is BSC(0.25 * 0.9 + 0.75 * 0.1)
    np.testing.assert_allclose(deg.matrix.sum(axis=1)[0], [0.7, 0.3])


def test_rejects_bad_matrices():
    with pytest.raises(ValueError):
        BroadcastChannel(np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        BroadcastChannel(np.ones((3, 1, 1)))
    ch = BroadcastChannel.from_source(PRESETS["bsc-pair"]())
    with pytest.raises(ValueError):
        ch.degrade_eve(np.eye(3))
