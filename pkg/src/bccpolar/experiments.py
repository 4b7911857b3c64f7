"""End-to-end session experiments: error rates and plug-in leakage estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels
from .channel import BroadcastChannel
from .codec import ChainConfig, bob_decode, encode_session, eve_decode, message_errors, random_messages
from .kernels import DECIDE
from .source import Layer
from .transform import transform

ERROR_CLASSES = ("common_bob", "common_eve", "secret_private")


@dataclass(frozen=True)
class Rate:
    errors: int
    trials: int
    low: float
    high: float

    @property
    def value(self):
        return self.errors / self.trials if self.trials else math.nan


def wilson(errors, trials, level=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return Rate(0, 0, 0.0, 1.0)
    ci = stats.binomtest(int(errors), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    return Rate(int(errors), int(trials), float(ci.low), float(ci.high))


def _batches(trials, batch):
    done = 0
    while done < trials:
        n = min(batch, trials - done)
        yield n
        done += n


def run_sessions(config, count, rng, channel=None, backend=None):
    """Encode ``count`` sessions, pass them through the channel, decode at both receivers.

    Returns (messages, transcript, bob DecodeResult, eve DecodeResult).
    """
    channel = channel or BroadcastChannel.from_source(config.source)
    msgs = random_messages(config, count, rng)
    tr = encode_session(config, msgs, rng, backend=backend)
    tr.y, tr.z = channel.transmit(tr.x, rng)
    bob = bob_decode(config, tr.y, tr.public, tr.seed, backend=backend)
    eve = eve_decode(config, tr.z, tr.public, backend=backend)
    return msgs, tr, bob, eve


def error_rate_experiment(config, trials, rng, channel=None, batch=500, backend=None):
    """Empirical block-error rates of every message class with Wilson intervals.

    Classes: ``common_bob`` (Bob's common-message estimate), ``common_eve``
    (Eve's), ``secret_private`` (Bob's joint estimate of S and M over all k
    blocks).
    """
    rng = np.random.default_rng(rng)
    counts = dict.fromkeys(ERROR_CLASSES, 0)
    for n in _batches(trials, batch):
        msgs, _, bob, eve = run_sessions(config, n, rng, channel, backend)
        counts["common_bob"] += int(message_errors(config, msgs, bob.messages, "O").sum())
        counts["common_eve"] += int(message_errors(config, msgs, eve.messages, "O").sum())
        counts["secret_private"] += int(message_errors(config, msgs, bob.messages, "SM").sum())
    return {name: wilson(c, trials) for name, c in counts.items()}


# --- leakage ----------------------------------------------------------------------

def _codes(rows):
    rows = np.ascontiguousarray(rows, dtype=np.uint8)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.shape[1] == 0:
        return np.zeros(rows.shape[0], dtype=np.int64), 1
    _, inv = np.unique(rows, axis=0, return_inverse=True)
    inv = inv.ravel()
    return inv, int(inv.max()) + 1


def plug_in_mi(a, b):
    """Plug-in mutual information (bits) of paired samples and its degrees of freedom.

    ``a`` and ``b`` are (n, width) arrays; each row is one symbol.
    """
    ia, na = _codes(a)
    ib, nb = _codes(b)
    n = ia.size
    joint = np.bincount(ia * nb + ib, minlength=na * nb).reshape(na, nb) / n
    pa, pb = joint.sum(axis=1), joint.sum(axis=0)
    nz = joint > 0
    mi = float((joint[nz] * np.log2(joint[nz] / np.outer(pa, pb)[nz])).sum())
    return max(mi, 0.0), (na - 1) * (nb - 1)


@dataclass(frozen=True)
class LeakageEstimate:
    """Plug-in leakage estimate.

    The plug-in estimator is biased upward; ``bias`` is its expected value
    under independence, (df / (2 n ln 2)) bits, and ``null_high`` the 99%
    quantile of the estimate under independence. Values below ``null_high``
    are indistinguishable from zero leakage.
    """

    value: float
    bias: float
    null_high: float
    summary: str
    trials: int


def eve_secret_decisions(config, z, public, backend=None):
    """Eve's SC hard decisions on the secret positions of every block, shape (B, |S_1:k|).

    Eve decodes with the layers of ``config.source``; pass a config built on
    her actual channel (see :func:`observer_config`) when it differs from the
    design channel.
    """
    est = eve_decode(config, z, public, backend=backend).estimates
    layer = config.layers["V|UZ"]
    out = []
    for i in range(1, config.k + 1):
        u_hat = transform(est["a", i], backend=backend)
        leaf = layer.leaf_llr({"U": u_hat, "Z": z[i - 1]}).astype(np.float64)
        act = np.full(config.N, DECIDE, dtype=np.int8)
        zeros = np.zeros(leaf.shape)
        bits, _, _ = kernels.sc_run(leaf, act, zeros.astype(np.uint8), zeros, backend=backend)
        out.append(bits[:, config.rules["b", i].message(("S", i))])
    return np.concatenate(out, axis=1)


FULL_LIMIT = 1 << 16


def observer_config(config, channel):
    """Same code, with decoder layers derived from ``channel`` instead of the design channel."""
    if channel is None or np.array_equal(channel.matrix, config.source.factor_yz_given_x):
        return config
    return ChainConfig(config.source.with_channel(channel.matrix), config.sets, config.k)


def leakage_estimate(config, trials, rng, channel=None, summary=None, batch=1000, backend=None):
    """Plug-in estimate of I(S_{1:k}; Eve's view), for trend comparisons.

    Parameters
    ----------
    summary : {"full", "decisions"}, optional
        ``"full"`` pairs the whole secret with the full public bundle and all
        of Eve's outputs; it is only meaningful when those alphabets are tiny.
        ``"decisions"`` sums per-bit plug-in estimates between each secret bit
        and Eve's SC decision on it, a projection that can only under-state
        what Eve learns. The default picks ``"full"`` when the joint alphabet
        has at most 2^16 cells.
    """
    rng = np.random.default_rng(rng)
    channel = channel or BroadcastChannel.from_source(config.source)
    s_bits = sum(config.message_length("S", i) for i in range(1, config.k + 1))
    if summary is None:
        cells = 2.0 ** (s_bits + config.public_size()) * float(channel.card_z) ** (config.N * config.k)
        summary = "full" if cells <= FULL_LIMIT else "decisions"
    if summary not in ("full", "decisions"):
        raise ValueError(f"unknown summary {summary!r}")
    eve_config = observer_config(config, channel)
    S, view = [], []
    for n in _batches(trials, batch):
        msgs = random_messages(config, n, rng)
        tr = encode_session(config, msgs, rng, backend=backend)
        tr.y, tr.z = channel.transmit(tr.x, rng)
        S.append(np.concatenate([msgs["S", i] for i in range(1, config.k + 1)], axis=1))
        if summary == "full":
            parts = [tr.psi_u1] + [tr.phi_u[i] for i in range(config.k)] + [tr.z[i] for i in range(config.k)]
            view.append(np.concatenate(parts, axis=1))
        else:
            view.append(eve_secret_decisions(eve_config, tr.z, tr.public, backend))
    S, view = np.concatenate(S), np.concatenate(view)
    if summary == "full":
        value, df = plug_in_mi(S, view)
    else:
        value, df = 0.0, 0
        for j in range(S.shape[1]):
            v, d = plug_in_mi(S[:, j], view[:, j])
            value += v
            df += d
    scale = 2 * trials * math.log(2)
    null_high = float(stats.chi2.ppf(0.99, df) / scale) if df else 0.0
    return LeakageEstimate(value, df / scale, null_high, summary, trials)


# --- noiseless self-test ----------------------------------------------------------

def _identity_layers():
    """Decoder layers under which Bob sees y = 2u + v and Eve sees z = u.

    Every leaf LLR is then infinite, so SC decoding is exact whatever the
    source; what remains to be tested is the chaining and bookkeeping.
    """
    u_of_y = np.zeros((2, 4))
    v_given_uy = np.zeros((2, 8))
    for y in range(4):
        u_of_y[y >> 1, y] = 0.25
        for u in range(2):
            v_given_uy[y & 1, u * 4 + y] = 0.125
    eye = np.eye(2) / 2
    return {
        "U|Y": Layer("U|Y", "U", "Y", (4,), u_of_y),
        "U|Z": Layer("U|Z", "U", "Z", (2,), eye),
        "V|UY": Layer("V|UY", "V", "UY", (2, 4), v_given_uy),
    }


def noiseless_roundtrip(config, sessions, rng, backend=None):
    """Encode, then decode from noiseless observations; returns error counts per class.

    Any nonzero count is a defect in the chained encoder or decoders.
    """
    rng = np.random.default_rng(rng)
    cfg = ChainConfig(config.source, config.sets, config.k)
    cfg.layers.update(_identity_layers())
    msgs = random_messages(cfg, sessions, rng)
    tr = encode_session(cfg, msgs, rng, backend=backend)
    y = 2 * tr.u + tr.v
    bob = bob_decode(cfg, y, tr.public, tr.seed, backend=backend)
    eve = eve_decode(cfg, tr.u, tr.public, backend=backend)
    return {
        "common_bob": int(message_errors(cfg, msgs, bob.messages, "O").sum()),
        "common_eve": int(message_errors(cfg, msgs, eve.messages, "O").sum()),
        "secret_private": int(message_errors(cfg, msgs, bob.messages, "SM").sum()),
        "encoder_dead": int((~tr.ok).any(axis=0).sum()),
    }
