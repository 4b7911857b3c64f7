"""Polar transform and the successive-cancellation engine.

Indices are 0-based throughout. Vectors may carry a leading batch axis; all
functions accept ``(N,)`` or ``(B, N)`` arrays and keep the shape they were
given.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from . import kernels
from .kernels import DECIDE, FIXED, SAMPLE, UNIFORM
from .source import Layer

ACTION_NAMES = {FIXED: "FIXED", UNIFORM: "UNIFORM", SAMPLE: "SAMPLE", DECIDE: "DECIDE"}


class ZeroProbabilityPrefix(ValueError):
    """The conditioning prefix has probability zero under the layer model."""


def check_length(N):
    N = int(N)
    if N < 1 or N & (N - 1):
        raise ValueError(f"length must be a power of two, got {N}")
    return N


def transform(x, backend=None):
    """Return ``x @ G_n`` over GF(2), with ``G_n = [[1,0],[1,1]]^{(x)n}``.

    The transform is its own inverse.
    """
    x = np.asarray(x)
    check_length(x.shape[-1])
    if x.size and (x.max(initial=0) > 1 or x.min(initial=0) < 0):
        raise ValueError("entries must be bits")
    return kernels.butterfly(x.astype(np.uint8), backend=backend)


@dataclass(frozen=True, eq=False)
class ScContext:
    """A layer together with concrete side-information sequences.

    Parameters
    ----------
    layer : Layer
    side : mapping of variable name to int arrays of shape (N,) or (B, N)
        Must cover every variable in ``layer.side``.
    """

    layer: Layer
    side: Mapping[str, np.ndarray]
    leaf: np.ndarray = None

    def __post_init__(self):
        missing = [v for v in self.layer.side if v not in self.side]
        if missing:
            raise ValueError(f"layer {self.layer.name} needs side information {missing}")
        shapes = {np.shape(self.side[v]) for v in self.layer.side}
        if len(shapes) > 1:
            raise ValueError(f"side sequences differ in shape: {sorted(shapes)}")
        if self.leaf is None:
            if not self.layer.side:
                raise ValueError("unconditioned layer needs the block length; use ScContext.blank")
            leaf = self.layer.leaf_llr(self.side)
            object.__setattr__(self, "leaf", np.asarray(leaf, dtype=np.float64))
        check_length(self.leaf.shape[-1])

    @classmethod
    def blank(cls, layer, N, batch=None):
        """Context for a layer without side information."""
        shape = (N,) if batch is None else (batch, N)
        leaf = np.full(shape, float(layer.llr[0]))
        return cls(layer, {}, leaf)

    @property
    def N(self):
        return self.leaf.shape[-1]


@dataclass(frozen=True, eq=False)
class IndexRule:
    """Per-index action (FIXED, UNIFORM, SAMPLE or DECIDE) plus FIXED bit values.

    ``fixed`` may carry a batch axis when different sessions fix different
    bits; ``actions`` is shared.
    """

    actions: np.ndarray
    fixed: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.actions, dtype=np.int8)
        if a.ndim != 1:
            raise ValueError("actions must be one-dimensional")
        if not np.isin(a, list(ACTION_NAMES)).all():
            raise ValueError("unknown action code")
        check_length(a.size)
        f = np.asarray(self.fixed, dtype=np.uint8)
        if f.shape[-1] != a.size:
            raise ValueError("fixed bits and actions differ in length")
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "fixed", f)

    @classmethod
    def build(cls, N, default=SAMPLE, fixed=None, uniform=(), sample=(), decide=()):
        """Assemble a rule; ``fixed`` maps positions to bit values (arrays allowed)."""
        actions = np.full(N, default, dtype=np.int8)
        vals = np.zeros(N, dtype=np.uint8)
        if fixed:
            pos = np.asarray(list(fixed.keys()) if isinstance(fixed, dict) else fixed[0], dtype=np.int64)
            bits = np.asarray(list(fixed.values()) if isinstance(fixed, dict) else fixed[1], dtype=np.uint8)
            if bits.ndim == 2:
                vals = np.zeros((bits.shape[0], N), dtype=np.uint8)
                vals[:, pos] = bits
            else:
                vals[pos] = bits
            actions[pos] = FIXED
        for code, where in ((UNIFORM, uniform), (SAMPLE, sample), (DECIDE, decide)):
            actions[np.asarray(where, dtype=np.int64)] = code
        return cls(actions, vals)

    def positions(self, action):
        return np.flatnonzero(self.actions == action)


class ScResult(NamedTuple):
    bits: np.ndarray
    llr: np.ndarray
    ok: np.ndarray


def _run(ctx, actions, fixed, rand, backend):
    leaf = ctx.leaf
    squeeze = leaf.ndim == 1
    B = 1 if squeeze else leaf.shape[0]
    if np.ndim(fixed) == 1:
        fixed = np.broadcast_to(fixed, (B, leaf.shape[-1]))
    u, llr, ok = kernels.sc_run(leaf, actions, fixed, rand, backend=backend)
    if squeeze:
        return ScResult(u[0], llr[0], bool(ok[0]))
    return ScResult(u, llr, ok)


def sc_posterior(ctx, prefix, i, backend=None):
    """P(bit ``i`` = 1 | bits ``0..i-1`` = ``prefix``, side information).

    Raises
    ------
    ZeroProbabilityPrefix
        If the prefix is impossible under the layer model.
    """
    if ctx.leaf.ndim != 1:
        raise ValueError("sc_posterior takes a single (unbatched) context")
    N = ctx.N
    prefix = np.asarray(prefix, dtype=np.uint8)
    if not 0 <= i < N or prefix.size != i:
        raise ValueError(f"need 0 <= i < {N} and a prefix of length i")
    actions = np.full(N, DECIDE, dtype=np.int8)
    actions[:i] = FIXED
    fixed = np.zeros(N, dtype=np.uint8)
    fixed[:i] = prefix
    res = _run(ctx, actions, fixed, np.zeros(N), backend)
    lam = res.llr[: i + 1]
    pre = lam[:i]
    bad = np.isnan(lam).any() or np.any((prefix == 1) & (pre == np.inf)) or np.any((prefix == 0) & (pre == -np.inf))
    if bad:
        raise ZeroProbabilityPrefix(f"prefix of length {i} has zero probability")
    return float(kernels.p_one(lam[i]))


def sc_decode(ctx, rule, backend=None):
    """SC decoding: FIXED positions copy, all others take the MAP bit (ties to 0).

    Returns an :class:`ScResult`; ``ok`` is False where the run hit a
    zero-probability prefix.
    """
    actions = np.where(rule.actions == FIXED, FIXED, DECIDE).astype(np.int8)
    shape = ctx.leaf.shape
    return _run(ctx, actions, rule.fixed, np.zeros(shape), backend)


def sc_encode(ctx, rule, rng, backend=None, full=False):
    """SC sampling: FIXED copies, UNIFORM flips a fair coin, SAMPLE draws from the posterior.

    One uniform number is drawn per index regardless of action, so the
    output is a deterministic function of ``rng``'s state and the inputs.
    """
    rng = np.random.default_rng(rng)
    rand = rng.random(ctx.leaf.shape)
    res = _run(ctx, rule.actions, rule.fixed, rand, backend)
    return res if full else res.bits
