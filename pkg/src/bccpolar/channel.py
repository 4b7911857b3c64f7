"""Memoryless broadcast channel p(y, z | x)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class BroadcastChannel:
    """Joint conditional law of (Y, Z) given binary X.

    ``matrix[x, y, z]``; rows must sum to one. Y and Z are drawn jointly,
    so correlated outputs are reproduced exactly.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 3 or m.shape[0] != 2:
            raise ValueError("matrix must have shape (2, |Y|, |Z|)")
        if (m < 0).any() or np.any(np.abs(m.sum(axis=(1, 2)) - 1) > 1e-12):
            raise ValueError("each row p(., . | x) must be a probability table")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_source(cls, source):
        return cls(source.factor_yz_given_x)

    @property
    def card_y(self):
        return self.matrix.shape[1]

    @property
    def card_z(self):
        return self.matrix.shape[2]

    def with_eve(self, eve):
        """Replace Eve's component by ``eve[x, z']``, independent of Y given X."""
        eve = np.asarray(eve, dtype=np.float64)
        if eve.ndim != 2 or eve.shape[0] != 2:
            raise ValueError("eve must have shape (2, |Z'|)")
        bob = self.matrix.sum(axis=2)
        return BroadcastChannel(bob[:, :, None] * eve[:, None, :])

    def degrade_eve(self, garbling):
        """Pass Z through ``garbling[z, z']``; the new Eve is stochastically degraded."""
        w = np.asarray(garbling, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != self.card_z:
            raise ValueError("garbling must have |Z| rows")
        return BroadcastChannel(np.einsum("xyz,zw->xyw", self.matrix, w))

    def transmit(self, x, rng):
        """Draw (y, z) symbol by symbol for an int array ``x`` of any shape."""
        rng = np.random.default_rng(rng)
        x = np.asarray(x, dtype=np.int64)
        cy, cz = self.card_y, self.card_z
        cdf = np.cumsum(self.matrix.reshape(2, -1), axis=1)
        cdf[:, -1] = 1.0
        r = rng.random(x.shape)
        flat = np.empty(x.shape, dtype=np.int64)
        for xv in (0, 1):
            sel = x == xv
            flat[sel] = np.searchsorted(cdf[xv], r[sel], side="right")
        return (flat // cz).astype(np.uint8), (flat % cz).astype(np.uint8)


def transmit(channel, x, rng):
    return channel.transmit(x, rng)
