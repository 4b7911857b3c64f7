"""Pure-numpy implementations of the polar kernels.

Every function takes a leading batch axis and loops in Python only over
tree levels or bit indices, never over the batch.
"""

import numpy as np

FIXED, UNIFORM, SAMPLE, DECIDE = 0, 1, 2, 3


def butterfly(bits):
    """Return ``bits @ G_n`` over GF(2) for a (B, N) uint8 array."""
    out = np.array(bits, dtype=np.uint8, copy=True)
    B, N = out.shape
    span = 1
    while span < N:
        view = out.reshape(B, N // (2 * span), 2, span)
        view[:, :, 0, :] ^= view[:, :, 1, :]
        span *= 2
    return out


def f_op(a, b):
    """Check-node LLR combination (exact, log-domain)."""
    with np.errstate(invalid="ignore", over="ignore"):
        s = np.sign(a) * np.sign(b)
        m = np.minimum(np.abs(a), np.abs(b))
        corr = np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))
        corr = np.where(np.isfinite(a) & np.isfinite(b), corr, 0.0)
        return s * m + corr


def g_op(a, b, bit):
    with np.errstate(invalid="ignore"):
        return b + (1.0 - 2.0 * bit) * a


def genie_llr(leaf, u):
    """Decision LLRs for every index when the true prefix is known.

    ``leaf`` is (B, N) raw-domain LLRs, ``u`` the (B, N) polarized bits.
    Runs level by level, so the cost is O(N log N) numpy work per batch.
    """
    leaf = np.asarray(leaf, dtype=np.float64)
    u = np.asarray(u, dtype=np.uint8)
    B, N = leaf.shape
    # partial[s] holds u transformed within aligned segments of length s
    partial = {1: u}
    cur = u.copy()
    span = 1
    while span < N:
        view = cur.reshape(B, N // (2 * span), 2, span)
        view[:, :, 0, :] ^= view[:, :, 1, :]
        span *= 2
        partial[span] = cur.copy()

    L = leaf.reshape(B, 1, N)
    m = N
    while m > 1:
        half = m // 2
        segs = L.shape[1]
        x = L.reshape(B, segs, 2, half)
        ps = partial[half].reshape(B, segs, 2, half)[:, :, 0, :]
        child = np.empty((B, segs, 2, half))
        child[:, :, 0, :] = f_op(x[:, :, 0, :], x[:, :, 1, :])
        child[:, :, 1, :] = g_op(x[:, :, 0, :], x[:, :, 1, :], ps)
        L = child.reshape(B, segs * 2, half)
        m = half
    return L.reshape(B, N)


def p_one(llr):
    """Posterior P(bit = 1) from natural-log LLR log(p0/p1)."""
    with np.errstate(over="ignore", invalid="ignore"):
        return 1.0 / (1.0 + np.exp(llr))


def sc_run(leaf, actions, fixed, rand):
    """Sequential successive-cancellation pass over a batch.

    Parameters
    ----------
    leaf : (B, N) float64
        Raw-domain LLRs.
    actions : (N,) or (B, N) int8
        FIXED, UNIFORM, SAMPLE or DECIDE per index.
    fixed : (B, N) uint8
        Bit values used where the action is FIXED.
    rand : (B, N) float64
        Uniform draws in [0, 1) consumed by UNIFORM and SAMPLE.

    Returns
    -------
    u : (B, N) uint8
    llr : (B, N) float64
        Decision LLR at every index given the emitted prefix.
    ok : (B,) bool
        False when the emitted prefix has zero probability under the model.
        From that point on, SAMPLE and DECIDE emit 0.
    """
    leaf = np.asarray(leaf, dtype=np.float64)
    B, N = leaf.shape
    n = N.bit_length() - 1
    actions = np.broadcast_to(np.asarray(actions, dtype=np.int8), (B, N))
    fixed = np.asarray(fixed, dtype=np.uint8)
    rand = np.asarray(rand, dtype=np.float64)

    L = [None] * (n + 1)
    L[0] = leaf
    P = [np.zeros((B, N >> d), dtype=np.uint8) for d in range(n + 1)]
    u = np.zeros((B, N), dtype=np.uint8)
    llr = np.empty((B, N))
    ok = np.ones(B, dtype=bool)

    for i in range(N):
        start = 0 if i == 0 else n - 1 - ((i & -i).bit_length() - 1)
        for d in range(start, n):
            m = N >> (d + 1)
            a, b = L[d][:, :m], L[d][:, m:]
            if (i >> (n - 1 - d)) & 1:
                L[d + 1] = g_op(a, b, P[d + 1])
            else:
                L[d + 1] = f_op(a, b)
        lam = L[n][:, 0]
        llr[:, i] = lam
        p1 = p_one(lam)
        act = actions[:, i]
        bit = np.where(
            act == FIXED,
            fixed[:, i],
            np.where(
                act == UNIFORM,
                rand[:, i] < 0.5,
                np.where(act == SAMPLE, rand[:, i] < p1, lam < 0.0),
            ),
        ).astype(np.uint8)
        # after an impossible prefix, model-driven actions emit 0
        model = (act == SAMPLE) | (act == DECIDE)
        bit[(np.isnan(lam) | ~ok) & model] = 0
        bad = np.isnan(lam) | ((bit == 1) & (lam == np.inf)) | ((bit == 0) & (lam == -np.inf))
        ok &= ~bad
        u[:, i] = bit

        tmp = bit[:, None]
        for d in range(n, 0, -1):
            if ((i >> (n - d)) & 1) == 0:
                P[d] = tmp
                break
            tmp = np.concatenate([tmp ^ P[d], tmp], axis=1)
    return u, llr, ok
