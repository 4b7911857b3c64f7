"""Numba-compiled kernels. Same contracts as :mod:`bccpolar.kernels._numpy`."""

import math
import warnings

import numpy as np
from numba import njit, prange

warnings.filterwarnings("ignore", message=".*TBB.*", module="numba")

FIXED, UNIFORM, SAMPLE, DECIDE = 0, 1, 2, 3


@njit(cache=True)
def _f(a, b):
    if math.isnan(a) or math.isnan(b):
        return math.nan
    s = 1.0
    if a < 0.0:
        s = -s
    elif a == 0.0:
        return 0.0
    if b < 0.0:
        s = -s
    elif b == 0.0:
        return 0.0
    m = min(abs(a), abs(b))
    if math.isinf(a) or math.isinf(b):
        return s * m
    return s * m + math.log1p(math.exp(-abs(a + b))) - math.log1p(math.exp(-abs(a - b)))


@njit(cache=True)
def _g(a, b, bit):
    if bit:
        return b - a
    return b + a


@njit(cache=True)
def _p_one(lam):
    # same expression as the numpy path so SAMPLE draws agree bit for bit
    return 1.0 / (1.0 + math.exp(lam))


@njit(cache=True, parallel=True)
def butterfly(bits):
    B, N = bits.shape
    out = bits.copy()
    for r in prange(B):
        span = 1
        while span < N:
            for start in range(0, N, 2 * span):
                for j in range(start, start + span):
                    out[r, j] ^= out[r, j + span]
            span *= 2
    return out


@njit(cache=True)
def _sc_single(leaf, actions, fixed, rand, u, llr):
    N = leaf.shape[0]
    n = 0
    while (1 << n) < N:
        n += 1
    L = np.empty((n + 1, N))
    P = np.zeros((n + 1, N), dtype=np.uint8)
    tmp = np.empty(N, dtype=np.uint8)
    for j in range(N):
        L[0, j] = leaf[j]
    ok = True
    for i in range(N):
        if i == 0:
            start = 0
        else:
            p = 0
            while ((i >> p) & 1) == 0:
                p += 1
            start = n - 1 - p
        for d in range(start, n):
            m = N >> (d + 1)
            if (i >> (n - 1 - d)) & 1:
                for j in range(m):
                    L[d + 1, j] = _g(L[d, j], L[d, j + m], P[d + 1, j])
            else:
                for j in range(m):
                    L[d + 1, j] = _f(L[d, j], L[d, j + m])
        lam = L[n, 0]
        llr[i] = lam
        act = actions[i]
        nan = math.isnan(lam)
        p1 = _p_one(lam)
        if act == FIXED:
            bit = fixed[i]
        elif act == UNIFORM:
            bit = 1 if rand[i] < 0.5 else 0
        elif nan or not ok:
            bit = 0
        elif act == SAMPLE:
            bit = 1 if rand[i] < p1 else 0
        else:
            bit = 1 if lam < 0.0 else 0
        if nan or (bit == 1 and lam == math.inf) or (bit == 0 and lam == -math.inf):
            ok = False
        u[i] = bit

        tmp[0] = bit
        size = 1
        for d in range(n, 0, -1):
            if ((i >> (n - d)) & 1) == 0:
                for j in range(size):
                    P[d, j] = tmp[j]
                break
            for j in range(size):
                tmp[j + size] = tmp[j]
                tmp[j] ^= P[d, j]
            size *= 2
    return ok


@njit(cache=True, parallel=True)
def sc_run(leaf, actions, fixed, rand):
    B, N = leaf.shape
    u = np.zeros((B, N), dtype=np.uint8)
    llr = np.empty((B, N))
    ok = np.ones(B, dtype=np.bool_)
    for r in prange(B):
        ok[r] = _sc_single(leaf[r], actions[r], fixed[r], rand[r], u[r], llr[r])
    return u, llr, ok


@njit(cache=True, parallel=True)
def genie_llr(leaf, u):
    B, N = leaf.shape
    llr = np.empty((B, N))
    actions = np.zeros(N, dtype=np.int8)
    rand = np.zeros(N)
    for r in prange(B):
        scratch = np.empty(N, dtype=np.uint8)
        _sc_single(leaf[r], actions, u[r], rand, scratch, llr[r])
    return llr
