"""Entropy profiles, polarization index sets and rate accounting."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .source import LAYERS, make_layer, sample
from .transform import check_length, transform

EXACT = "exact"
MONTE_CARLO = "monte-carlo"
EXACT_MAX_N = 16
EXACT_MAX_ATOMS = 1 << 24
FORMAT_VERSION = 1


class ConstructionError(ValueError):
    """The index sets cannot satisfy a required inequality at this block length."""


def delta_n(N, beta=0.25):
    """Threshold ``2 ** -(N ** beta)``."""
    if not 0 < beta < 0.5:
        raise ValueError(f"beta must lie in (0, 0.5), got {beta}")
    return 2.0 ** -(N ** beta)


def hb_llr(llr):
    """Binary entropy (bits) of the posterior encoded by a natural-log LLR."""
    a = np.abs(np.asarray(llr, dtype=np.float64))
    with np.errstate(invalid="ignore", over="ignore"):
        e = np.exp(-a)
        h = (np.log1p(e) + a * e / (1.0 + e)) / math.log(2)
    return np.where(np.isfinite(a), h, 0.0)


@dataclass(frozen=True, eq=False)
class EntropyProfile:
    """Per-index estimates of ``H(bit i | earlier bits, side information)``.

    ``stderr`` is the per-index standard error and ``aggregate_se`` the
    standard error of the block average; both are zero for exact profiles.
    """

    layer: str
    N: int
    entropy: np.ndarray
    stderr: np.ndarray
    samples: int
    method: str
    aggregate_se: float = 0.0

    def __post_init__(self):
        for name in ("entropy", "stderr"):
            a = np.array(getattr(self, name), dtype=np.float64)
            if a.shape != (self.N,):
                raise ValueError(f"{name} must have shape ({self.N},)")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.method == EXACT and self.N > EXACT_MAX_N:
            raise ValueError(f"exact profiles are limited to N <= {EXACT_MAX_N}")
        if np.any(self.entropy < -1e-12) or np.any(self.entropy > 1 + 1e-12):
            raise ValueError("entropies must lie in [0, 1]")

    @property
    def n(self):
        return self.N.bit_length() - 1

    @property
    def mean(self):
        return float(self.entropy.mean())

    def to_dict(self):
        return {
            "layer": self.layer, "N": self.N, "method": self.method,
            "samples": self.samples, "aggregate_se": self.aggregate_se,
            "entropy": self.entropy.tolist(), "stderr": self.stderr.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["layer"], int(d["N"]), np.array(d["entropy"]), np.array(d["stderr"]),
                   int(d["samples"]), d["method"], float(d["aggregate_se"]))


def _trivial(layer, N):
    """Exact profile for layers whose posteriors are all 0/1 or all 1/2."""
    live = layer.joint.sum(axis=0) > 0
    llr = layer.llr[live]
    if np.all(np.isinf(llr)):
        return np.zeros(N)
    if np.all(llr == 0.0):
        return np.ones(N)
    return None


# --- exact profiles -----------------------------------------------------------

def _merge(bit, lam, prob):
    keep = prob > 0
    bit, lam, prob = bit[keep], lam[keep], prob[keep]
    key = np.where(np.isfinite(lam), np.round(lam, 10), lam)
    order = np.lexsort((key, bit))
    bit, key, prob = bit[order], key[order], prob[order]
    new = np.ones(bit.size, dtype=bool)
    new[1:] = (bit[1:] != bit[:-1]) | (key[1:] != key[:-1])
    starts = np.flatnonzero(new)
    return bit[starts], key[starts], np.add.reduceat(prob, starts)


def _combine(a, b, upper):
    """Law of the check (``upper=False``) or variable child of two independent atoms sets."""
    (b1, l1, p1), (b2, l2, p2) = a, b
    if b1.size * b2.size > EXACT_MAX_ATOMS:
        raise ValueError("exact profile support too large; use the Monte-Carlo method")
    B1, B2 = np.meshgrid(b1, b2, indexing="ij")
    L1, L2 = np.meshgrid(l1, l2, indexing="ij")
    P = np.outer(p1, p2)
    if upper:
        bit = B2
        lam = kernels.g_op(L1, L2, B1 ^ B2)
    else:
        bit = B1 ^ B2
        lam = kernels.f_op(L1, L2)
    return _merge(bit.ravel(), lam.ravel(), P.ravel())


def exact_profile(layer, N):
    """Exact per-index conditional entropies by recursion on the joint law of
    (true bit, posterior LLR), which is closed under the two SC combining steps.
    """
    N = check_length(N)
    if N > EXACT_MAX_N:
        raise ValueError(f"exact profiles are limited to N <= {EXACT_MAX_N}, got {N}")
    h = _trivial(layer, N)
    if h is None:
        llr = layer.llr
        t, s = np.nonzero(layer.joint > 0)
        base = _merge(t.astype(np.uint8), llr[s], layer.joint[t, s])
        n = N.bit_length() - 1
        h = np.empty(N)
        laws = {(): base}

        def law(path):
            if path not in laws:
                parent = law(path[:-1])
                laws[path] = _combine(parent, parent, path[-1])
            return laws[path]

        for i in range(N):
            path = tuple(bool((i >> (n - 1 - d)) & 1) for d in range(n))
            _, lam, p = law(path)
            h[i] = float(np.dot(p, hb_llr(lam)))
    h = np.clip(h, 0.0, 1.0)
    return EntropyProfile(layer.name, N, h, np.zeros(N), 0, EXACT, 0.0)


# --- Monte-Carlo profiles -------------------------------------------------------

class _Moments:
    """Running mean and centered second moment, merged chunk by chunk."""

    def __init__(self, width):
        self.n = 0
        self.mean = np.zeros(width)
        self.m2 = np.zeros(width)

    def add(self, rows):
        b = rows.shape[0]
        mean = rows.mean(axis=0)
        m2 = ((rows - mean) ** 2).sum(axis=0)
        tot = self.n + b
        d = mean - self.mean
        self.mean = self.mean + d * (b / tot)
        self.m2 = self.m2 + m2 + d * d * (self.n * b / tot)
        self.n = tot

    @property
    def stderr(self):
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


def _seqs(draws):
    return {v: draws[..., k] for k, v in enumerate("UVXYZ")}


def monte_carlo_profiles(source, N, samples=10_000, rng=None, layers=LAYERS, chunk=None, backend=None):
    """Monte-Carlo profiles for several layers from one shared set of samples.

    Each sample is an i.i.d. block drawn from the source; the per-index value
    is the binary entropy of the genie-aided SC posterior.
    """
    N = check_length(N)
    if samples < 2:
        raise ValueError("need at least two samples for a standard error")
    rng = np.random.default_rng(rng)
    objs = {name: make_layer(source, name) for name in layers}
    fixed = {name: _trivial(obj, N) for name, obj in objs.items()}
    live = [name for name in layers if fixed[name] is None]
    acc = {name: [_Moments(N), _Moments(1)] for name in live}
    chunk = chunk or max(1, min(samples, (1 << 21) // N))
    done = 0
    while done < samples and live:
        b = min(chunk, samples - done)
        draws = sample(source, b * N, rng).reshape(b, N, 5)
        seqs = _seqs(draws)
        for name in live:
            layer = objs[name]
            a = transform(seqs[layer.target])
            if layer.side:
                leaf = layer.leaf_llr(seqs)
            else:
                leaf = np.full((b, N), float(layer.llr[0]))
            h = hb_llr(kernels.genie_llr(leaf, a, backend=backend))
            acc[name][0].add(h)
            acc[name][1].add(h.sum(axis=1, keepdims=True))
        done += b
    out = {}
    for name in layers:
        if fixed[name] is not None:
            out[name] = EntropyProfile(name, N, fixed[name], np.zeros(N), samples, MONTE_CARLO, 0.0)
            continue
        per, tot = acc[name]
        out[name] = EntropyProfile(
            name, N, np.clip(per.mean, 0.0, 1.0), per.stderr, samples, MONTE_CARLO,
            float(tot.stderr[0] / N),
        )
    return out


def estimate_profile(source, layer, N, method=MONTE_CARLO, samples=10_000, rng=None, backend=None):
    """Profile of one layer by exact recursion or Monte-Carlo sampling."""
    if method == EXACT:
        return exact_profile(make_layer(source, layer), N)
    if method == MONTE_CARLO:
        return monte_carlo_profiles(source, N, samples, rng, layers=(layer,), backend=backend)[layer]
    raise ValueError(f"unknown method {method!r}")


def estimate_profiles(source, N, method=MONTE_CARLO, samples=10_000, rng=None, backend=None):
    """Profiles for every layer in :data:`LAYERS`."""
    if method == EXACT:
        return {name: exact_profile(make_layer(source, name), N) for name in LAYERS}
    if method == MONTE_CARLO:
        return monte_carlo_profiles(source, N, samples, rng, backend=backend)
    raise ValueError(f"unknown method {method!r}")


# --- index sets -------------------------------------------------------------------

def _idx(a):
    a = np.unique(np.asarray(a, dtype=np.int64))
    a.setflags(write=False)
    return a


_BASE = ("h_u", "v_u", "h_uy", "h_uz", "v_vu", "v_vuz", "h_vuy", "v_vuy", "v_xv", "v_xvz")
_DERIVED = ("m_uvz", "i_uy", "i_uz", "a_uyz", "b_vuy")


@dataclass(frozen=True, eq=False)
class IndexSetFamily:
    """Every index set used by the chained construction (0-based, sorted).

    Naming: ``h_`` high entropy (> delta), ``v_`` very high entropy
    (> 1 - delta); the suffix lists target then side variables, e.g.
    ``v_vuz`` is the very-high set of layer V given (U, Z).
    """

    N: int
    beta: float
    delta: float
    h_u: np.ndarray
    v_u: np.ndarray
    h_uy: np.ndarray
    h_uz: np.ndarray
    v_vu: np.ndarray
    v_vuz: np.ndarray
    h_vuy: np.ndarray
    v_vuy: np.ndarray
    v_xv: np.ndarray
    v_xvz: np.ndarray
    m_uvz: np.ndarray = field(default=None)
    i_uy: np.ndarray = field(default=None)
    i_uz: np.ndarray = field(default=None)
    a_uyz: np.ndarray = field(default=None)
    b_vuy: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in _BASE:
            object.__setattr__(self, name, _idx(getattr(self, name)))
        d = np.setdiff1d
        derived = {
            "m_uvz": d(self.v_vu, self.v_vuz),
            "i_uy": d(self.v_u, self.h_uy),
            "i_uz": d(self.v_u, self.h_uz),
        }
        for name, val in derived.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, _idx(val))
            else:
                object.__setattr__(self, name, _idx(getattr(self, name)))
        if self.a_uyz is None:
            need = self.i_uy_only.size
            pool = d(self.i_uz, self.i_uy)
            if pool.size < need:
                raise ConstructionError(
                    f"|I_UZ \\ I_UY| = {pool.size} < |I_UY \\ I_UZ| = {need}: "
                    "I(U;Y) <= I(U;Z) fails at this block length"
                )
            object.__setattr__(self, "a_uyz", _idx(pool[:need]))
        else:
            object.__setattr__(self, "a_uyz", _idx(self.a_uyz))
        if self.b_vuy is None:
            need = self.psi_vu.size
            if self.v_vuz.size < need:
                raise ConstructionError(
                    f"|V_V|UZ| = {self.v_vuz.size} < |Psi^V|U| = {need}: "
                    "I(V;Y|U) - I(V;Z|U) > 0 fails at this block length"
                )
            object.__setattr__(self, "b_vuy", _idx(self.v_vuz[:need]))
        else:
            object.__setattr__(self, "b_vuy", _idx(self.b_vuy))
        problems = self.check()
        if problems:
            raise ConstructionError("; ".join(problems))

    # positions used by the encoders
    @property
    def i_both(self):
        return np.intersect1d(self.i_uy, self.i_uz)

    @property
    def i_uy_only(self):
        return np.setdiff1d(self.i_uy, self.i_uz)

    @property
    def psi_u1(self):
        """Reused uniform bits of the common layer (V_U minus I_UY)."""
        return np.setdiff1d(self.v_u, self.i_uy)

    @property
    def phi_u(self):
        return np.setdiff1d(np.union1d(self.h_uy, self.h_uz), self.v_u)

    @property
    def psi_vu(self):
        hv = np.setdiff1d(self.h_vuy, self.v_vuy)
        return np.union1d(self.v_vuy, np.intersect1d(hv, self.v_vu))

    @property
    def phi_vu(self):
        hv = np.setdiff1d(self.h_vuy, self.v_vuy)
        return np.setdiff1d(hv, self.v_vu)

    def check(self):
        """List of violated structural invariants (empty when consistent)."""
        sub = lambda a, b: np.setdiff1d(a, b).size == 0  # noqa: E731
        out = []
        for name in _BASE + _DERIVED:
            a = getattr(self, name)
            if a.size and (a.min() < 0 or a.max() >= self.N):
                out.append(f"{name} has indices outside [0, {self.N})")
        pairs = [("v_u", "h_u"), ("v_vuy", "h_vuy"), ("v_vuz", "v_vu"), ("v_xvz", "v_xv")]
        for a, b in pairs:
            if not sub(getattr(self, a), getattr(self, b)):
                out.append(f"{a} is not a subset of {b}")
        d = np.setdiff1d
        if not np.array_equal(self.i_uy, d(self.v_u, self.h_uy)):
            out.append("i_uy != v_u \\ h_uy")
        if not np.array_equal(self.i_uz, d(self.v_u, self.h_uz)):
            out.append("i_uz != v_u \\ h_uz")
        if not np.array_equal(self.m_uvz, d(self.v_vu, self.v_vuz)):
            out.append("m_uvz != v_vu \\ v_vuz")
        if not sub(self.a_uyz, d(self.i_uz, self.i_uy)) or self.a_uyz.size != self.i_uy_only.size:
            out.append("a_uyz must be a subset of i_uz \\ i_uy of size |i_uy \\ i_uz|")
        if not sub(self.b_vuy, self.v_vuz) or self.b_vuy.size != self.psi_vu.size:
            out.append("b_vuy must be a subset of v_vuz of size |psi_vu|")
        return out

    def sizes(self):
        names = _BASE + _DERIVED
        extra = {"i_both": self.i_both, "psi_u1": self.psi_u1, "phi_u": self.phi_u,
                 "psi_vu": self.psi_vu, "phi_vu": self.phi_vu}
        out = {name: int(getattr(self, name).size) for name in names}
        out.update({k: int(v.size) for k, v in extra.items()})
        return out

    def to_dict(self):
        d = {"N": self.N, "beta": self.beta, "delta": self.delta}
        d.update({name: getattr(self, name).tolist() for name in _BASE + _DERIVED})
        return d

    @classmethod
    def from_dict(cls, d):
        kw = {name: d[name] for name in _BASE + _DERIVED}
        return cls(int(d["N"]), float(d["beta"]), float(d["delta"]), **kw)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()


def sets_from_thresholds(N, beta, profiles):
    """Raw threshold sets (no nesting repair); ``profiles`` maps layer to entropies."""
    delta = delta_n(N, beta)
    hi = lambda name: np.flatnonzero(np.asarray(profiles[name]) > delta)  # noqa: E731
    vh = lambda name: np.flatnonzero(np.asarray(profiles[name]) > 1 - delta)  # noqa: E731
    return delta, {
        "h_u": hi("U"), "v_u": vh("U"), "h_uy": hi("U|Y"), "h_uz": hi("U|Z"),
        "v_vu": vh("V|U"), "v_vuz": vh("V|UZ"), "h_vuy": hi("V|UY"), "v_vuy": vh("V|UY"),
        "v_xv": vh("X|V"), "v_xvz": vh("X|VZ"),
    }


def build_sets(profiles, beta=0.25):
    """Threshold the profiles and derive every set of the construction.

    Very-high sets that must be nested are intersected with their parents,
    which only matters when sampling noise breaks the true ordering.

    Raises
    ------
    ConstructionError
        When an inequality needed by the chaining fails at this block length.
    """
    missing = [name for name in LAYERS if name not in profiles]
    if missing:
        raise ValueError(f"missing profiles for layers {missing}")
    Ns = {p.N for p in profiles.values()}
    if len(Ns) != 1:
        raise ValueError(f"profiles disagree on N: {sorted(Ns)}")
    N = Ns.pop()
    delta, raw = sets_from_thresholds(N, beta, {k: p.entropy for k, p in profiles.items()})
    raw["v_vuz"] = np.intersect1d(raw["v_vuz"], raw["v_vu"])
    raw["v_vuy"] = np.intersect1d(raw["v_vuy"], raw["v_vu"])
    raw["v_xvz"] = np.intersect1d(raw["v_xvz"], raw["v_xv"])
    return IndexSetFamily(N, beta, delta, **raw)


# --- rates ----------------------------------------------------------------------

@dataclass(frozen=True)
class RateReport:
    """Rates in bits per channel use, kept as exact fractions."""

    N: int
    k: int
    r_o: Fraction
    r_s: Fraction
    r_m: Fraction
    r_r: Fraction
    seed_psi: Fraction
    seed_phi: Fraction
    public_rate: Fraction
    codebook_u: Fraction

    @property
    def seed_rate(self):
        return self.seed_psi + self.seed_phi

    @property
    def sum_om_s(self):
        return self.r_o + self.r_m + self.r_s

    @property
    def sum_m_r(self):
        return self.r_m + self.r_r

    def as_floats(self):
        keys = ("r_o", "r_s", "r_m", "r_r", "seed_rate", "seed_psi", "seed_phi",
                "public_rate", "codebook_u", "sum_om_s", "sum_m_r")
        return {k: float(getattr(self, k)) for k in keys}


def rate_report(sets, k):
    """Rates of a k-block session built on ``sets``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    N = sets.N
    kN = k * N
    sz = sets.sizes()
    psi_u1 = sets.v_u.size - (sets.i_both.size if k == 1 else sets.i_uy.size)
    r_o = Fraction((k - 1) * sz["i_uy"] + sz["i_both"], kN)
    r_s = Fraction(sz["v_vuz"] + (k - 1) * (sz["v_vuz"] - sz["b_vuy"]), kN)
    r_m = Fraction(sz["m_uvz"], N)
    vx_only = np.setdiff1d(sets.v_xv, sets.v_xvz).size
    r_r = Fraction(sz["v_xv"] + (k - 1) * vx_only, kN)
    return RateReport(
        N=N, k=k, r_o=r_o, r_s=r_s, r_m=r_m, r_r=r_r,
        seed_psi=Fraction(sz["psi_vu"], kN),
        seed_phi=Fraction(k * sz["phi_vu"], kN),
        public_rate=Fraction(psi_u1 + k * sz["phi_u"], kN),
        codebook_u=Fraction(psi_u1, kN),
    )


# --- serialization ----------------------------------------------------------------

def dump_construction(profiles, sets, meta=None):
    """Versioned JSON text holding profiles and the set family."""
    doc = {
        "format": "bccpolar-construction",
        "version": FORMAT_VERSION,
        "meta": meta or {},
        "profiles": {k: p.to_dict() for k, p in sorted(profiles.items())},
        "sets": sets.to_dict() if sets is not None else None,
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def load_construction(text):
    doc = json.loads(text)
    if doc.get("format") != "bccpolar-construction":
        raise ValueError("not a construction file")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported construction version {doc.get('version')}")
    profiles = {k: EntropyProfile.from_dict(v) for k, v in doc["profiles"].items()}
    sets = IndexSetFamily.from_dict(doc["sets"]) if doc["sets"] is not None else None
    return profiles, sets, doc["meta"]


def profiles_csv(profiles, header=()):
    """CSV of per-index entropies, one row per (layer, index)."""
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layer", "N", "method", "samples", "index", "entropy", "stderr"])
    for name in LAYERS:
        if name not in profiles:
            continue
        p = profiles[name]
        for i in range(p.N):
            w.writerow([name, p.N, p.method, p.samples, i, f"{p.entropy[i]:.12g}", f"{p.stderr[i]:.6g}"])
    return buf.getvalue()
