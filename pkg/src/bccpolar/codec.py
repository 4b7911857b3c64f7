"""Chained k-block encoders and the three SC decoders.

Every block of every layer is described by a :class:`BlockRule`: a list of
assignments saying which polarized positions carry message bits, which copy
bits from another block's polarized vector, and which take fresh fair coins.
Everything else is drawn from the model posterior. The same rules drive the
batched encoder here and the exact enumeration in :mod:`bccpolar.oracle`.

Blocks are numbered 1..k; bit positions are 0-based.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .kernels import DECIDE, FIXED, SAMPLE, UNIFORM
from .source import make_layer
from .transform import transform

ENCODER_LAYERS = {"a": "U", "b": "V|U", "t": "X|V"}
MESSAGES = ("O", "S", "M", "R")


@dataclass(frozen=True)
class Assign:
    """One group of positions in a block rule.

    kind is ``"message"`` (bits of message ``label``), ``"copy"`` (bits of
    polarized vector ``label`` = (name, block) at positions ``src``) or
    ``"uniform"`` (fresh fair coins).
    """

    kind: str
    dst: np.ndarray
    label: object = None
    src: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "dst", np.asarray(self.dst, dtype=np.int64))
        if self.src is not None:
            object.__setattr__(self, "src", np.asarray(self.src, dtype=np.int64))
            if self.src.shape != self.dst.shape:
                raise ValueError("copy source and destination differ in size")


@dataclass(frozen=True)
class BlockRule:
    vector: str  # "a", "b" or "t"
    block: int
    N: int
    assigns: tuple

    @property
    def layer(self):
        return ENCODER_LAYERS[self.vector]

    def actions(self):
        act = np.full(self.N, SAMPLE, dtype=np.int8)
        for a in self.assigns:
            act[a.dst] = UNIFORM if a.kind == "uniform" else FIXED
        return act

    def message(self, label):
        for a in self.assigns:
            if a.kind == "message" and a.label == label:
                return a.dst
        return np.zeros(0, dtype=np.int64)

    def copies(self):
        return [a for a in self.assigns if a.kind == "copy"]

    def partition(self):
        """Map each position to the kind of its assignment (machine-checkable)."""
        out = np.full(self.N, "sample", dtype=object)
        seen = np.zeros(self.N, dtype=int)
        for a in self.assigns:
            out[a.dst] = a.kind if a.kind != "message" else f"message:{a.label}"
            seen[a.dst] += 1
        if seen.max(initial=0) > 1:
            raise AssertionError(f"overlapping assignments in rule {self.vector}{self.block}")
        return out


def _diff(a, *bs):
    for b in bs:
        a = np.setdiff1d(a, b)
    return a


def common_rule(sets, i, k):
    N = sets.N
    A = sets.a_uyz
    if k == 1:
        return BlockRule("a", 1, N, (
            Assign("message", sets.i_both, ("O", 1)),
            Assign("uniform", _diff(sets.v_u, sets.i_both)),
        ))
    if i == 1:
        return BlockRule("a", 1, N, (
            Assign("message", sets.i_uy, ("O", 1)),
            Assign("uniform", sets.psi_u1),
        ))
    if i < k:
        reuse = _diff(sets.v_u, sets.i_uy, A)
        return BlockRule("a", i, N, (
            Assign("message", sets.i_uy, ("O", i)),
            Assign("copy", A, ("a", i - 1), sets.i_uy_only),
            Assign("copy", reuse, ("a", 1), reuse),
        ))
    # last block: positions I_UY \ I_UZ take the block-1 bits left unused at A
    keep = _diff(sets.v_u, sets.i_uy, A)
    dst = np.concatenate([keep, sets.i_uy_only])
    src = np.concatenate([keep, A])
    order = np.argsort(dst)
    return BlockRule("a", k, N, (
        Assign("message", sets.i_both, ("O", k)),
        Assign("copy", A, ("a", k - 1), sets.i_uy_only),
        Assign("copy", dst[order], ("a", 1), src[order]),
    ))


def secret_rule(sets, i):
    N = sets.N
    if i == 1:
        return BlockRule("b", 1, N, (
            Assign("message", sets.v_vuz, ("S", 1)),
            Assign("message", sets.m_uvz, ("M", 1)),
        ))
    return BlockRule("b", i, N, (
        Assign("message", _diff(sets.v_vuz, sets.b_vuy), ("S", i)),
        Assign("copy", sets.b_vuy, ("b", i - 1), sets.psi_vu),
        Assign("message", sets.m_uvz, ("M", i)),
    ))


def prefix_rule(sets, i):
    N = sets.N
    r = _diff(sets.v_xv, sets.v_xvz)
    if i == 1:
        return BlockRule("t", 1, N, (
            Assign("uniform", sets.v_xvz),
            Assign("message", r, ("R", 1)),
        ))
    return BlockRule("t", i, N, (
        Assign("copy", sets.v_xvz, ("t", i - 1), sets.v_xvz),
        Assign("message", r, ("R", i)),
    ))


@dataclass(frozen=True, eq=False)
class ChainConfig:
    """Everything a session needs: the source, the set family and k."""

    source: object
    sets: object
    k: int
    rules: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        rules = {}
        for i in range(1, self.k + 1):
            rules["a", i] = common_rule(self.sets, i, self.k)
            rules["b", i] = secret_rule(self.sets, i)
            rules["t", i] = prefix_rule(self.sets, i)
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "layers", {
            name: make_layer(self.source, name) for name in ("U", "V|U", "X|V", "U|Y", "U|Z", "V|UY", "V|UZ")
        })

    @property
    def N(self):
        return self.sets.N

    def message_length(self, label, i):
        vec = "a" if label == "O" else "t" if label == "R" else "b"
        return int(self.rules[vec, i].message((label, i)).size)

    def public_positions(self):
        """(block-1 positions of Psi^U_1, positions of each Phi^U_i)."""
        return self.rules["a", 1].assigns[1].dst, self.sets.phi_u

    def public_size(self):
        psi, phi = self.public_positions()
        return int(psi.size + self.k * phi.size)

    def seed_size(self):
        return int(self.sets.psi_vu.size + self.k * self.sets.phi_vu.size)

    def digest(self):
        h = hashlib.sha256(self.sets.digest())
        h.update(self.source.digest().encode())
        h.update(struct.pack("<I", self.k))
        return h.digest()


def random_messages(config, batch, rng):
    """Uniform message bits for every label and block, shaped (batch, length)."""
    rng = np.random.default_rng(rng)
    out = {}
    for label in MESSAGES:
        for i in range(1, config.k + 1):
            out[label, i] = rng.integers(0, 2, size=(batch, config.message_length(label, i)), dtype=np.uint8)
    return out


def _fixed_bits(rule, batch, messages, vectors):
    fixed = np.zeros((batch, rule.N), dtype=np.uint8)
    for a in rule.assigns:
        if a.kind == "message":
            bits = np.asarray(messages[a.label], dtype=np.uint8)
            if bits.shape != (batch, a.dst.size):
                raise ValueError(f"message {a.label} needs shape {(batch, a.dst.size)}, got {bits.shape}")
            fixed[:, a.dst] = bits
        elif a.kind == "copy":
            if a.label not in vectors:
                raise ValueError(f"rule {rule.vector}{rule.block} needs vector {a.label}")
            fixed[:, a.dst] = vectors[a.label][:, a.src]
    return fixed


def layer_leaf(layer, seqs, batch, N):
    if layer.side:
        return layer.leaf_llr(seqs).astype(np.float64)
    return np.full((batch, N), float(layer.llr[0]))


@dataclass
class Transcript:
    """One batch of encoded sessions.

    Polarized vectors ``a``, ``b``, ``t`` and raw vectors ``u``, ``v``, ``x``
    are (k, B, N); ``y`` and ``z`` are filled in by the channel.
    """

    N: int
    k: int
    messages: dict
    a: np.ndarray
    b: np.ndarray
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    x: np.ndarray
    llr: dict
    ok: np.ndarray
    psi_u1: np.ndarray
    phi_u: np.ndarray
    psi_vu: np.ndarray
    phi_vu: np.ndarray
    y: np.ndarray = None
    z: np.ndarray = None

    @property
    def batch(self):
        return self.a.shape[1]

    @property
    def public(self):
        return {"psi_u1": self.psi_u1, "phi_u": self.phi_u}

    @property
    def seed(self):
        return {"psi_vu": self.psi_vu, "phi_vu": self.phi_vu}

    def public_bits(self):
        return int(self.psi_u1.shape[-1] + self.phi_u.shape[0] * self.phi_u.shape[-1])

    def seed_bits(self):
        return int(self.psi_vu.shape[-1] + self.phi_vu.shape[0] * self.phi_vu.shape[-1])


def encode_block(config, vector, i, messages, vectors, side, rng, backend=None):
    """Run one block rule over a batch; returns (polarized bits, llr, ok)."""
    rule = config.rules[vector, i]
    layer = config.layers[rule.layer]
    batch = next(iter(side.values())).shape[0] if side else messages_batch(messages)
    rand = rng.random((batch, rule.N))
    fixed = _fixed_bits(rule, batch, messages, vectors)
    leaf = layer_leaf(layer, side, batch, rule.N)
    return kernels.sc_run(leaf, rule.actions(), fixed, rand, backend=backend)


def messages_batch(messages):
    return next(iter(messages.values())).shape[0]


def encode_session(config, messages, rng, backend=None):
    """Encode all k blocks for a batch of sessions.

    Parameters
    ----------
    messages : dict
        ``(label, block) -> (B, length)`` bits for labels O, S, M and R; any
        missing entry is drawn uniformly from ``rng``.
    rng : seed or Generator
    """
    rng = np.random.default_rng(rng)
    k, N = config.k, config.N
    B = messages_batch(messages) if messages else 1
    messages = dict(messages)
    for label in MESSAGES:
        for i in range(1, k + 1):
            if (label, i) not in messages:
                n = config.message_length(label, i)
                messages[label, i] = rng.integers(0, 2, size=(B, n), dtype=np.uint8)
    vectors = {}
    out = {name: np.zeros((k, B, N), dtype=np.uint8) for name in ("a", "b", "t", "u", "v", "x")}
    llr = {name: np.zeros((k, B, N)) for name in ("a", "b", "t")}
    ok = np.ones((k, B), dtype=bool)
    for i in range(1, k + 1):
        a, la, oa = encode_block(config, "a", i, messages, vectors, {}, rng, backend) if B else (None,) * 3
        vectors["a", i] = a
        u = transform(a, backend=backend)
        b, lb, ob = encode_block(config, "b", i, messages, vectors, {"U": u}, rng, backend)
        vectors["b", i] = b
        v = transform(b, backend=backend)
        t, lt, ot = encode_block(config, "t", i, messages, vectors, {"V": v}, rng, backend)
        vectors["t", i] = t
        x = transform(t, backend=backend)
        for name, val in zip(("a", "b", "t", "u", "v", "x"), (a, b, t, u, v, x)):
            out[name][i - 1] = val
        llr["a"][i - 1], llr["b"][i - 1], llr["t"][i - 1] = la, lb, lt
        ok[i - 1] = oa & ob & ot
    psi_pos, phi_pos = config.public_positions()
    return Transcript(
        N=N, k=k, messages=messages, llr=llr, ok=ok,
        psi_u1=out["a"][0][:, psi_pos],
        phi_u=out["a"][:, :, phi_pos],
        psi_vu=out["b"][k - 1][:, config.sets.psi_vu],
        phi_vu=out["b"][:, :, config.sets.phi_vu],
        **out,
    )


# --- decoding -------------------------------------------------------------------

class _Knowledge:
    """Known bits of each polarized vector, propagated through copy relations."""

    def __init__(self, config, vector, batch):
        self.N = config.N
        self.rules = [r for (vec, _), r in config.rules.items() if vec == vector]
        self.val = {}
        self.known = {}
        self.batch = batch
        for r in self.rules:
            self.val[vector, r.block] = np.zeros((batch, self.N), dtype=np.uint8)
            self.known[vector, r.block] = np.zeros(self.N, dtype=bool)

    def set(self, key, pos, bits):
        pos = np.asarray(pos, dtype=np.int64)
        new = ~self.known[key][pos]
        self.val[key][:, pos[new]] = np.asarray(bits)[:, new]
        self.known[key][pos] = True

    def propagate(self):
        changed = True
        while changed:
            changed = False
            for r in self.rules:
                dst_key = (r.vector, r.block)
                for a in r.copies():
                    src_key = a.label
                    ks, kd = self.known[src_key][a.src], self.known[dst_key][a.dst]
                    if np.any(ks & ~kd):
                        sel = ks & ~kd
                        self.val[dst_key][:, a.dst[sel]] = self.val[src_key][:, a.src[sel]]
                        self.known[dst_key][a.dst[sel]] = True
                        changed = True
                    if np.any(kd & ~ks):
                        sel = kd & ~ks
                        self.val[src_key][:, a.src[sel]] = self.val[dst_key][:, a.dst[sel]]
                        self.known[src_key][a.src[sel]] = True
                        changed = True

    def decode(self, key, leaf, backend=None):
        actions = np.where(self.known[key], FIXED, DECIDE).astype(np.int8)
        rand = np.zeros((self.batch, self.N))
        bits, llr, ok = kernels.sc_run(leaf, actions, self.val[key], rand, backend=backend)
        self.val[key] = bits
        self.known[key][:] = True
        self.propagate()
        return bits, ok


def _extract(config, vector, est, label):
    return {(label, i): est[vector, i][:, config.rules[vector, i].message((label, i))]
            for i in range(1, config.k + 1)}


@dataclass
class DecodeResult:
    estimates: dict
    messages: dict
    ok: np.ndarray  # (k, B)


def decode_common(config, obs, public, layer_name, backward, backend=None):
    """SC decoding of the common-layer vectors from one receiver's outputs."""
    k, N = config.k, config.N
    obs = np.asarray(obs)
    B = obs.shape[1]
    kn = _Knowledge(config, "a", B)
    psi_pos, phi_pos = config.public_positions()
    kn.set(("a", 1), psi_pos, public["psi_u1"])
    for i in range(1, k + 1):
        kn.set(("a", i), phi_pos, public["phi_u"][i - 1])
    kn.propagate()
    layer = config.layers[layer_name]
    ok = np.ones((k, B), dtype=bool)
    order = range(k, 0, -1) if backward else range(1, k + 1)
    for i in order:
        leaf = layer.leaf_llr({layer.side: obs[i - 1]}).astype(np.float64)
        _, ok[i - 1] = kn.decode(("a", i), leaf, backend)
    est = dict(kn.val)
    return DecodeResult(est, _extract(config, "a", est, "O"), ok)


def eve_decode(config, z, public, backend=None):
    """Eve's common-message estimates, decoding from block k backwards."""
    return decode_common(config, z, public, "U|Z", backward=True, backend=backend)


def bob_decode(config, y, public, seed, backend=None):
    """Bob's estimates of the common, confidential and private messages.

    The common layer is decoded forward with side information y; the secret
    layer backward from block k with side information (u estimate, y).
    """
    k = config.k
    y = np.asarray(y)
    common = decode_common(config, y, public, "U|Y", backward=False, backend=backend)
    B = y.shape[1]
    kn = _Knowledge(config, "b", B)
    kn.set(("b", k), config.sets.psi_vu, seed["psi_vu"])
    for i in range(1, k + 1):
        kn.set(("b", i), config.sets.phi_vu, seed["phi_vu"][i - 1])
    kn.propagate()
    layer = config.layers["V|UY"]
    ok = np.ones((k, B), dtype=bool)
    for i in range(k, 0, -1):
        u_hat = transform(common.estimates["a", i], backend=backend)
        leaf = layer.leaf_llr({"U": u_hat, "Y": y[i - 1]}).astype(np.float64)
        _, ok[i - 1] = kn.decode(("b", i), leaf, backend)
    est = dict(kn.val)
    msgs = dict(common.messages)
    msgs.update(_extract(config, "b", est, "S"))
    msgs.update(_extract(config, "b", est, "M"))
    estimates = dict(common.estimates)
    estimates.update(est)
    return DecodeResult(estimates, msgs, np.vstack([common.ok, ok]))


def message_errors(config, sent, decoded, labels):
    """(B,) bool: True where any block of any label in ``labels`` differs."""
    B = next(iter(decoded.values())).shape[0]
    err = np.zeros(B, dtype=bool)
    for label in labels:
        for i in range(1, config.k + 1):
            err |= np.any(sent[label, i] != decoded[label, i], axis=1)
    return err


# --- serialization --------------------------------------------------------------

MAGIC = b"BCCPTRN1"
VERSION = 1


def _write_section(buf, name, arr):
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    bits = arr.size == 0 or arr.max() <= 1
    payload = np.packbits(arr.ravel()).tobytes() if bits else arr.tobytes()
    nb = name.encode()
    buf.write(struct.pack("<B", len(nb)) + nb)
    buf.write(struct.pack("<BB", int(bits), arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    buf.write(struct.pack("<Q", len(payload)) + payload)


def _read_exact(f, n):
    data = f.read(n)
    if len(data) != n:
        raise ValueError("truncated transcript")
    return data


def _read_section(f):
    (ln,) = struct.unpack("<B", _read_exact(f, 1))
    name = _read_exact(f, ln).decode()
    bits, ndim = struct.unpack("<BB", _read_exact(f, 2))
    shape = struct.unpack(f"<{ndim}Q", _read_exact(f, 8 * ndim))
    (plen,) = struct.unpack("<Q", _read_exact(f, 8))
    raw = np.frombuffer(_read_exact(f, plen), dtype=np.uint8)
    size = int(np.prod(shape, dtype=np.int64))
    arr = np.unpackbits(raw)[:size] if bits else raw[:size]
    return name, arr.reshape(shape).copy()


def write_transcript(path, tr, set_digest):
    """Length-prefixed binary transcript.

    Layout: magic (8 bytes), version u16, N u32, k u32, B u32, set-family
    sha256 (32 bytes), section count u32, then sections of the form
    name-length u8, name, packed-bits flag u8, ndim u8, shape u64 x ndim,
    payload length u64, payload. Bit arrays are packed MSB first.
    """
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HIII", VERSION, tr.N, tr.k, tr.batch))
    buf.write(set_digest)
    sections = [(name, getattr(tr, name)) for name in ("a", "b", "t", "x", "psi_u1", "phi_u", "psi_vu", "phi_vu", "ok")]
    sections += [(n, getattr(tr, n)) for n in ("y", "z") if getattr(tr, n) is not None]
    sections += [(f"{label}/{i}", bits) for (label, i), bits in sorted(tr.messages.items())]
    buf.write(struct.pack("<I", len(sections)))
    for name, arr in sections:
        _write_section(buf, name, arr)
    Path(path).write_bytes(buf.getvalue())


def read_transcript(path):
    """Inverse of :func:`write_transcript`; returns (header dict, sections dict)."""
    with open(path, "rb") as f:
        if _read_exact(f, 8) != MAGIC:
            raise ValueError("not a transcript file")
        version, N, k, B = struct.unpack("<HIII", _read_exact(f, 14))
        if version != VERSION:
            raise ValueError(f"unsupported transcript version {version}")
        digest = _read_exact(f, 32)
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        sections = dict(_read_section(f) for _ in range(count))
        if f.read(1):
            raise ValueError("trailing bytes after last section")
    return {"N": N, "k": k, "batch": B, "sets_sha256": digest.hex()}, sections


def write_bits(path, bits):
    """Message file: the bits as ASCII '0'/'1' characters."""
    Path(path).write_text("".join("1" if b else "0" for b in np.asarray(bits).ravel()) + "\n")


def read_bits(path):
    text = "".join(Path(path).read_text().split())
    if any(c not in "01" for c in text):
        raise ValueError(f"{path}: message files may only contain 0 and 1")
    return np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")
