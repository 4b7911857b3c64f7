"""Discrete memoryless source (U, V, X, Y, Z) with U - V - X - (Y, Z).

The joint law is stored as two factors, ``p(u, v, x)`` and ``p(y, z | x)``, so
the Markov chain holds by construction. All information quantities are in
bits.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

VARS = "UVXYZ"
ZERO = 1e-15  # probabilities below this are exact zeros in log computations


class SourceFormatError(ValueError):
    """Malformed source/channel specification file."""

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class RateTuple:
    r_o: float
    r_m: float
    r_s: float
    r_r: float

    def __post_init__(self):
        for name in ("r_o", "r_m", "r_s", "r_r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True, eq=False)
class JointSource:
    """Exact joint pmf over binary U, V, X and finite Y, Z."""

    factor_uvx: np.ndarray
    factor_yz_given_x: np.ndarray
    name: str = ""
    pmf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        uvx = np.array(self.factor_uvx, dtype=np.float64)
        ch = np.array(self.factor_yz_given_x, dtype=np.float64)
        if uvx.shape != (2, 2, 2):
            raise ValueError(f"factor_uvx must have shape (2, 2, 2), got {uvx.shape}")
        if ch.ndim != 3 or ch.shape[0] != 2 or min(ch.shape) < 1:
            raise ValueError(f"factor_yz_given_x must have shape (2, |Y|, |Z|), got {ch.shape}")
        if (uvx < 0).any() or (ch < 0).any():
            raise ValueError("probabilities must be nonnegative")
        uvx[uvx < ZERO] = 0.0
        ch[ch < ZERO] = 0.0
        uvx.setflags(write=False)
        ch.setflags(write=False)
        object.__setattr__(self, "factor_uvx", uvx)
        object.__setattr__(self, "factor_yz_given_x", ch)
        pmf = uvx[:, :, :, None, None] * ch[None, None, :, :, :]
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    card_u = property(lambda self: 2)
    card_v = property(lambda self: 2)
    card_x = property(lambda self: 2)
    card_y = property(lambda self: self.factor_yz_given_x.shape[1])
    card_z = property(lambda self: self.factor_yz_given_x.shape[2])

    @property
    def cards(self):
        return dict(zip(VARS, self.pmf.shape))

    def marginal(self, group):
        """Joint pmf of the variables in ``group`` (axes in that order)."""
        group = _norm_group(group)
        keep = [VARS.index(c) for c in group]
        drop = tuple(i for i in range(5) if i not in keep)
        m = self.pmf.sum(axis=drop)
        order = np.argsort(np.argsort(keep))
        return np.transpose(m, order) if m.ndim > 1 else m

    def digest(self):
        """Stable content hash, used to key caches and tag outputs."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.factor_uvx).tobytes())
        h.update(np.asarray(self.factor_yz_given_x.shape, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.factor_yz_given_x).tobytes())
        return h.hexdigest()[:16]

    def with_channel(self, factor_yz_given_x, name=""):
        return JointSource(self.factor_uvx, factor_yz_given_x, name=name or self.name)

    def to_text(self):
        lines = [f"# {self.name}" if self.name else "# source",
                 f"card_y = {self.card_y}", f"card_z = {self.card_z}",
                 "factor_uvx = " + " ".join(_fmt(p) for p in self.factor_uvx.ravel())]
        for x in range(2):
            row = " ".join(_fmt(p) for p in self.factor_yz_given_x[x].ravel())
            lines.append(f"factor_yz_given_x[{x}] = {row}")
        return "\n".join(lines) + "\n"


def _fmt(p):
    return repr(float(p))


def _norm_group(group):
    group = "".join(group).upper() if not isinstance(group, str) else group.upper()
    if any(c not in VARS for c in group):
        raise ValueError(f"unknown variable in group {group!r}")
    if len(set(group)) != len(group):
        raise ValueError(f"repeated variable in group {group!r}")
    return group


def _entropy(p):
    p = np.asarray(p, dtype=np.float64).ravel()
    p = p[p > ZERO]
    return float(-(p * np.log2(p)).sum())


def entropy(source, target, given=""):
    """H(target | given) in bits, by direct summation."""
    target, given = _norm_group(target), _norm_group(given)
    if set(target) & set(given):
        raise ValueError(f"target {target!r} and given {given!r} overlap")
    if not target:
        return 0.0
    joint = _entropy(source.marginal(target + given))
    return joint - (_entropy(source.marginal(given)) if given else 0.0)


def mutual_information(source, a, b, given=""):
    """I(a; b | given) in bits."""
    a, b, given = _norm_group(a), _norm_group(b), _norm_group(given)
    if set(a) & set(b) or (set(a) | set(b)) & set(given):
        raise ValueError("groups must be disjoint")
    return entropy(source, a, given) - entropy(source, a, b + given)


def info_quantity(source, target, given="", against=None):
    """H(target | given), or I(target; against | given) when ``against`` is set."""
    if against is None:
        return entropy(source, target, given)
    return mutual_information(source, target, against, given)


@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok


def validate(source):
    """Check normalization, factorization and the standing rate assumptions."""
    v = []
    total = source.pmf.sum()
    if abs(total - 1.0) > 1e-12:
        v.append(f"normalization: pmf sums to {total!r}")
    rows = source.factor_yz_given_x.sum(axis=(1, 2))
    if np.any(np.abs(rows - 1.0) > 1e-12):
        v.append(f"normalization: p(y,z|x) rows sum to {rows.tolist()}")
    prod = source.factor_uvx[:, :, :, None, None] * source.factor_yz_given_x[None, None]
    if np.max(np.abs(prod - source.pmf)) > 1e-12:
        v.append("markov: pmf does not factor as p(u,v,x) p(y,z|x)")
    if not v:
        ivy = mutual_information(source, "V", "Y", "U")
        ivz = mutual_information(source, "V", "Z", "U")
        if not ivy - ivz > 1e-12:
            v.append(f"secrecy: I(V;Y|U) - I(V;Z|U) = {ivy - ivz:.6g} is not > 0")
        iuy = mutual_information(source, "U", "Y")
        iuz = mutual_information(source, "U", "Z")
        if iuy > iuz + 1e-12:
            v.append(f"ordering: I(U;Y) = {iuy:.6g} > I(U;Z) = {iuz:.6g} is not supported")
    return ValidationReport(v)


def theorem1_corner(source):
    """Corner rate tuple (R_O, R_M, R_S, R_R) targeted by the code construction."""
    mi = lambda a, b, g="": mutual_information(source, a, b, g)  # noqa: E731
    r_o = min(mi("U", "Y"), mi("U", "Z"))
    r_m = mi("V", "Z", "U")
    r_s = mi("V", "Y", "U") - r_m
    r_r = mi("X", "Z", "V")
    clip = lambda r: 0.0 if abs(r) < 1e-12 else r  # noqa: E731
    return RateTuple(clip(r_o), clip(r_m), clip(r_s), clip(r_r))


def sample(source, count, rng):
    """Draw ``count`` i.i.d. tuples; returns an int array of shape (count, 5)."""
    rng = np.random.default_rng(rng)
    flat = source.pmf.ravel()
    idx = rng.choice(flat.size, size=count, p=flat / flat.sum())
    return np.stack(np.unravel_index(idx, source.pmf.shape), axis=-1).astype(np.int64)


# --- construction helpers -------------------------------------------------

def bsc(p):
    return np.array([[1 - p, p], [p, 1 - p]])


def bec(e):
    return np.array([[1 - e, 0.0, e], [0.0, 1 - e, e]])


def product_channel(bob, eve):
    """p(y, z | x) for independent Bob and Eve components."""
    bob, eve = np.asarray(bob, float), np.asarray(eve, float)
    return bob[:, :, None] * eve[:, None, :]


def auxiliaries(p_u1=0.0, q_v=0.5, r_x=0.0):
    """p(u, v, x) for U ~ Bern(p_u1), V = U xor Bern(q_v), X = V xor Bern(r_x)."""
    t = np.zeros((2, 2, 2))
    for u in range(2):
        for v in range(2):
            for x in range(2):
                pu = p_u1 if u else 1 - p_u1
                pv = q_v if v != u else 1 - q_v
                px = r_x if x != v else 1 - r_x
                t[u, v, x] = pu * pv * px
    return t


def bsc_pair(p_bob=0.05, p_eve=0.25):
    """U constant, V = X uniform, Bob and Eve are independent BSCs."""
    return JointSource(auxiliaries(), product_channel(bsc(p_bob), bsc(p_eve)),
                       name=f"bsc-pair bob={p_bob} eve={p_eve}")


def bec_bsc():
    """Every layer non-degenerate: U ~ Bern(0.26), V = U xor Bern(0.09),
    X = V xor Bern(0.29), Bob BEC(0.43), Eve BSC(0.12).

    The code sets of this source are feasible at N = 2, 4 and 8.
    """
    return JointSource(auxiliaries(0.26, 0.09, 0.29), product_channel(bec(0.43), bsc(0.12)),
                       name="bec-bsc")


def noiseless_bob(p_eve=0.25):
    """U constant, V = X uniform, Y = X, Eve BSC(p_eve)."""
    return JointSource(auxiliaries(), product_channel(np.eye(2), bsc(p_eve)), name="noiseless-bob")


def skewed_bsc():
    """U constant, V ~ Bern(0.35), X = V xor Bern(0.1), Bob BSC(0.02), Eve BSC(0.4).

    The secret and prefix layers both keep posterior-sampled positions, and
    the code sets stay feasible from N = 4 to N = 1024.
    """
    return JointSource(auxiliaries(0.0, 0.35, 0.1), product_channel(bsc(0.02), bsc(0.4)), name="skewed-bsc")


def noiseless_common():
    """U = V = X uniform and Y = Z = X; only the common layer carries data.

    It fails the secrecy assumption by design (no confidential rate).
    """
    return JointSource(auxiliaries(0.5, 0.0, 0.0), product_channel(np.eye(2), np.eye(2)),
                       name="noiseless-common")


PRESETS = {
    "bsc-pair": bsc_pair,
    "bec-bsc": bec_bsc,
    "noiseless-bob": noiseless_bob,
    "skewed-bsc": skewed_bsc,
    "noiseless-common": noiseless_common,
}


# --- text format ------------------------------------------------------------

_LINE = re.compile(r"^\s*([A-Za-z_]+)(?:\[(\d+)\])?\s*=\s*(.*?)\s*$")


def _parse_numbers(text, lineno):
    out = []
    for tok in text.replace(",", " ").split():
        try:
            val = float(Fraction(tok)) if "/" in tok else float(tok)
        except (ValueError, ZeroDivisionError):
            raise SourceFormatError(lineno, f"not a number: {tok!r}") from None
        if not np.isfinite(val) or val < 0:
            raise SourceFormatError(lineno, f"probability must be finite and >= 0: {tok!r}")
        out.append(val)
    return out


def parse_source(text, name=""):
    """Parse the key-value source format.

    ::

        card_y = 2
        card_z = 2
        factor_uvx = p000 p001 ... p111          # row-major over (u, v, x)
        factor_yz_given_x[0] = p(y=0,z=0|0) ...  # row-major over (y, z)
        factor_yz_given_x[1] = ...

    A leading ``{`` switches to JSON with the same keys, where
    ``factor_yz_given_x`` is a list of two rows.
    """
    if text.lstrip().startswith("{"):
        return _parse_json(text, name)
    seen = {}
    rows = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise SourceFormatError(lineno, f"expected 'key = values', got {raw.strip()!r}")
        key, index, value = m.groups()
        if key in ("card_y", "card_z"):
            if index is not None:
                raise SourceFormatError(lineno, f"{key} takes no index")
            try:
                seen[key] = (int(value), lineno)
            except ValueError:
                raise SourceFormatError(lineno, f"{key} must be an integer") from None
            if seen[key][0] < 1:
                raise SourceFormatError(lineno, f"{key} must be >= 1")
        elif key == "factor_uvx":
            nums = _parse_numbers(value, lineno)
            if len(nums) != 8:
                raise SourceFormatError(lineno, f"factor_uvx needs 8 entries, got {len(nums)}")
            seen[key] = (nums, lineno)
        elif key == "factor_yz_given_x":
            if index not in ("0", "1"):
                raise SourceFormatError(lineno, "factor_yz_given_x needs index [0] or [1]")
            rows[int(index)] = (_parse_numbers(value, lineno), lineno)
        elif key == "name":
            name = name or value
        else:
            raise SourceFormatError(lineno, f"unknown key {key!r}")
    last = len(text.splitlines())
    for key in ("card_y", "card_z", "factor_uvx"):
        if key not in seen:
            raise SourceFormatError(last, f"missing {key}")
    for x in (0, 1):
        if x not in rows:
            raise SourceFormatError(last, f"missing factor_yz_given_x[{x}]")
    cy, cz = seen["card_y"][0], seen["card_z"][0]
    ch = np.zeros((2, cy, cz))
    for x in (0, 1):
        nums, lineno = rows[x]
        if len(nums) != cy * cz:
            raise SourceFormatError(lineno, f"row needs card_y*card_z = {cy * cz} entries, got {len(nums)}")
        if abs(sum(nums) - 1.0) > 1e-9:
            raise SourceFormatError(lineno, f"row sums to {sum(nums)!r}, expected 1")
        ch[x] = np.reshape(nums, (cy, cz))
    nums, lineno = seen["factor_uvx"]
    if abs(sum(nums) - 1.0) > 1e-9:
        raise SourceFormatError(lineno, f"factor_uvx sums to {sum(nums)!r}, expected 1")
    return JointSource(np.reshape(nums, (2, 2, 2)), ch, name=name)


def _parse_json(text, name):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise SourceFormatError(e.lineno, e.msg) from None

    def line_of(key):
        for i, line in enumerate(text.splitlines(), start=1):
            if f'"{key}"' in line:
                return i
        return 1

    lines = []
    for key in ("card_y", "card_z", "factor_uvx"):
        if key not in obj:
            raise SourceFormatError(1, f"missing {key}")
        val = obj[key]
        lines.append(f"{key} = " + (" ".join(map(str, val)) if isinstance(val, list) else str(val)))
    ch = obj.get("factor_yz_given_x")
    if not isinstance(ch, list) or len(ch) != 2:
        raise SourceFormatError(line_of("factor_yz_given_x"), "factor_yz_given_x must be a list of two rows")
    for x, row in enumerate(ch):
        lines.append(f"factor_yz_given_x[{x}] = " + " ".join(map(str, np.ravel(row))))
    try:
        return parse_source("\n".join(lines), name=obj.get("name", name))
    except SourceFormatError as e:
        key = ["card_y", "card_z", "factor_uvx", "factor_yz_given_x", "factor_yz_given_x"][e.lineno - 1]
        raise SourceFormatError(line_of(key), str(e).split(": ", 1)[1]) from None


def load_source(path):
    """Load a source file, or a built-in preset written as ``preset:<name>``."""
    path = str(path)
    if path.startswith("preset:"):
        key = path.split(":", 1)[1]
        if key not in PRESETS:
            raise SourceFormatError(0, f"unknown preset {key!r}; known: {sorted(PRESETS)}")
        return PRESETS[key]()
    p = Path(path)
    return parse_source(p.read_text(), name=p.stem)


# --- polarization layers ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Layer:
    """One polarization layer: a binary target sequence and its side information.

    The leaf table ``llr[s] = ln p(t=0, s) - ln p(t=1, s)`` drives the SC
    recursion; ``joint[t, s]`` is the per-symbol pmf used by exact enumeration.
    """

    name: str
    target: str
    side: str
    side_cards: tuple
    joint: np.ndarray

    @property
    def llr(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.joint[0]) - np.log(self.joint[1])

    @property
    def n_side(self):
        return int(np.prod(self.side_cards, dtype=np.int64)) if self.side_cards else 1

    def side_code(self, seqs):
        """Mixed-radix side symbol from a mapping ``var -> int array``."""
        code = 0
        for var, card in zip(self.side, self.side_cards):
            code = code * card + np.asarray(seqs[var], dtype=np.int64)
        if not self.side:
            ref = np.asarray(seqs[self.target])
            return np.zeros(ref.shape, dtype=np.int64)
        return code

    def leaf_llr(self, seqs):
        """Raw-domain leaf LLRs for side sequences given as ``var -> (..., N)``."""
        return self.llr[self.side_code(seqs)]

    def entropy(self):
        """H(target | side) in bits per symbol."""
        return _entropy(self.joint) - _entropy(self.joint.sum(axis=0))

    @classmethod
    def identity(cls, var="X"):
        """Noiseless layer whose side information is the target itself."""
        return cls(f"{var}|{var}", var, var, (2,), np.array([[0.5, 0.0], [0.0, 0.5]]))


LAYERS = ("U", "U|Y", "U|Z", "V|U", "V|UZ", "V|UY", "X|V", "X|VZ")


def make_layer(source, name):
    """Layer ``name`` (one of :data:`LAYERS`) of ``source``."""
    if name not in LAYERS:
        raise ValueError(f"unknown layer {name!r}; known: {LAYERS}")
    target, _, side = name.partition("|")
    m = source.marginal(target + side)
    cards = tuple(m.shape[1:])
    joint = np.array(m.reshape(2, -1))
    joint[joint < ZERO] = 0.0
    joint.setflags(write=False)
    return Layer(name, target, side, cards, joint)


def make_layers(source):
    return {name: make_layer(source, name) for name in LAYERS}
