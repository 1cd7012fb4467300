"""Shared public randomness and local randomization primitives.

Everything random in a simulated run is derived from one 64-bit master seed:
per-user assignments, user partitions, hash functions, sign columns, and the
per-user report noise all come from role-tagged child streams, so clients and
server see identical "public" values and a rerun with the same seed
reproduces every report bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._bits import field_poly, gf2_mul_columns, is_pow2, pack_bits, parity_u64

__all__ = [
    "keep_probability",
    "max_likelihood_ratio",
    "rr_bit",
    "rr_bits",
    "GF2HashFamily",
    "HashPair",
    "HashPairFamily",
    "PairwiseSignColumns",
    "SignColumnDescriptor",
    "SharedRandomness",
    "required_row_independence",
    "KWiseSignColumn",
]

_U64 = np.uint64

# Role tags for domain-separated child streams.
ROLE_TH_LEVEL = 1
ROLE_TH_HASH_INDEX = 2
ROLE_TH_ROW = 3
ROLE_TH_PAIRS = 4
ROLE_TH_NOISE_PRUNE = 5
ROLE_TH_NOISE_FINAL = 6
ROLE_BG_PARTITION = 10
ROLE_BG_HASHES = 11
ROLE_BG_INNER = 12
ROLE_BG_OUTER = 13
ROLE_BG_COLUMNS = 14
ROLE_BG_NOISE = 15
ROLE_EH_COLUMNS = 16
ROLE_EH_NOISE = 17
ROLE_SH_LEVEL = 18
ROLE_SH_HASH = 19
ROLE_HARNESS = 42


def keep_probability(epsilon: float) -> float:
    """Probability e^eps / (e^eps + 1) of reporting a bit unflipped.

    epsilon is the budget of this single randomized-response invocation
    (callers pass eps/2 when an invocation must only spend half the budget).
    epsilon = inf gives p = 1, the noiseless test mode.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if math.isinf(epsilon):
        return 1.0
    e = math.exp(epsilon)
    return e / (e + 1.0)


def rr_debias(epsilon: float) -> float:
    """Multiplier (e^eps + 1)/(e^eps - 1) that unbiases sums of randomized bits.

    epsilon is the budget of the single invocation, as in keep_probability.
    Greater than 1 for finite epsilon; exactly 1 in the noiseless limit.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if math.isinf(epsilon):
        return 1.0
    e = math.exp(epsilon)
    return (e + 1.0) / (e - 1.0)


def max_likelihood_ratio(keep_prob: float) -> float:
    """Worst-case Pr[y|x] / Pr[y|x'] of randomized response with this keep probability.

    Closed form p/(1-p); this is the quantity that must equal e^eps exactly
    for the mechanism to be eps-DP per invocation.
    """
    if not 0.5 <= keep_prob <= 1.0:
        raise ValueError("keep probability must lie in [1/2, 1]")
    if keep_prob == 1.0:
        return math.inf
    return keep_prob / (1.0 - keep_prob)


def rr_bits(x: np.ndarray, keep_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Randomized response on an array of {-1,+1} bits, independent per entry."""
    if not 0.5 <= keep_prob <= 1.0:
        raise ValueError("keep probability must lie in [1/2, 1]")
    if keep_prob == 1.0:
        return np.asarray(x, dtype=np.int8).copy()
    keep = rng.random(np.shape(x)) < keep_prob
    x = np.asarray(x, dtype=np.int8)
    return np.where(keep, x, -x).astype(np.int8)


def rr_bit(x: int, keep_prob: float, rng: np.random.Generator) -> int:
    """Single-bit randomized response; x in {-1,+1}."""
    if x not in (-1, 1):
        raise ValueError("input bit must be -1 or +1")
    return int(rr_bits(np.array([x], dtype=np.int8), keep_prob, rng)[0])


class GF2HashFamily:
    """A batch of independent affine maps x -> a*x + b over GF(2^w).

    The output keeps the low `out_bits` bits of the affine image; with a and b
    uniform this is a pairwise-independent family onto [2^out_bits].  The
    per-function multiply-by-a matrices are precomputed as bit masks so that
    evaluation is a handful of AND/popcount passes, vectorizable across users
    even when every user uses a different function of the family.
    """

    def __init__(self, w: int, out_bits: int, a: np.ndarray, b: np.ndarray):
        if out_bits < 1 or out_bits > w:
            raise ValueError("out_bits must lie in [1, w]")
        if w > 64:
            raise ValueError("field width above 64 bits is not supported")
        self.w = w
        self.out_bits = out_bits
        self.a = np.asarray(a, dtype=_U64)
        self.b = np.asarray(b, dtype=_U64)
        self.count = len(self.a)
        self._masks, self._offsets = self._build_masks()

    @classmethod
    def draw(cls, rng: np.random.Generator, count: int, w: int, out_bits: int) -> "GF2HashFamily":
        high = (1 << w) if w < 64 else (1 << 64)
        a = rng.integers(0, high, size=count, dtype=_U64)
        b = rng.integers(0, high, size=count, dtype=_U64)
        return cls(w, out_bits, a, b)

    def _build_masks(self):
        w, out = self.w, self.out_bits
        poly_low = _U64(field_poly(w) & ((1 << w) - 1))
        wrap = _U64((1 << w) - 1) if w < 64 else _U64(0xFFFFFFFFFFFFFFFF)
        # cols[:, i] = a * x^i in GF(2^w), built by w shift-reduce steps.
        cols = np.empty((self.count, w), dtype=_U64)
        col = self.a.copy()
        one = _U64(1)
        for i in range(w):
            cols[:, i] = col
            top = (col >> _U64(w - 1)) & one
            col = ((col << one) & wrap) ^ (top * poly_low)
        # mask k collects, over input bits i, whether bit k of a*x^i is set.
        weights = one << np.arange(w, dtype=_U64)
        masks = np.empty((self.count, out), dtype=_U64)
        for k in range(out):
            masks[:, k] = (((cols >> _U64(k)) & one) * weights).sum(axis=1, dtype=_U64)
        offsets = self.b & _U64((1 << out) - 1)
        return masks, offsets

    def eval_point(self, x: int) -> np.ndarray:
        """Evaluate every function of the family at one point."""
        bits = parity_u64(self._masks & _U64(x))
        return pack_bits(bits) ^ self._offsets

    def eval_for(self, idx: np.ndarray, x: np.ndarray, chunk: int = 1 << 18) -> np.ndarray:
        """Evaluate function idx[u] at point x[u] for each u, chunked for memory."""
        idx = np.asarray(idx)
        x = np.asarray(x, dtype=_U64)
        out = np.empty(len(x), dtype=_U64)
        for lo in range(0, len(x), chunk):
            hi = lo + chunk
            bits = parity_u64(self._masks[idx[lo:hi]] & x[lo:hi, None])
            out[lo:hi] = pack_bits(bits) ^ self._offsets[idx[lo:hi]]
        return out


def _to_sign(bits: np.ndarray) -> np.ndarray:
    return (1 - 2 * bits.astype(np.int8)).astype(np.int8)


@dataclass(frozen=True)
class HashPair:
    """One (bucket, sign) hash pair (h_j, g_j) over the prefix domain.

    h maps length-encoded bit strings to [m]; g maps them to {-1,+1}.  Both
    are single members of independent pairwise families; `seed_h`/`seed_g`
    are the (a, b) field elements that define them.
    """

    w: int
    m: int
    seed_h: tuple[int, int]
    seed_g: tuple[int, int]

    def __post_init__(self):
        h = GF2HashFamily(self.w, self.m.bit_length() - 1, [self.seed_h[0]], [self.seed_h[1]])
        g = GF2HashFamily(self.w, 1, [self.seed_g[0]], [self.seed_g[1]])
        object.__setattr__(self, "_h", h)
        object.__setattr__(self, "_g", g)

    def index_sign(self, encoded: int) -> tuple[int, int]:
        """(h(x), g(x)) for an `encoded` bit string (see Bits.encoded)."""
        if encoded < 1 or encoded >= (1 << self.w):
            raise ValueError("encoded point outside the hash domain")
        c = int(self._h.eval_point(encoded)[0])
        s = 1 - 2 * int(self._g.eval_point(encoded)[0])
        return c, s


class HashPairFamily:
    """The t hash pairs of one run, with vectorized per-user evaluation."""

    def __init__(self, h: GF2HashFamily, g: GF2HashFamily, m: int, domain_bits: int):
        self.h = h
        self.g = g
        self.m = m
        self.domain_bits = domain_bits
        self.t = h.count

    @classmethod
    def draw(cls, rng: np.random.Generator, count: int, domain_bits: int, m: int) -> "HashPairFamily":
        if not is_pow2(m):
            raise ValueError("hash range m must be a power of two")
        # +1 makes room for the length marker of the encoded prefixes.
        w = max(domain_bits, max(1, m.bit_length() - 1)) + 1
        h = GF2HashFamily.draw(rng, count, w, max(1, m.bit_length() - 1))
        g = GF2HashFamily.draw(rng, count, w, 1)
        return cls(h, g, m, domain_bits)

    def buckets_for(self, idx: np.ndarray, encoded: np.ndarray) -> np.ndarray:
        return self.h.eval_for(idx, encoded)

    def signs_for(self, idx: np.ndarray, encoded: np.ndarray) -> np.ndarray:
        return _to_sign(self.g.eval_for(idx, encoded).astype(np.uint8))

    def point_buckets(self, encoded: int) -> np.ndarray:
        return self.h.eval_point(encoded)

    def point_signs(self, encoded: int) -> np.ndarray:
        return _to_sign(self.g.eval_point(encoded).astype(np.uint8))

    def pair(self, j: int) -> HashPair:
        return HashPair(
            w=self.h.w,
            m=self.m,
            seed_h=(int(self.h.a[j]), int(self.h.b[j])),
            seed_g=(int(self.g.a[j]), int(self.g.b[j])),
        )


@dataclass(frozen=True)
class SignColumnDescriptor:
    """Compact description (about log2 T bits) of one +-1 column of length T.

    entry(t) = (-1)^(<mask, t> xor flip) over the bits of t.  Over a uniform
    (mask, flip) draw the entries are unbiased and pairwise independent, and
    only 2T distinct columns are realizable.
    """

    T: int
    mask: int
    flip: int

    def __post_init__(self):
        if not is_pow2(self.T):
            raise ValueError("column length T must be a power of two")
        if not 0 <= self.mask < self.T or self.flip not in (0, 1):
            raise ValueError("descriptor out of range")

    def entry(self, t: int) -> int:
        if not 0 <= t < self.T:
            raise ValueError(f"index {t} outside [0, {self.T})")
        bit = (self.mask & t).bit_count() & 1
        return 1 - 2 * (bit ^ self.flip)


class PairwiseSignColumns:
    """Per-user +-1 columns of length T, one compact descriptor per user."""

    def __init__(self, T: int, masks: np.ndarray, flips: np.ndarray):
        if not is_pow2(T):
            raise ValueError("column length T must be a power of two")
        self.T = T
        self.masks = np.asarray(masks, dtype=_U64)
        self.flips = np.asarray(flips, dtype=np.uint8)
        self.n = len(self.masks)

    @classmethod
    def draw(cls, rng: np.random.Generator, n: int, T: int) -> "PairwiseSignColumns":
        masks = rng.integers(0, T, size=n, dtype=_U64)
        flips = rng.integers(0, 2, size=n, dtype=np.uint8)
        return cls(T, masks, flips)

    def descriptor(self, j: int) -> SignColumnDescriptor:
        return SignColumnDescriptor(self.T, int(self.masks[j]), int(self.flips[j]))

    def entries_at(self, t: np.ndarray) -> np.ndarray:
        """Column value of user u at row t[u], for all users at once."""
        t = np.asarray(t, dtype=_U64)
        bits = parity_u64(self.masks & t) ^ self.flips
        return _to_sign(bits)

    @property
    def column_ids(self) -> np.ndarray:
        """Identity of each user's column among the 2T realizable ones."""
        return (self.masks.astype(np.int64) << 1) | self.flips

    @staticmethod
    def all_columns(T: int) -> np.ndarray:
        """(2T, T) int8 matrix of every realizable column, row index = column id."""
        masks = np.arange(T, dtype=_U64)
        rows = np.arange(T, dtype=_U64)
        base = parity_u64(masks[:, None] & rows[None, :])  # (T, T) of bits
        out = np.empty((2 * T, T), dtype=np.int8)
        out[0::2] = _to_sign(base)
        out[1::2] = _to_sign(base ^ 1)
        return out


def required_row_independence(d: int, beta: float) -> int:
    """Independence order ceil(3 ln(d/beta)) that would make the column matrix
    rows strong enough for a union bound over the whole domain.

    The default pairwise column generator is sufficient for the estimators
    implemented here; k-wise rows are available via KWiseSignColumn for
    experiments that want them.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if d < 2:
        raise ValueError("d must be >= 2")
    return math.ceil(3.0 * math.log(d / beta))


class KWiseSignColumn:
    """Opt-in column whose entries are k-wise independent.

    Entries are the low bit of a random degree-(k-1) polynomial over GF(2^w)
    evaluated at the row index.  Evaluation is O(k) field multiplications, so
    this is for experiments, not for the bulk protocol path.
    """

    def __init__(self, T: int, coeffs: list[int]):
        if not is_pow2(T):
            raise ValueError("column length T must be a power of two")
        self.T = T
        self.w = max(1, (T - 1).bit_length())
        self.coeffs = list(coeffs)
        self._poly = field_poly(self.w)

    @classmethod
    def draw(cls, rng: np.random.Generator, T: int, k: int) -> "KWiseSignColumn":
        w = max(1, (T - 1).bit_length())
        coeffs = [int(rng.integers(0, 1 << w)) for _ in range(k)]
        return cls(T, coeffs)

    def entry(self, t: int) -> int:
        if not 0 <= t < self.T:
            raise ValueError(f"index {t} outside [0, {self.T})")
        from ._bits import gf2_mul

        acc = 0
        for c in reversed(self.coeffs):
            acc = gf2_mul(acc, t, self.w, self._poly) ^ c
        return 1 - 2 * (acc & 1)


class SharedRandomness:
    """All public randomness of one simulated run, derived from a master seed.

    Any derived object is a pure function of (master_seed, role key, user
    index): the per-user views are materialized as arrays, and index u of an
    array is what user u would compute locally from the same seed.
    """

    def __init__(self, master_seed: int, n: int):
        if not 0 <= master_seed < (1 << 64):
            raise ValueError("master seed must be an unsigned 64-bit integer")
        if n < 1:
            raise ValueError("n must be >= 1")
        self.master_seed = master_seed
        self.n = n
        self._cache: dict = {}

    def rng(self, *key: int) -> np.random.Generator:
        """Independent child stream for a role key."""
        ss = np.random.SeedSequence(entropy=self.master_seed, spawn_key=tuple(key))
        return np.random.default_rng(ss)

    def uniform_indices(self, modulus: int, *key: int) -> np.ndarray:
        """One uniform index in [0, modulus) per user.

        Reduces a 128-bit word per user, so the residual bias is below 2^-64
        for any modulus handled here (capped at 2^31).
        """
        if not 1 <= modulus < (1 << 31):
            raise ValueError("modulus must lie in [1, 2^31)")
        words = self.rng(*key).integers(0, 1 << 64, size=(self.n, 2), dtype=_U64)
        m = _U64(modulus)
        shift = _U64((1 << 64) % modulus)
        return (((words[:, 0] % m) * shift + words[:, 1] % m) % m).astype(np.int64)

    def treehist_assignment(self, domain_bits: int, t: int, m: int):
        """Per-user (level, hash index, row) triple; uniform and mutually independent."""
        key = ("th-assign", domain_bits, t, m)
        if key not in self._cache:
            ell = self.uniform_indices(domain_bits, ROLE_TH_LEVEL) + 1
            j = self.uniform_indices(t, ROLE_TH_HASH_INDEX)
            r = self.uniform_indices(m, ROLE_TH_ROW)
            self._cache[key] = (ell, j, r)
        return self._cache[key]

    def assign_user(self, i: int, domain_bits: int, t: int, m: int) -> tuple[int, int, int]:
        """Assignment triple of a single user (level is 1-based, j and r 0-based)."""
        if not 0 <= i < self.n:
            raise IndexError(f"user index {i} outside [0, {self.n})")
        ell, j, r = self.treehist_assignment(domain_bits, t, m)
        return int(ell[i]), int(j[i]), int(r[i])

    def hash_pairs(self, count: int, domain_bits: int, m: int, *key: int) -> HashPairFamily:
        ckey = ("pairs", count, domain_bits, m, key)
        if ckey not in self._cache:
            self._cache[ckey] = HashPairFamily.draw(self.rng(*key), count, domain_bits, m)
        return self._cache[ckey]

    def partition(self, subsets: int, *key: int) -> np.ndarray:
        """Random subset index in [0, subsets) per user (an exact partition of users)."""
        return self.uniform_indices(subsets, *key)

    def sign_columns(self, T: int, *key: int) -> PairwiseSignColumns:
        return PairwiseSignColumns.draw(self.rng(*key), self.n, T)
