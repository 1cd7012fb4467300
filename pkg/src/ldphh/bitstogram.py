"""Bitstogram: heavy hitters recovered bit-by-bit through hashed sign columns.

The building block is a one-bit randomizer: each user reports a randomized
response of one entry of a public +-1 column matrix, selected by hashing the
user's (encoded) item.  Summing reports against the matrix and debiasing
yields frequency estimates; comparing the estimates of (cell, 0) and
(cell, 1) per bit position recovers candidate items, which an error
correcting code makes robust to a fraction of wrong bits.  Every user sends
exactly two bits, each at half the privacy budget.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ._bits import next_pow2
from .core import HeavyHitters
from .randomness import (
    ROLE_BG_HASHES,
    ROLE_BG_INNER,
    ROLE_BG_NOISE,
    ROLE_BG_OUTER,
    ROLE_BG_PARTITION,
    ROLE_EH_COLUMNS,
    ROLE_EH_NOISE,
    ROLE_SH_HASH,
    ROLE_SH_LEVEL,
    GF2HashFamily,
    PairwiseSignColumns,
    SharedRandomness,
    keep_probability,
    rr_bits,
    rr_debias,
)

__all__ = [
    "basic_randomizer",
    "basic_randomizer_bits",
    "ExplicitHist",
    "explicit_hist",
    "HashtogramState",
    "hashtogram_build",
    "hashtogram_query",
    "RepetitionCode",
    "IdentityCode",
    "HashtogramPreset",
    "hashtogram_preset_inner",
    "hashtogram_preset_outer",
    "BitstogramParams",
    "bitstogram_params",
    "succinct_hist_scale",
    "succinct_hist",
    "run_bitstogram",
]


def basic_randomizer_bits(x: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Flip each +-1 bit with probability 1/(e^eps + 1)."""
    return rr_bits(x, keep_probability(epsilon), rng)


def basic_randomizer(x: int, epsilon: float, rng: np.random.Generator) -> int:
    if x not in (-1, 1):
        raise ValueError("input bit must be -1 or +1")
    return int(basic_randomizer_bits(np.array([x], dtype=np.int8), epsilon, rng)[0])


def _encode(values: np.ndarray, bits: int) -> np.ndarray:
    return np.asarray(values, dtype=np.uint64) | (np.uint64(1) << np.uint64(bits))


class ExplicitHist:
    """Frequency oracle with one public sign column per user over the whole domain.

    Answers a(v) = debias * sum_j y_j * Z[v, j] where y_j is user j's
    randomized column entry at their own item.  Columns are stored as compact
    descriptors and the sum is taken over distinct columns, so queries cost
    O(#distinct columns) regardless of the domain size.
    """

    def __init__(self, values: np.ndarray, domain_size: int, epsilon: float, rng: np.random.Generator):
        values = np.asarray(values, dtype=np.uint64)
        if len(values) == 0:
            raise ValueError("need at least one participant")
        if int(values.max()) >= domain_size:
            raise ValueError("item outside the domain")
        self.n = len(values)
        self.domain_size = domain_size
        self.epsilon = epsilon
        self.debias = rr_debias(epsilon)
        self.columns = PairwiseSignColumns.draw(rng, self.n, next_pow2(domain_size))
        x = self.columns.entries_at(values)
        self.y = basic_randomizer_bits(x, epsilon, rng)
        # group report sums by distinct column
        ids = self.columns.column_ids
        uniq, inv = np.unique(ids, return_inverse=True)
        pos = np.bincount(inv[self.y > 0], minlength=len(uniq))
        neg = np.bincount(inv[self.y < 0], minlength=len(uniq))
        self._masks = (uniq >> 1).astype(np.uint64)
        self._flips = (uniq & 1).astype(np.uint8)
        self._sums = (pos - neg).astype(np.int64)

    def query(self, v: int) -> float:
        if not 0 <= v < self.domain_size:
            raise ValueError(f"query {v} outside the domain")
        bits = (np.bitwise_count(self._masks & np.uint64(v)) & 1).astype(np.uint8) ^ self._flips
        signs = 1 - 2 * bits.astype(np.int64)
        return float(self.debias * int(np.dot(self._sums, signs)))

    def query_many(self, vs) -> np.ndarray:
        return np.array([self.query(int(v)) for v in vs], dtype=np.float64)

    def query_direct(self, v: int) -> float:
        """Reference path: the same answer summed user by user (for verification)."""
        z = self.columns.entries_at(np.full(self.n, v, dtype=np.uint64))
        return float(self.debias * int(np.dot(self.y.astype(np.int64), z.astype(np.int64))))


def explicit_hist(values, domain_size: int, epsilon: float, rng: np.random.Generator) -> ExplicitHist:
    return ExplicitHist(values, domain_size, epsilon, rng)


@dataclass
class HashtogramState:
    """Aggregated state of one Hashtogram oracle: R hashed estimate rows.

    cells[r, t] holds the raw report sum of subset r at column row t; the
    debias factor is applied at query time.  a(v) is R times the median of
    the per-subset debiased estimates at v's hashed cells.
    """

    R: int
    T: int
    domain_bits: int
    epsilon: float
    n: int
    hashes: GF2HashFamily
    subset: np.ndarray
    columns: PairwiseSignColumns
    y: np.ndarray
    cells: np.ndarray
    debias: float = field(init=False)

    def __post_init__(self):
        self.debias = rr_debias(self.epsilon)

    def cell_estimates(self) -> np.ndarray:
        """Debiased (R, T) cell table a_r(t)."""
        return self.debias * self.cells.astype(np.float64)

    def cells_direct(self) -> np.ndarray:
        """Raw cell sums recomputed user by user (reference for verification)."""
        rows = np.arange(self.T, dtype=np.uint64)
        out = np.zeros((self.R, self.T), dtype=np.int64)
        for u in range(self.n):
            bits = (np.bitwise_count(self.columns.masks[u] & rows) & 1).astype(np.int8) ^ self.columns.flips[u]
            out[self.subset[u]] += int(self.y[u]) * (1 - 2 * bits.astype(np.int64))
        return out


def hashtogram_build(
    values: np.ndarray,
    domain_bits: int,
    R: int,
    T: int,
    epsilon: float,
    rng: np.random.Generator,
) -> HashtogramState:
    """Collect one randomized bit per user and fold into the (R, T) cell table.

    Users are split into R subsets; subset r hashes items with h_r into [T]
    and each user reports a randomized response of their column entry at the
    hashed cell.  Cell sums are computed by grouping users by distinct
    column first (there are at most 2T distinct columns), which matches the
    direct per-user sum exactly.
    """
    values = np.asarray(values, dtype=np.uint64)
    n = len(values)
    if n == 0:
        raise ValueError("need at least one participant")
    if int(values.max()) >= (1 << domain_bits):
        raise ValueError("item outside the domain")
    subset = rng.integers(0, R, size=n).astype(np.int64)
    w = max(domain_bits, max(1, T.bit_length() - 1)) + 1
    hashes = GF2HashFamily.draw(rng, R, w, max(1, T.bit_length() - 1))
    columns = PairwiseSignColumns.draw(rng, n, T)
    cell_of_user = hashes.eval_for(subset, _encode(values, domain_bits))
    x = columns.entries_at(cell_of_user)
    y = basic_randomizer_bits(x, epsilon, rng)

    # bucket sums by (subset, distinct column), then one pass over columns
    ids = subset * (2 * T) + columns.column_ids
    size = R * 2 * T
    pos = np.bincount(ids[y > 0], minlength=size)
    neg = np.bincount(ids[y < 0], minlength=size)
    grouped = (pos - neg).reshape(R, 2 * T)
    all_cols = PairwiseSignColumns.all_columns(T)
    if size * T <= (1 << 22):
        # exact: float64 holds these integer sums without rounding
        cells = (grouped.astype(np.float64) @ all_cols.astype(np.float64)).astype(np.int64)
    else:
        cells = np.asarray(sparse.csr_matrix(grouped.astype(np.int64)) @ all_cols.astype(np.int64), dtype=np.int64)
    return HashtogramState(
        R=R, T=T, domain_bits=domain_bits, epsilon=epsilon, n=n,
        hashes=hashes, subset=subset, columns=columns, y=y, cells=cells,
    )


def hashtogram_query_many(state: HashtogramState, vs) -> np.ndarray:
    """R times the median of the per-subset estimates at each query's hashed cells."""
    vs = np.asarray(list(vs), dtype=np.uint64)
    if len(vs) == 0:
        return np.empty(0, dtype=np.float64)
    if int(vs.max()) >= (1 << state.domain_bits):
        raise ValueError("query outside the domain")
    encoded = _encode(vs, state.domain_bits)
    idx = np.repeat(np.arange(state.R), len(vs))
    cells = state.hashes.eval_for(idx, np.tile(encoded, state.R)).reshape(state.R, len(vs))
    per_subset = state.debias * state.cells[np.arange(state.R)[:, None], cells.astype(np.int64)]
    return state.R * np.median(per_subset, axis=0)


def hashtogram_query(state: HashtogramState, v: int) -> float:
    return float(hashtogram_query_many(state, [int(v)])[0])


class RepetitionCode:
    """Binary code repeating each message bit `reps` times, decoded by majority.

    Corrects up to floor((reps-1)/2) flips inside any single block.  Bit
    positions are counted from the most significant message bit, so position
    p of a codeword repeats message bit p // reps.
    """

    def __init__(self, k: int, reps: int = 5):
        if k < 1 or reps < 1:
            raise ValueError("k and reps must be >= 1")
        self.k = k
        self.reps = reps
        self.n_code = k * reps
        self.zeta = (reps - 1) // 2 / reps

    def encode(self, value: int) -> int:
        if not 0 <= value < (1 << self.k):
            raise ValueError(f"value does not fit in {self.k} bits")
        out = 0
        for p in range(self.k):
            bit = (value >> (self.k - 1 - p)) & 1
            for _ in range(self.reps):
                out = (out << 1) | bit
        return out

    def decode(self, word: int) -> int:
        if not 0 <= word < (1 << self.n_code):
            raise ValueError(f"word does not fit in {self.n_code} bits")
        bits = np.array([(word >> (self.n_code - 1 - p)) & 1 for p in range(self.n_code)], dtype=np.int8)
        return int(self.decode_bits(bits[None, :])[0])

    def encoded_bit(self, values: np.ndarray, positions: np.ndarray) -> np.ndarray:
        """Bit `positions[u]` (0-based from the MSB) of Enc(values[u])."""
        src = np.asarray(positions, dtype=np.uint64) // np.uint64(self.reps)
        shift = np.uint64(self.k - 1) - src
        return ((np.asarray(values, dtype=np.uint64) >> shift) & np.uint64(1)).astype(np.uint8)

    def decode_bits(self, bits: np.ndarray) -> np.ndarray:
        """Decode rows of an (N, n_code) 0/1 matrix; per-block majority, ties to 0."""
        blocks = np.asarray(bits).reshape(len(bits), self.k, self.reps)
        votes = blocks.sum(axis=2)
        decoded_bits = (votes * 2 > self.reps).astype(np.uint64)
        weights = np.uint64(1) << np.arange(self.k - 1, -1, -1, dtype=np.uint64)
        return (decoded_bits * weights).sum(axis=1, dtype=np.uint64)


class IdentityCode:
    """No-op code; plugging it into the full protocol reproduces the warmup."""

    def __init__(self, k: int):
        self.k = k
        self.n_code = k
        self.reps = 1
        self.zeta = 0.0

    def encode(self, value: int) -> int:
        return value

    def decode(self, word: int) -> int:
        return word

    def encoded_bit(self, values: np.ndarray, positions: np.ndarray) -> np.ndarray:
        shift = np.uint64(self.k - 1) - np.asarray(positions, dtype=np.uint64)
        return ((np.asarray(values, dtype=np.uint64) >> shift) & np.uint64(1)).astype(np.uint8)

    def decode_bits(self, bits: np.ndarray) -> np.ndarray:
        weights = np.uint64(1) << np.arange(self.k - 1, -1, -1, dtype=np.uint64)
        return (np.asarray(bits, dtype=np.uint64) * weights).sum(axis=1, dtype=np.uint64)


@dataclass(frozen=True)
class HashtogramPreset:
    """Subset count and hash range for one Hashtogram instantiation.

    `meets_constraints` records whether the tabulated lower bound on R was
    attainable under its own participant-count requirement; at desk scale it
    usually is not, in which case R is capped by the n-side constraint.
    """

    R: int
    T: int
    meets_constraints: bool


def hashtogram_preset_outer(n: int, d_prime: int, beta: float, epsilon: float) -> HashtogramPreset:
    """High-accuracy preset used for final estimates over all n users.

    Wants R >= 300 ln(12 n d'/beta) subsets with n >= 43 R and hash range
    T >= eps * sqrt(n / ln(n d'/beta)); R is capped at n/43 when the two
    requirements conflict.  T also gets a 2*sqrt(n) floor so that hash
    collisions stay below the sampling noise.
    """
    r_formula = math.ceil(300.0 * math.log(12.0 * n * d_prime / beta))
    r_cap = max(1, n // 43)
    R = min(r_formula, r_cap)
    eps = min(epsilon, 1e6)
    t_formula = eps * math.sqrt(n / math.log(n * d_prime / beta))
    T = next_pow2(max(t_formula, 2.0 * math.sqrt(n), 2.0))
    return HashtogramPreset(R=R, T=T, meets_constraints=r_formula <= r_cap)


def hashtogram_preset_inner(n: int, epsilon: float) -> HashtogramPreset:
    """Preset for the per-(subset, bit) oracles that reconstruct candidate bits.

    Tuned for two queries at a time with failure probability 1/256:
    R >= 132 ln(4*2*256) with n >= 8 R ln(8*2*256), hash range
    T >= eps^2 ln(2*256) + eps sqrt(n / ln(2*256)).  As above, R is capped
    by the participant count when the bounds conflict.
    """
    d_prime, beta = 2, 1.0 / 256.0
    r_formula = math.ceil(132.0 * math.log(4.0 * d_prime / beta))
    r_cap = max(1, int(n / (8.0 * math.log(8.0 * d_prime / beta))))
    R = min(r_formula, r_cap)
    eps = min(epsilon, 1e6)
    log_db = math.log(d_prime / beta)
    T = next_pow2(max(eps * eps * log_db + eps * math.sqrt(n / log_db), 2.0))
    return HashtogramPreset(R=R, T=T, meets_constraints=r_formula <= r_cap)


def succinct_hist_scale(n: int, domain_bits: int, epsilon: float) -> float:
    """Count scale w above which the warmup protocol catches an item w.p. 1/2."""
    eps = min(epsilon, 1e6)
    return 32.0 * domain_bits * math.log(16.0 * domain_bits) + (48.0 / eps) * math.sqrt(
        2.0 * n * domain_bits * math.log(64.0 * domain_bits)
    )


@dataclass
class BitstogramParams:
    """Parameters of one full-protocol run.

    R and T are the candidate-table dimensions: R independent hashes of the
    encoded items into [T] cells, each reconstructed bit-by-bit.  The code
    turns per-bit reconstruction errors into a bounded fraction of codeword
    errors.  heavy_w is the warmup detection scale, kept for reference.
    """

    n: int
    d: int
    epsilon: float
    beta: float
    R: int
    T: int
    code: RepetitionCode | IdentityCode
    inner: HashtogramPreset
    outer: HashtogramPreset
    heavy_w: float

    @property
    def domain_bits(self) -> int:
        return self.d.bit_length() - 1


def bitstogram_params(
    n: int,
    d: int,
    epsilon: float,
    beta: float,
    *,
    R: int | None = None,
    T: int | None = None,
    code=None,
    t_constant: float = 326.0,
) -> BitstogramParams:
    """Desk-scale defaults for the full protocol.

    R = 48 ln(1/beta) repetitions, capped so that each of the R * n_code
    reconstruction subsets keeps enough participants to vote on its bit;
    T = eps n / (326 sqrt(R * n_code)) rounded up to a power of two.
    """
    if n < 2 or d < 2 or (d & (d - 1)):
        raise ValueError("need n >= 2 and a power-of-two domain")
    if not 0 < beta < 1 or epsilon <= 0:
        raise ValueError("beta in (0,1) and epsilon > 0 required")
    domain_bits = d.bit_length() - 1
    if code is None:
        code = RepetitionCode(domain_bits, 5)
    if R is None:
        r_formula = math.ceil(48.0 * math.log(1.0 / beta))
        r_cap = max(1, n // (96 * code.n_code))
        R = max(1, min(r_formula, r_cap))
    if T is None:
        eps = min(epsilon, 1e6)
        T = next_pow2(max(eps * n / (t_constant * math.sqrt(R * code.n_code)), 2.0))
    inner = hashtogram_preset_inner(max(1, n // (R * code.n_code)), epsilon / 2.0)
    outer = hashtogram_preset_outer(n, d_prime=max(1, R * T), beta=beta, epsilon=epsilon / 2.0)
    return BitstogramParams(
        n=n, d=d, epsilon=epsilon, beta=beta, R=R, T=T, code=code,
        inner=inner, outer=outer, heavy_w=succinct_hist_scale(n, domain_bits, epsilon),
    )


def succinct_hist(
    values: np.ndarray,
    domain_bits: int,
    epsilon: float,
    seed: int,
    *,
    T: int | None = None,
) -> HeavyHitters:
    """Warmup heavy-hitters protocol: one hash table, no error correction.

    Users are split by bit position; position l's oracle estimates the counts
    of (cell, bit) pairs and the more frequent bit per cell is taken.  Each
    reconstructed candidate is then re-estimated over all users.  Both oracle
    stages run at half the budget, one report bit per user per stage.
    """
    values = np.asarray(values, dtype=np.uint64)
    n = len(values)
    D = domain_bits
    if n and int(values.max()) >= (1 << D):
        raise ValueError("item outside the domain")
    if T is None:
        T = max(1, int(round(32.0 * n / succinct_hist_scale(n, D, epsilon))))
    T = next_pow2(T)
    sr = SharedRandomness(seed, n)
    level = sr.partition(D, ROLE_SH_LEVEL)
    w = max(D, max(1, T.bit_length() - 1)) + 1
    hash_fn = GF2HashFamily.draw(sr.rng(ROLE_SH_HASH), 1, w, max(1, T.bit_length() - 1))
    cell = hash_fn.eval_for(np.zeros(n, dtype=np.int64), _encode(values, D))
    bit = ((values >> (np.uint64(D - 1) - level.astype(np.uint64))) & np.uint64(1)).astype(np.uint64)
    point = 2 * cell + bit

    half = epsilon / 2.0
    table = np.zeros((D, 2 * T), dtype=np.float64)
    for lev in range(D):
        members = np.flatnonzero(level == lev)
        if len(members) == 0:
            continue  # an empty level keeps zero estimates
        oracle = ExplicitHist(point[members], 2 * T, half, sr.rng(ROLE_EH_NOISE, lev))
        table[lev] = oracle.query_many(range(2 * T))

    candidates = np.zeros(T, dtype=np.uint64)
    for lev in range(D):
        ones = table[lev, 1::2] > table[lev, 0::2]  # ties resolve to bit 0
        candidates = (candidates << np.uint64(1)) | ones.astype(np.uint64)

    final = ExplicitHist(values, 1 << D, half, sr.rng(ROLE_EH_NOISE, D))
    estimates = final.query_many(candidates)
    order = sorted(range(T), key=lambda i: (-estimates[i], candidates[i]))
    meta = {
        "protocol": "succinct-hist",
        "seed": seed,
        "n": n,
        "domain_bits": D,
        "epsilon": epsilon,
        "T": T,
        # the raw table has exactly T slots; distinct slots can decode to the
        # same item, so the result's entries are the deduplicated view
        "candidate_table": [[int(candidates[i]), float(estimates[i])] for i in range(T)],
    }
    items, ests, seen = [], [], set()
    for i in order:
        v = int(candidates[i])
        if v not in seen:
            seen.add(v)
            items.append(v)
            ests.append(float(estimates[i]))
    return HeavyHitters(items, ests, D, meta)


def run_bitstogram(values: np.ndarray, params: BitstogramParams, seed: int) -> HeavyHitters:
    """Run the full protocol: encode, reconstruct per-cell codewords, decode,
    re-estimate, and keep candidates whose estimate clears sqrt(n).

    Domains smaller than sqrt(n) skip the machinery entirely: a single
    explicit oracle at full budget is queried for every domain element.
    """
    values = np.asarray(values, dtype=np.uint64)
    n = len(values)
    if n != params.n:
        raise ValueError(f"params expect n={params.n}, dataset has {n}")
    if n and int(values.max()) >= params.d:
        raise ValueError("item outside the domain")
    D = params.domain_bits
    sr = SharedRandomness(seed, n)
    timings: dict[str, float] = {}
    drop_below = math.sqrt(n)

    if params.d < math.isqrt(n):
        tic = time.perf_counter()
        oracle = ExplicitHist(values, params.d, params.epsilon, sr.rng(ROLE_EH_NOISE))
        estimates = oracle.query_many(range(params.d))
        timings["oracle"] = time.perf_counter() - tic
        order = sorted(range(params.d), key=lambda i: (-estimates[i], i))
        items = [i for i in order if estimates[i] > drop_below]
        meta = {
            "protocol": "bitstogram",
            "route": "explicit",
            "seed": seed,
            "n": n,
            "domain_bits": D,
            "epsilon": params.epsilon,
            "timings": timings,
        }
        return HeavyHitters(items, [float(estimates[i]) for i in items], D, meta)

    code = params.code
    R, T = params.R, params.T
    n_code = code.n_code
    half = params.epsilon / 2.0

    # public randomness: subsets, item hashes, per-user encoded bit
    tic = time.perf_counter()
    pair = sr.partition(R * n_code, ROLE_BG_PARTITION)
    sub_r = pair // n_code
    sub_l = pair % n_code
    w = max(D, max(1, T.bit_length() - 1)) + 1
    hashes = GF2HashFamily.draw(sr.rng(ROLE_BG_HASHES), R, w, max(1, T.bit_length() - 1))
    cell = hashes.eval_for(sub_r, _encode(values, D))
    bit = code.encoded_bit(values, sub_l)
    point = 2 * cell + bit.astype(np.uint64)
    timings["client_prep"] = time.perf_counter() - tic

    # reconstruction oracles, one per (subset, bit position)
    tic = time.perf_counter()
    inner_bits = max(1, (2 * T).bit_length() - 1)
    reconstructed = np.zeros((R, T, n_code), dtype=np.uint8)
    order_rl = np.argsort(pair, kind="stable")
    bounds = np.searchsorted(pair[order_rl], np.arange(R * n_code + 1))
    for r in range(R):
        for l in range(n_code):
            members = order_rl[bounds[r * n_code + l] : bounds[r * n_code + l + 1]]
            if len(members) == 0:
                continue  # no voters; bits stay 0
            preset = params.inner
            state = hashtogram_build(
                point[members], inner_bits, min(preset.R, len(members)) or 1, preset.T, half,
                sr.rng(ROLE_BG_INNER, r, l),
            )
            est = hashtogram_query_many(state, range(2 * T))
            reconstructed[r, :, l] = est[1::2] > est[0::2]  # ties resolve to bit 0
    timings["reconstruct"] = time.perf_counter() - tic

    tic = time.perf_counter()
    decoded = code.decode_bits(reconstructed.reshape(R * T, n_code))
    candidates = np.unique(decoded)
    outer = hashtogram_build(values, D, params.outer.R, params.outer.T, half, sr.rng(ROLE_BG_OUTER))
    estimates = hashtogram_query_many(outer, candidates)
    timings["estimate"] = time.perf_counter() - tic

    keep = [i for i in range(len(candidates)) if estimates[i] > drop_below]
    keep.sort(key=lambda i: (-estimates[i], candidates[i]))
    meta = {
        "protocol": "bitstogram",
        "route": "full",
        "seed": seed,
        "n": n,
        "domain_bits": D,
        "epsilon": params.epsilon,
        "R": R,
        "T": T,
        "code_bits": n_code,
        "inner": (params.inner.R, params.inner.T),
        "outer": (params.outer.R, params.outer.T),
        "candidates": int(len(candidates)),
        "timings": timings,
    }
    return HeavyHitters([int(candidates[i]) for i in keep], [float(estimates[i]) for i in keep], D, meta)
