"""TreeHist: heavy hitters via a compressed, noisy count sketch over a prefix tree.

Each user sends two privatized bits total: one during the pruning phase, which
scans the prefix tree level by level and discards nodes that cannot be heavy,
and one during the final phase, which re-estimates the surviving leaves with
lower variance.  Each bit is a randomized response on a single sampled entry
of the user's Hadamard-transformed sketch column, so the whole protocol is
epsilon-LDP (eps/2 per invocation, two invocations).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import EMPTY, Bits, HeavyHitters, TreeHistParams, child_set, encode_value
from .hadamard import row_signs
from .randomness import (
    ROLE_TH_NOISE_FINAL,
    ROLE_TH_NOISE_PRUNE,
    ROLE_TH_PAIRS,
    HashPairFamily,
    SharedRandomness,
    keep_probability,
    rr_bits,
)

__all__ = [
    "Report",
    "DuplicateReportError",
    "SketchAccumulator",
    "local_randomizer_bits",
    "local_rnd",
    "freq_oracle",
    "run_treehist",
]

PRUNING = "pruning"
FINAL = "final"


class DuplicateReportError(ValueError):
    """A user was ingested twice in the same phase (a simulation bug)."""


@dataclass(frozen=True)
class Report:
    """One privatized bit, attributed to its sender (identities are public)."""

    user: int
    phase: str
    bit: int

    def __post_init__(self):
        if self.phase not in (PRUNING, FINAL):
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.bit not in (-1, 1):
            raise ValueError("report bit must be -1 or +1")


def local_randomizer_bits(
    values: np.ndarray,
    domain_bits: int,
    ell: np.ndarray,
    j: np.ndarray,
    r: np.ndarray,
    hashes: HashPairFamily,
    keep_prob: float,
    rng: np.random.Generator,
    final: bool,
) -> np.ndarray:
    """Reports of all users for one phase, as an int8 array of -1/+1.

    With final=False user u hashes the ell[u]-bit prefix of their item; with
    final=True the full item.  The report is the sign of the sampled Hadamard
    entry of the signed indicator column, passed through randomized response.
    """
    values = np.asarray(values, dtype=np.uint64)
    if final:
        pref = values
        lengths = np.full(len(values), domain_bits, dtype=np.uint64)
    else:
        lengths = ell.astype(np.uint64)
        pref = values >> (np.uint64(domain_bits) - lengths)
    encoded = pref | (np.uint64(1) << lengths)
    buckets = hashes.buckets_for(j, encoded)
    signs = hashes.signs_for(j, encoded)
    x = signs * row_signs(r, buckets)
    return rr_bits(x, keep_prob, rng)


def local_rnd(
    user: int,
    value: int,
    domain_bits: int,
    assignment: tuple[int, int, int],
    hashes: HashPairFamily,
    keep_prob: float,
    rng: np.random.Generator,
    final: bool,
) -> Report:
    """Single-user view of the local randomizer (the bulk path, batch size 1)."""
    ell, j, r = assignment
    y = local_randomizer_bits(
        np.array([value], dtype=np.uint64),
        domain_bits,
        np.array([ell]),
        np.array([j]),
        np.array([r]),
        hashes,
        keep_prob,
        rng,
        final,
    )
    return Report(user=user, phase=FINAL if final else PRUNING, bit=int(y[0]))


class SketchAccumulator:
    """Bucketed partial sums of reports, the near-linear aggregation layout.

    Reports are stored once and folded into per-(level, hash, row) cell sums
    on demand: cell (l, j, k) is the sum of report bits of users assigned
    level l and hash j whose sampled row was k.  The final phase drops the
    level coordinate (all users share the full-item estimate).
    """

    def __init__(self, phase: str, n: int, domain_bits: int, t: int, m: int):
        if phase not in (PRUNING, FINAL):
            raise ValueError(f"unknown phase {phase!r}")
        self.phase = phase
        self.n = n
        self.domain_bits = domain_bits
        self.t = t
        self.m = m
        self._seen = np.zeros(n, dtype=bool)
        self._user = np.zeros(n, dtype=np.int64)
        self._ell = np.zeros(n, dtype=np.int32)
        self._j = np.zeros(n, dtype=np.int32)
        self._r = np.zeros(n, dtype=np.int32)
        self._y = np.zeros(n, dtype=np.int8)
        self.count = 0

    def ingest_bulk(self, users: np.ndarray, y: np.ndarray, ell: np.ndarray, j: np.ndarray, r: np.ndarray) -> None:
        users = np.asarray(users)
        if np.any(self._seen[users]):
            dup = int(users[self._seen[users]][0])
            raise DuplicateReportError(f"user {dup} already reported in phase {self.phase!r}")
        if len(np.unique(users)) != len(users):
            raise DuplicateReportError("duplicate users within one batch")
        lo = self.count
        hi = lo + len(users)
        self._user[lo:hi] = users
        self._ell[lo:hi] = ell
        self._j[lo:hi] = j
        self._r[lo:hi] = r
        self._y[lo:hi] = y
        self._seen[users] = True
        self.count = hi

    def ingest(self, report: Report, assignment: tuple[int, int, int]) -> None:
        """Fold in a single report; exactly one cell changes by +-1."""
        if report.phase != self.phase:
            raise ValueError(f"report phase {report.phase!r} does not match accumulator {self.phase!r}")
        ell, j, r = assignment
        self.ingest_bulk(
            np.array([report.user]),
            np.array([report.bit], dtype=np.int8),
            np.array([ell]),
            np.array([j]),
            np.array([r]),
        )

    def merge(self, other: "SketchAccumulator") -> None:
        """Fold a shard built over a disjoint user set into this accumulator.

        Cell-wise addition of the underlying sums; associative and
        commutative, so shards may combine in any order.  Overlapping user
        sets are rejected like any duplicate report.
        """
        if (other.phase, other.n, other.domain_bits, other.t, other.m) != (
            self.phase, self.n, self.domain_bits, self.t, self.m,
        ):
            raise ValueError("cannot merge accumulators with different shapes")
        c = other.count
        self.ingest_bulk(other._user[:c], other._y[:c], other._ell[:c], other._j[:c], other._r[:c])

    def _keys(self, level: int | None) -> np.ndarray:
        if self.phase == PRUNING:
            if level is None:
                raise ValueError("pruning-phase tables are per level")
            mask = self._ell[: self.count] == level
        else:
            if level is not None:
                raise ValueError("final-phase table has no level coordinate")
            mask = slice(0, self.count)
        return self._j[: self.count][mask].astype(np.int64) * self.m + self._r[: self.count][mask], mask

    def table(self, level: int | None = None, dtype=np.int64) -> np.ndarray:
        """(t, m) cell sums, for one level (pruning) or overall (final).

        Summation goes through float64 (exact for counts below 2^53) to keep
        the pass over the t*m grid single-allocation.
        """
        keys, mask = self._keys(level)
        y = self._y[: self.count][mask]
        sums = np.bincount(keys, weights=y.astype(np.float64), minlength=self.t * self.m)
        return sums.reshape(self.t, self.m).astype(dtype)

    def contribution_counts(self, level: int | None = None) -> np.ndarray:
        """(t, m) number of reports folded into each cell (for conservation checks)."""
        keys, _ = self._keys(level)
        return np.bincount(keys, minlength=self.t * self.m).reshape(self.t, self.m)

    def cell(self, j: int, kappa: int, level: int | None = None) -> int:
        return int(self.table(level)[j, kappa])


def freq_oracle(
    acc: SketchAccumulator,
    query_values: np.ndarray,
    level: int,
    gamma: float,
    params: TreeHistParams,
    hashes: HashPairFamily,
) -> tuple[np.ndarray, np.ndarray]:
    """Frequency estimates for equal-length prefixes against one report phase.

    For query v and hash j the estimate is
        gamma * a_eps * g_j(v) * sum_k B[j, k] * sign(k, h_j(v))
    and the returned estimate is the median over j (mean of the two middle
    order statistics when t is even).  Returns (estimates, per-hash matrix).
    """
    query_values = np.asarray(query_values, dtype=np.uint64)
    if level < 1 or level > params.domain_bits:
        raise ValueError(f"level {level} outside [1, {params.domain_bits}]")
    if acc.phase == FINAL and level != params.domain_bits:
        raise ValueError("final-phase queries must be full-length items")
    if len(query_values) and int(query_values.max()) >= (1 << level):
        raise ValueError(f"query does not fit in {level} bits")
    cell_dtype = np.int32 if acc.n < (1 << 31) else np.int64
    table32 = acc.table(level if acc.phase == PRUNING else None, dtype=cell_dtype)
    t, m = params.t, params.m
    scale = gamma * params.a_eps
    # sign(k, c) = 1 - 2*parity(k & c), so the dot product against a sign
    # column is the row total minus twice the sum over parity-1 cells
    rows = np.arange(m, dtype=np.uint32)
    row_totals = table32.sum(axis=1, dtype=np.int64)
    chunk = max(1, (8 << 20) // m)
    per_hash = np.empty((len(query_values), t), dtype=np.float64)
    for qi, q in enumerate(query_values):
        enc = encode_value(int(q), level)
        buckets = hashes.point_buckets(enc).astype(np.uint32)
        signs = hashes.point_signs(enc).astype(np.float64)
        dots = np.empty(t, dtype=np.int64)
        for lo in range(0, t, chunk):
            hi = min(t, lo + chunk)
            bits = (np.bitwise_count(buckets[lo:hi, None] & rows[None, :]) & 1).astype(np.int32)
            dots[lo:hi] = row_totals[lo:hi] - 2 * np.einsum("ij,ij->i", table32[lo:hi], bits, dtype=np.int64)
        per_hash[qi] = scale * signs * dots
    estimates = np.median(per_hash, axis=1) if len(query_values) else np.empty(0)
    return estimates, per_hash


def run_treehist(
    values: np.ndarray,
    params: TreeHistParams,
    seed: int,
    *,
    prune_threshold: float | None = None,
    max_survivors: int | None = None,
) -> HeavyHitters:
    """Run the full two-phase protocol over the users' items.

    Items are visited once per phase and never stored server-side; the server
    sees only the two report streams.  Nodes survive a level when their
    estimate reaches `prune_threshold` (default 2*eta); the final phase
    re-estimates the surviving leaves over all users and returns them sorted
    by estimate, descending.
    """
    values = np.asarray(values, dtype=np.uint64)
    n = len(values)
    if n != params.n:
        raise ValueError(f"params expect n={params.n}, dataset has {n}")
    if n and int(values.max()) >= params.d:
        raise ValueError("item outside the domain")
    D = params.domain_bits
    threshold = 2.0 * params.eta if prune_threshold is None else float(prune_threshold)
    sr = SharedRandomness(seed, n)
    hashes = sr.hash_pairs(params.t, D, params.m, ROLE_TH_PAIRS)
    ell, j, r = sr.treehist_assignment(D, params.t, params.m)
    keep_p = keep_probability(params.epsilon / 2.0)
    users = np.arange(n)
    timings: dict[str, float] = {}

    tic = time.perf_counter()
    y_prune = local_randomizer_bits(values, D, ell, j, r, hashes, keep_p, sr.rng(ROLE_TH_NOISE_PRUNE), final=False)
    y_final = local_randomizer_bits(values, D, ell, j, r, hashes, keep_p, sr.rng(ROLE_TH_NOISE_FINAL), final=True)
    timings["client_reports"] = time.perf_counter() - tic

    tic = time.perf_counter()
    acc_prune = SketchAccumulator(PRUNING, n, D, params.t, params.m)
    acc_prune.ingest_bulk(users, y_prune, ell, j, r)
    acc_final = SketchAccumulator(FINAL, n, D, params.t, params.m)
    acc_final.ingest_bulk(users, y_final, ell, j, r)
    timings["ingest"] = time.perf_counter() - tic
    assert acc_prune.count == n and acc_final.count == n

    prefixes = [EMPTY]
    queried_per_level: list[int] = []
    survivors_per_level: list[int] = []
    gamma_prune = float(params.t * D)
    tic = time.perf_counter()
    for level in range(1, D + 1):
        candidates = child_set(prefixes, D)
        queried_per_level.append(len(candidates))
        if not candidates:
            survivors_per_level.append(0)
            prefixes = []
            continue
        cand_values = np.array([c.value for c in candidates], dtype=np.uint64)
        est, _ = freq_oracle(acc_prune, cand_values, level, gamma_prune, params, hashes)
        keep = np.flatnonzero(est >= threshold)
        if max_survivors is not None and len(keep) > max_survivors:
            order = np.argsort(-est[keep], kind="stable")
            keep = keep[order[:max_survivors]]
            keep.sort()
        prefixes = [candidates[i] for i in keep]
        survivors_per_level.append(len(prefixes))
    timings["scan_queries"] = time.perf_counter() - tic

    tic = time.perf_counter()
    leaf_values = np.array([p.value for p in prefixes], dtype=np.uint64)
    est, _ = freq_oracle(acc_final, leaf_values, D, float(params.t), params, hashes)
    timings["final_queries"] = time.perf_counter() - tic

    order = sorted(range(len(prefixes)), key=lambda i: (-est[i], leaf_values[i]))
    items = [int(leaf_values[i]) for i in order]
    estimates = [float(est[i]) for i in order]
    meta = {
        "protocol": "treehist",
        "seed": seed,
        "n": n,
        "domain_bits": D,
        "epsilon": params.epsilon,
        "beta": params.beta,
        "t": params.t,
        "m": params.m,
        "eta": params.eta,
        "prune_threshold": threshold,
        "queried_per_level": queried_per_level,
        "survivors_per_level": survivors_per_level,
        "timings": timings,
    }
    return HeavyHitters(items, estimates, D, meta)
