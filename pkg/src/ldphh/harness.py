"""Experiment engine: data generation, ground truth, metrics, seeded repetitions.

Datasets are arrays of fixed-width items plus provenance.  Ground truth is an
exact frequency map, computed independently of any protocol.  Experiments run
a protocol over derived per-repetition seeds and aggregate precision, recall,
and error metrics with their spread.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import math

import numpy as np

from ._bits import next_pow2
from .bitstogram import ExplicitHist, bitstogram_params, run_bitstogram
from .core import HeavyHitters, treehist_params
from .treehist import run_treehist

__all__ = [
    "Dataset",
    "GroundTruth",
    "EvalReport",
    "PAD_CHAR",
    "canonical_token",
    "encode_token",
    "decode_item",
    "gen_powerlaw",
    "ingest_corpus",
    "exact_counts",
    "evaluate",
    "ExperimentConfig",
    "summarize",
    "run_experiment",
    "write_dataset",
    "read_dataset",
]

PAD_CHAR = "⊥"  # padding glyph for short tokens
_ALPHABET = "abcdefghijklmnopqrstuvwxyz" + PAD_CHAR
_CHAR_BITS = 5
_CHAR_CODE = {c: i for i, c in enumerate(_ALPHABET)}


@dataclass
class Dataset:
    """n items of fixed width, with a record of where they came from."""

    items: np.ndarray
    domain_bits: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.items = np.asarray(self.items, dtype=np.uint64)
        if len(self.items) < 1:
            raise ValueError("a dataset needs at least one item")
        if not 1 <= self.domain_bits <= 63:
            raise ValueError("domain_bits must lie in [1, 63]")
        if int(self.items.max()) >= (1 << self.domain_bits):
            raise ValueError("item wider than domain_bits")

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def d(self) -> int:
        return 1 << self.domain_bits


@dataclass
class GroundTruth:
    """Exact frequency of every item that occurs; everything else is 0."""

    counts: dict[int, int]
    n: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.n:
            raise ValueError("frequencies must sum to n")

    def frequency(self, item: int) -> int:
        return self.counts.get(item, 0)

    def heavy_items(self, threshold: float) -> set[int]:
        return {v for v, f in self.counts.items() if f >= threshold}


@dataclass
class EvalReport:
    """Quality of one heavy-hitter list against exact ground truth."""

    threshold: float
    precision: float
    recall: float
    linf_error: float
    list_max_error: float
    list_length: int
    per_item: list[tuple[int, int, float]]  # (item, true f, estimate)
    runtimes: dict[str, float] | None = None


def canonical_token(token: str, length: int = 6) -> str:
    """Truncate to `length` characters, or pad short tokens at the end."""
    if any(c not in _CHAR_CODE or c == PAD_CHAR for c in token):
        raise ValueError(f"token {token!r} outside the a-z alphabet")
    if len(token) >= length:
        return token[:length]
    return token + PAD_CHAR * (length - len(token))


def token_domain_bits(length: int = 6) -> int:
    """Item width for tokens of this length: 5 bits per character, rounded up
    to a power of two so derived hash widths stay byte-friendly."""
    return next_pow2(_CHAR_BITS * length)


def encode_token(token: str, length: int = 6, domain_bits: int | None = None) -> int:
    """Canonicalize and pack a token into a fixed-width item, high bits first."""
    canon = canonical_token(token, length)
    if domain_bits is None:
        domain_bits = token_domain_bits(length)
    content = _CHAR_BITS * length
    if domain_bits < content:
        raise ValueError(f"{length}-char tokens need at least {content} bits")
    value = 0
    for c in canon:
        value = (value << _CHAR_BITS) | _CHAR_CODE[c]
    return value << (domain_bits - content)


def decode_item(value: int, length: int = 6, domain_bits: int | None = None) -> str:
    """Inverse of encode_token for displaying results; pads render as '⊥'."""
    if domain_bits is None:
        domain_bits = token_domain_bits(length)
    content = _CHAR_BITS * length
    value >>= domain_bits - content
    chars = []
    for i in range(length):
        code = (value >> (_CHAR_BITS * (length - 1 - i))) & ((1 << _CHAR_BITS) - 1)
        chars.append(_ALPHABET[code] if code < len(_ALPHABET) else "?")
    return "".join(chars)


def gen_powerlaw(domain_bits: int, n: int, power: float, bins: int, seed: int) -> Dataset:
    """Synthetic dataset: bin k of `bins` gets mass proportional to k^-power,
    each bin is a distinct random item, and n samples are drawn."""
    if power <= 1:
        raise ValueError("power must exceed 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    if bins > (1 << domain_bits):
        raise ValueError(f"{bins} bins do not fit in a {domain_bits}-bit domain")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    weights = np.arange(1, bins + 1, dtype=np.float64) ** (-float(power))
    weights /= weights.sum()
    # distinct random items, one per bin
    items: list[int] = []
    seen: set[int] = set()
    while len(items) < bins:
        draw = int(rng.integers(0, 1 << domain_bits, dtype=np.uint64))
        if draw not in seen:
            seen.add(draw)
            items.append(draw)
    bin_items = np.array(items, dtype=np.uint64)
    counts = rng.multinomial(n, weights)
    data = np.repeat(bin_items, counts)
    rng.shuffle(data)
    return Dataset(
        data,
        domain_bits,
        provenance={"kind": "powerlaw", "power": power, "bins": bins, "seed": seed},
    )


def ingest_corpus(
    path: str,
    n: int,
    seed: int,
    *,
    length: int = 6,
    domain_bits: int | None = None,
) -> Dataset:
    """Sample n tokens i.i.d. with replacement from a newline-delimited word file
    and encode them as fixed-width items."""
    with open(path, encoding="utf-8") as fh:
        tokens = [line.strip() for line in fh if line.strip()]
    if not tokens:
        raise ValueError(f"corpus file {path} is empty")
    if domain_bits is None:
        domain_bits = token_domain_bits(length)
    encoded = np.array([encode_token(t, length, domain_bits) for t in tokens], dtype=np.uint64)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2,)))
    picks = rng.integers(0, len(tokens), size=n)
    return Dataset(
        encoded[picks],
        domain_bits,
        provenance={"kind": "corpus", "path": os.path.basename(path), "length": length, "seed": seed},
    )


def exact_counts(ds: Dataset) -> GroundTruth:
    values, counts = np.unique(ds.items, return_counts=True)
    return GroundTruth({int(v): int(c) for v, c in zip(values, counts)}, ds.n)


def evaluate(result: HeavyHitters, gt: GroundTruth, threshold: float) -> EvalReport:
    """Precision/recall at the given count threshold, plus error metrics.

    Precision and recall follow the 0/0 -> 1 convention: an empty list is
    fully precise, and recall is 1 when there is nothing to find.  The
    l-infinity error treats unlisted items as estimated 0, so it is the max
    of the listed errors and the largest unlisted true frequency.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    heavy = gt.heavy_items(threshold)
    listed = result.items
    per_item = [(v, gt.frequency(v), est) for v, est in result.entries]
    list_errors = [abs(est - f) for _, f, est in per_item]
    list_max_error = max(list_errors, default=0.0)
    unlisted_max = max((f for v, f in gt.counts.items() if v not in set(listed)), default=0)
    linf = max(list_max_error, float(unlisted_max))
    true_positives = sum(1 for v in listed if v in heavy)
    precision = true_positives / len(listed) if listed else 1.0
    recall = sum(1 for v in heavy if v in set(listed)) / len(heavy) if heavy else 1.0
    return EvalReport(
        threshold=threshold,
        precision=precision,
        recall=recall,
        linf_error=linf,
        list_max_error=list_max_error,
        list_length=len(listed),
        per_item=per_item,
        runtimes=result.meta.get("timings"),
    )


@dataclass
class ExperimentConfig:
    """One experiment: a protocol, its budget, and how many seeded repetitions."""

    protocol: str  # treehist | bitstogram | explicit-oracle
    epsilon: float
    beta: float = 0.05
    seed: int = 0
    repetitions: int = 1
    threshold: float | None = None  # default 15*sqrt(n)
    overrides: dict = field(default_factory=dict)

    _PROTOCOLS = ("treehist", "bitstogram", "explicit-oracle")
    _OVERRIDE_KEYS = ("t", "m", "eta", "prune_threshold", "max_survivors", "R", "T")

    def __post_init__(self):
        if self.protocol not in self._PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}; choose from {self._PROTOCOLS}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        unknown = set(self.overrides) - set(self._OVERRIDE_KEYS)
        if unknown:
            raise ValueError(f"unknown override keys: {sorted(unknown)}")


def _rep_seed(master: int, k: int) -> int:
    return int(np.random.SeedSequence(entropy=master, spawn_key=(900, k)).generate_state(1, np.uint64)[0])


def _run_once(cfg: ExperimentConfig, ds: Dataset, seed: int) -> HeavyHitters:
    o = cfg.overrides
    if cfg.protocol == "treehist":
        params = treehist_params(
            ds.n, ds.d, cfg.epsilon, cfg.beta,
            t=o.get("t"), m=o.get("m"), eta=o.get("eta"),
        )
        return run_treehist(
            ds.items, params, seed,
            prune_threshold=o.get("prune_threshold"),
            max_survivors=o.get("max_survivors"),
        )
    if cfg.protocol == "bitstogram":
        params = bitstogram_params(ds.n, ds.d, cfg.epsilon, cfg.beta, R=o.get("R"), T=o.get("T"))
        return run_bitstogram(ds.items, params, seed)
    # explicit-oracle: estimate every domain element (or the support, if the
    # domain is too large to enumerate) and keep those above the threshold
    import time

    tic = time.perf_counter()
    oracle = ExplicitHist(ds.items, ds.d, cfg.epsilon, np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(3,))))
    if ds.domain_bits <= 16:
        queries = np.arange(ds.d, dtype=np.uint64)
    else:
        queries = np.array(sorted(exact_counts(ds).counts), dtype=np.uint64)
    estimates = oracle.query_many(queries)
    elapsed = time.perf_counter() - tic
    threshold = cfg.threshold if cfg.threshold is not None else 15.0 * math.sqrt(ds.n)
    order = sorted(range(len(queries)), key=lambda i: (-estimates[i], queries[i]))
    kept = [i for i in order if estimates[i] >= threshold]
    meta = {
        "protocol": "explicit-oracle",
        "seed": seed,
        "n": ds.n,
        "domain_bits": ds.domain_bits,
        "epsilon": cfg.epsilon,
        "timings": {"oracle": elapsed},
        "all_queries": [[int(queries[i]), float(estimates[i])] for i in order],
    }
    return HeavyHitters([int(queries[i]) for i in kept], [float(estimates[i]) for i in kept], ds.domain_bits, meta)


def summarize(results: list[HeavyHitters], gt: GroundTruth, threshold: float) -> dict:
    """Per-repetition metrics and their aggregates, recomputable from raw lists.

    Unlisted repetitions contribute the implicit estimate 0 to an item's mean.
    Standard deviations (sample, ddof=1) are present only with >= 2 reps.
    """
    reports = [evaluate(res, gt, threshold) for res in results]

    def agg(vals: list[float]) -> dict:
        out = {"mean": float(np.mean(vals))}
        if len(vals) > 1:
            out["std"] = float(np.std(vals, ddof=1))
        return out

    metrics = {
        "precision": agg([r.precision for r in reports]),
        "recall": agg([r.recall for r in reports]),
        "linf_error": agg([r.linf_error for r in reports]),
        "list_max_error": agg([r.list_max_error for r in reports]),
        "list_length": agg([float(r.list_length) for r in reports]),
    }
    union = sorted({v for res in results for v in res.items})
    per_item = []
    for v in union:
        ests = [res.estimate(v) for res in results]
        row = {
            "item": v,
            "true_f": gt.frequency(v),
            "est_mean": float(np.mean(ests)),
            "listed_in": sum(1 for res in results if v in set(res.items)),
        }
        if len(ests) > 1:
            row["est_std"] = float(np.std(ests, ddof=1))
        per_item.append(row)
    return {
        "metrics": metrics,
        "per_item": per_item,
        "per_rep_metrics": [
            {
                "precision": r.precision,
                "recall": r.recall,
                "linf_error": r.linf_error,
                "list_max_error": r.list_max_error,
                "list_length": r.list_length,
            }
            for r in reports
        ],
    }


def run_experiment(cfg: ExperimentConfig, ds: Dataset) -> dict:
    """Run the configured protocol over seeded repetitions and aggregate.

    Returns a JSON-ready document: per-repetition raw outputs (list, seed,
    timings), per-repetition metrics, and mean/std aggregates.  Every metric
    is recomputable from the raw outputs and the dataset alone.
    """
    gt = exact_counts(ds)
    threshold = cfg.threshold if cfg.threshold is not None else 15.0 * math.sqrt(ds.n)
    seeds = [_rep_seed(cfg.seed, k) for k in range(cfg.repetitions)]
    workers = int(os.environ.get("LDP_HH_THREADS", "1") or "1")
    if workers > 1 and cfg.repetitions > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _run_once(cfg, ds, s), seeds))
    else:
        results = [_run_once(cfg, ds, s) for s in seeds]
    doc = {
        "protocol": cfg.protocol,
        "threshold": threshold,
        "repetitions": cfg.repetitions,
        "seeds": seeds,
        "runs": [
            {
                "seed": seeds[k],
                "items": [[int(v), float(e)] for v, e in results[k].entries],
                "meta": {kk: vv for kk, vv in results[k].meta.items() if kk != "timings"},
                "timings": results[k].meta.get("timings", {}),
            }
            for k in range(cfg.repetitions)
        ],
    }
    doc.update(summarize(results, gt, threshold))
    return doc


def write_dataset(ds: Dataset, path: str) -> None:
    """Write the on-disk format: a header line, then one hex item per line."""
    width = (ds.domain_bits + 3) // 4
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"ldp-items v1 D={ds.domain_bits} n={ds.n}\n")
        for v in ds.items:
            fh.write(format(int(v), f"0{width}x"))
            fh.write("\n")


def read_dataset(path: str) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        parts = header.split()
        if len(parts) != 4 or parts[0] != "ldp-items" or parts[1] != "v1":
            raise ValueError(f"not a dataset file: bad header {header!r}")
        try:
            domain_bits = int(parts[2].removeprefix("D="))
            n = int(parts[3].removeprefix("n="))
        except ValueError as exc:
            raise ValueError(f"not a dataset file: bad header {header!r}") from exc
        items = np.array([int(line.strip(), 16) for line in fh if line.strip()], dtype=np.uint64)
    if len(items) != n:
        raise ValueError(f"header promises n={n} items, file has {len(items)}")
    return Dataset(items, domain_bits, provenance={"kind": "file", "path": os.path.basename(path)})
