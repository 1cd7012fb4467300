"""Binary items, prefixes, and the shared protocol parameters.

Items are fixed-width bit strings over a power-of-two domain: an item for a
domain of size d occupies exactly D = log2(d) bits.  Bit order is big-endian
throughout: the most significant bit is the first tree level, so the strings
of length `l` are the nodes at depth `l` of the implicit prefix tree.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from ._bits import is_pow2, next_pow2, round_half_away

__all__ = [
    "Bits",
    "EMPTY",
    "prefix_of",
    "children",
    "child_set",
    "TreeHistParams",
    "treehist_params",
    "HeavyHitters",
    "bias_factor",
]


@dataclass(frozen=True, order=True)
class Bits:
    """An immutable bit string of explicit length (length 0 is the empty root).

    `value` holds the bits numerically with the first bit as the most
    significant, so lexicographic order on equal-length strings is numeric
    order on `value`.
    """

    length: int
    value: int

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be >= 0")
        if not 0 <= self.value < (1 << self.length):
            raise ValueError(f"value {self.value} does not fit in {self.length} bits")

    @classmethod
    def from_string(cls, s: str) -> "Bits":
        if s and set(s) - {"0", "1"}:
            raise ValueError(f"not a bit string: {s!r}")
        return cls(len(s), int(s, 2) if s else 0)

    def __str__(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""

    def __len__(self) -> int:
        return self.length

    @property
    def encoded(self) -> int:
        """Length-injective integer encoding: the bits with a leading 1 prepended.

        Distinct strings of any lengths encode to distinct integers, which is
        what lets one hash function family cover every tree level at once.
        """
        return self.value | (1 << self.length)


EMPTY = Bits(0, 0)


def encode_value(value: int, length: int) -> int:
    """`Bits(length, value).encoded` without constructing the object."""
    return value | (1 << length)


def prefix_of(v: Bits, length: int) -> Bits:
    """First `length` bits of v."""
    if length < 0 or length > v.length:
        raise ValueError(f"prefix length {length} out of range for a {v.length}-bit string")
    return Bits(length, v.value >> (v.length - length))


def children(p: Bits, domain_bits: int) -> tuple[Bits, Bits]:
    """The two one-bit extensions (p||0, p||1) of a non-leaf prefix."""
    if p.length >= domain_bits:
        raise ValueError(f"{p.length}-bit prefix is a leaf in a {domain_bits}-bit domain")
    return Bits(p.length + 1, p.value << 1), Bits(p.length + 1, (p.value << 1) | 1)


def child_set(prefixes, domain_bits: int) -> list[Bits]:
    """Union of children of a set of equal-length prefixes, in lexicographic order."""
    prefixes = list(prefixes)
    if not prefixes:
        return []
    lengths = {p.length for p in prefixes}
    if len(lengths) != 1:
        raise ValueError(f"prefixes must share one length, got lengths {sorted(lengths)}")
    out = set()
    for p in prefixes:
        out.update(children(p, domain_bits))
    return sorted(out)


def bias_factor(epsilon: float) -> float:
    """Debias factor (e^(eps/2)+1)/(e^(eps/2)-1) for a protocol of budget eps.

    Each of the two report bits spends eps/2, so the per-bit correction uses
    the half budget.  Tends to 1 as eps -> inf, to infinity as eps -> 0+.
    """
    from .randomness import rr_debias

    return rr_debias(epsilon / 2.0)


@dataclass(frozen=True)
class TreeHistParams:
    """Global parameters shared by clients and server for one TreeHist run.

    The derived fields follow fixed formulas (see `treehist_params`), but the
    dataclass accepts explicit values so tests and experiments can override
    any of them.
    """

    n: int
    d: int
    epsilon: float
    beta: float
    t: int  # number of (bucket, sign) hash pairs
    m: int  # range of the bucket hashes; power of two
    eta: float  # pruning scale in count units; nodes survive at 2*eta
    a_eps: float = field(default=0.0)

    def __post_init__(self):
        if not is_pow2(self.d) or self.d < 2:
            raise ValueError(f"domain size d={self.d} is not a power of two >= 2")
        if not is_pow2(self.m):
            raise ValueError(f"m={self.m} is not a power of two")
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.a_eps == 0.0:
            object.__setattr__(self, "a_eps", bias_factor(self.epsilon))

    @property
    def domain_bits(self) -> int:
        return self.d.bit_length() - 1


def treehist_params(
    n: int,
    d: int,
    epsilon: float,
    beta: float,
    *,
    t: int | None = None,
    m: int | None = None,
    eta: float | None = None,
) -> TreeHistParams:
    """Derive the TreeHist parameters for n users over a d-element domain.

    t = round(110 * ln(n/beta)), m = next power of two >= 48 * sqrt(n / ln(n/beta)),
    eta = 147 * sqrt(n * ln(n/beta) * log2(d)) / epsilon.  Keyword arguments
    override individual fields.  Logarithms of n/beta are natural; log of the
    domain size counts bits.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not is_pow2(d) or d < 2:
        raise ValueError(f"domain size d={d} is not a power of two >= 2")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    log_nb = math.log(n / beta)
    domain_bits = d.bit_length() - 1
    if n <= log_nb * domain_bits:
        warnings.warn(
            f"n={n} is at most ln(n/beta)*log2(d)={log_nb * domain_bits:.1f}; "
            "only trivial accuracy is possible at this scale",
            stacklevel=2,
        )
    if t is None:
        t = round_half_away(110.0 * log_nb)
    if m is None:
        m = next_pow2(48.0 * math.sqrt(n / log_nb))
    if eta is None:
        eta = 147.0 * math.sqrt(n * log_nb * domain_bits) / epsilon
    return TreeHistParams(n=n, d=d, epsilon=epsilon, beta=beta, t=t, m=m, eta=eta)


@dataclass
class HeavyHitters:
    """An ordered succinct histogram: items paired with estimated counts.

    Items not listed are implicitly estimated as 0.  `meta` carries run
    metadata (parameter echo, seed, phase timings, per-level counters).
    """

    items: list[int]
    estimates: list[float]
    domain_bits: int
    meta: dict

    def __post_init__(self):
        if len(self.items) != len(self.estimates):
            raise ValueError("items and estimates must have equal length")
        if len(set(self.items)) != len(self.items):
            raise ValueError("listed items must be distinct")

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.items, self.estimates))

    def __len__(self) -> int:
        return len(self.items)

    def estimate(self, item: int) -> float:
        """Estimated count of `item`; 0 for unlisted items."""
        try:
            return self.estimates[self.items.index(item)]
        except ValueError:
            return 0.0
