"""Low-level bit twiddling and GF(2^w) arithmetic used by the hash families."""

import numpy as np

_U64 = np.uint64


def next_pow2(x) -> int:
    """Smallest power of two >= x (x > 0)."""
    if x <= 0:
        raise ValueError("next_pow2 requires a positive argument")
    n = int(x)
    if n < x:
        n += 1
    return 1 << max(0, (n - 1).bit_length())


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def round_half_away(x: float) -> int:
    """Round to nearest integer, halves away from zero."""
    import math

    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


def parity_u64(arr: np.ndarray) -> np.ndarray:
    """Per-element XOR of all bits, as uint8 in {0, 1}."""
    return (np.bitwise_count(arr) & 1).astype(np.uint8)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a (..., k) array of 0/1 into integers, bit 0 = last axis index 0."""
    k = bits.shape[-1]
    weights = (np.uint64(1) << np.arange(k, dtype=_U64))
    return (bits.astype(_U64) * weights).sum(axis=-1, dtype=_U64)


# Low-weight irreducible polynomials over GF(2), one per degree w in 1..64.
# Entry w lists the middle exponents of x^w + ... + 1 (the w and 0 terms are
# implicit).  Verified by a Rabin irreducibility check in the test suite.
_IRREDUCIBLE_EXPONENTS = {
    1: (), 2: (1,), 3: (1,), 4: (1,), 5: (2,), 6: (1,), 7: (1,),
    8: (4, 3, 1), 9: (1,), 10: (3,), 11: (2,), 12: (3,), 13: (4, 3, 1),
    14: (5,), 15: (1,), 16: (5, 3, 1), 17: (3,), 18: (3,), 19: (5, 2, 1),
    20: (3,), 21: (2,), 22: (1,), 23: (5,), 24: (4, 3, 1), 25: (3,),
    26: (4, 3, 1), 27: (5, 2, 1), 28: (1,), 29: (2,), 30: (1,), 31: (3,),
    32: (7, 3, 2), 33: (10,), 34: (7,), 35: (2,), 36: (9,), 37: (6, 4, 1),
    38: (6, 5, 1), 39: (4,), 40: (5, 4, 3), 41: (3,), 42: (7,),
    43: (6, 4, 3), 44: (5,), 45: (4, 3, 1), 46: (1,), 47: (5,),
    48: (5, 3, 2), 49: (9,), 50: (4, 3, 2), 51: (6, 3, 1), 52: (3,),
    53: (6, 2, 1), 54: (9,), 55: (7,), 56: (7, 4, 2), 57: (4,), 58: (19,),
    59: (7, 4, 2), 60: (1,), 61: (5, 2, 1), 62: (29,), 63: (1,),
    64: (4, 3, 1),
}


def field_poly(w: int) -> int:
    """Modulus for GF(2^w), as an integer including the x^w term."""
    if w not in _IRREDUCIBLE_EXPONENTS:
        raise ValueError(f"no irreducible polynomial tabulated for degree {w}")
    p = (1 << w) | 1
    for e in _IRREDUCIBLE_EXPONENTS[w]:
        p |= 1 << e
    return p


def gf2_mul(a: int, b: int, w: int, poly: int | None = None) -> int:
    """Multiply in GF(2^w) (carry-less product reduced mod the field poly)."""
    if poly is None:
        poly = field_poly(w)
    top = 1 << w
    acc = 0
    shifted = a
    while b:
        if b & 1:
            acc ^= shifted
        b >>= 1
        shifted <<= 1
        if shifted & top:
            shifted ^= poly
    return acc


def gf2_mul_columns(a: int, w: int, poly: int | None = None) -> list[int]:
    """Columns of the multiply-by-a matrix over GF(2)^w.

    Column i is a * x^i in GF(2^w); bit k of column i tells whether input
    bit i feeds output bit k of the product a*x.
    """
    if poly is None:
        poly = field_poly(w)
    top = 1 << w
    cols = []
    col = a
    for _ in range(w):
        cols.append(col)
        col <<= 1
        if col & top:
            col ^= poly
    return cols
