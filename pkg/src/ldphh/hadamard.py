"""Implicit access to the +-1 Hadamard basis matrix of size m.

The matrix is never materialized; entry (r, c) is the parity of popcount(r & c)
mapped to a sign.  Indices are 0-based.  The protocol only ever reads single
entries (or vectors of them), never transforms whole vectors.
"""

from __future__ import annotations

import numpy as np

from ._bits import is_pow2

__all__ = ["entry", "sign_vector", "row_signs"]


def _check(m: int, *indices: int) -> None:
    if not is_pow2(m):
        raise ValueError(f"m={m} is not a power of two")
    for i in indices:
        if not 0 <= i < m:
            raise IndexError(f"index {i} outside [0, {m})")


def entry(m: int, r: int, c: int) -> int:
    """Sign of the (r, c) entry: (-1)^popcount(r & c)."""
    _check(m, r, c)
    return 1 - 2 * ((r & c).bit_count() & 1)


def sign_vector(m: int, c: int) -> np.ndarray:
    """Column c as an int8 vector of +-1 (equals row c by symmetry)."""
    _check(m, c)
    rows = np.arange(m, dtype=np.uint64)
    return (1 - 2 * (np.bitwise_count(rows & np.uint64(c)) & 1).astype(np.int8)).astype(np.int8)


def row_signs(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Entrywise signs for broadcastable arrays of row/column indices."""
    mix = np.bitwise_and(np.asarray(rows, dtype=np.uint64), np.asarray(cols, dtype=np.uint64))
    return (1 - 2 * (np.bitwise_count(mix) & 1).astype(np.int8)).astype(np.int8)
