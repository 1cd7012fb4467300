import numpy as np
import pytest

from ldphh import hadamard


def explicit_matrix(m: int) -> np.ndarray:
    """Sign pattern of the recursive construction, used as the oracle."""
    H = np.array([[1]], dtype=np.int64)
    while H.shape[0] < m:
        H = np.block([[H, H], [H, -H]])
    return H


def test_examples():
    assert all(hadamard.entry(16, 0, c) == 1 for c in range(16))
    assert hadamard.entry(2, 1, 1) == -1
    assert hadamard.entry(8, 5, 6) == -1  # (-1)^(1*1 + 0*1 + 1*0)


def test_matches_recursive_construction():
    for m in [1, 2, 4, 8, 16, 32, 64, 128, 256]:
        H = explicit_matrix(m)
        got = np.array([[hadamard.entry(m, r, c) for c in range(m)] for r in range(m)])
        assert np.array_equal(got, H)


def test_orthogonality_exhaustive():
    for m in [1, 2, 4, 8, 16, 32, 64, 128, 256]:
        cols = np.stack([hadamard.sign_vector(m, c) for c in range(m)]).astype(np.int64)
        gram = cols @ cols.T
        assert np.array_equal(gram, m * np.eye(m, dtype=np.int64))


def test_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(500):
        m = 2 ** int(rng.integers(0, 12))
        r, c = int(rng.integers(0, m)), int(rng.integers(0, m))
        assert hadamard.entry(m, r, c) == hadamard.entry(m, c, r)


def test_row_signs_matches_entry():
    m = 64
    rows = np.arange(m, dtype=np.uint64)
    for c in [0, 1, 17, 63]:
        vec = hadamard.row_signs(rows, np.uint64(c))
        assert np.array_equal(vec, [hadamard.entry(m, int(r), c) for r in rows])
        assert np.array_equal(vec, hadamard.sign_vector(m, c))


def test_errors():
    with pytest.raises(ValueError):
        hadamard.entry(3, 0, 0)
    with pytest.raises(IndexError):
        hadamard.entry(8, 8, 0)
    with pytest.raises(IndexError):
        hadamard.entry(8, 0, -1)
