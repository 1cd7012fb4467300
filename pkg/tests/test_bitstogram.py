import math

import numpy as np
import pytest

from ldphh import bitstogram as bg
from ldphh.randomness import keep_probability, max_likelihood_ratio


# ---------------------------------------------------------------- basic randomizer


def test_noiseless_mode_is_identity():
    rng = np.random.default_rng(0)
    x = np.array([1, -1, -1, 1], dtype=np.int8)
    assert np.array_equal(bg.basic_randomizer_bits(x, math.inf, rng), x)


def test_ln3_gives_three_quarters():
    assert keep_probability(math.log(3)) == pytest.approx(0.75, abs=1e-15)
    rng = np.random.default_rng(1)
    x = np.ones(100_000, dtype=np.int8)
    rate = float(np.mean(bg.basic_randomizer_bits(x, math.log(3), rng) == 1))
    assert abs(rate - 0.75) <= 0.01


def test_exact_privacy_ratio():
    for eps in [0.5, 1.0, math.log(3), 3.0]:
        p = keep_probability(eps)
        assert p / (1 - p) == pytest.approx(math.exp(eps), rel=1e-12)
        assert max_likelihood_ratio(p) == pytest.approx(math.exp(eps), rel=1e-12)


def test_scalar_wrapper_validates():
    with pytest.raises(ValueError):
        bg.basic_randomizer(0, 1.0, np.random.default_rng(0))


# ---------------------------------------------------------------- explicit oracle


def test_explicit_hist_formula_bit_exact():
    # grouped-by-column evaluation == naive per-user loop, exactly
    rng = np.random.default_rng(2)
    values = rng.integers(0, 40, 500).astype(np.uint64)
    eh = bg.ExplicitHist(values, 40, 1.0, np.random.default_rng(7))
    for v in [0, 1, 17, 39]:
        naive = eh.debias * sum(
            int(eh.y[u]) * eh.columns.descriptor(u).entry(v) for u in range(eh.n)
        )
        assert eh.query(v) == pytest.approx(naive, rel=1e-12)
        assert eh.query(v) == pytest.approx(eh.query_direct(v), rel=1e-12)


def test_explicit_hist_unbiased():
    # planted count recovered in expectation: mean of 100 seeded runs within 3 SE
    n, eps, planted, f = 10_000, 1.0, 3, 2000
    rng = np.random.default_rng(5)
    values = np.where(np.arange(n) < f, planted, rng.integers(4, 64, n)).astype(np.uint64)
    estimates = [
        bg.ExplicitHist(values, 64, eps, np.random.default_rng(1000 + s)).query(planted)
        for s in range(100)
    ]
    mean = float(np.mean(estimates))
    se = float(np.std(estimates, ddof=1)) / math.sqrt(len(estimates))
    assert abs(mean - f) <= 3 * se


def test_explicit_hist_validation():
    with pytest.raises(ValueError):
        bg.ExplicitHist(np.array([5], dtype=np.uint64), 4, 1.0, np.random.default_rng(0))
    eh = bg.ExplicitHist(np.array([1, 2], dtype=np.uint64), 4, 1.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        eh.query(4)


# ---------------------------------------------------------------- hashtogram


def test_hashtogram_bucketed_equals_direct():
    rng = np.random.default_rng(3)
    for _ in range(15):
        n = int(rng.integers(20, 600))
        bits = int(rng.integers(2, 10))
        R = int(rng.integers(1, 8))
        T = int(2 ** rng.integers(1, 6))
        values = rng.integers(0, 1 << bits, n).astype(np.uint64)
        st = bg.hashtogram_build(values, bits, R, T, 1.0, np.random.default_rng(int(rng.integers(0, 2**32))))
        assert np.array_equal(st.cells, st.cells_direct())


def test_hashtogram_empty_subset_has_zero_cells():
    # more subsets than users guarantees empty ones
    values = np.arange(4, dtype=np.uint64)
    st = bg.hashtogram_build(values, 3, R=16, T=8, epsilon=1.0, rng=np.random.default_rng(1))
    empty = np.setdiff1d(np.arange(16), st.subset)
    assert len(empty) > 0
    assert np.all(st.cells[empty] == 0)


def test_hashtogram_determinism():
    values = np.random.default_rng(0).integers(0, 64, 300).astype(np.uint64)
    a = bg.hashtogram_build(values, 6, 4, 16, 1.0, np.random.default_rng(9))
    b = bg.hashtogram_build(values, 6, 4, 16, 1.0, np.random.default_rng(9))
    assert np.array_equal(a.cells, b.cells)
    assert bg.hashtogram_query(a, 5) == bg.hashtogram_query(b, 5)


def test_hashtogram_single_subset_median():
    values = np.random.default_rng(0).integers(0, 64, 200).astype(np.uint64)
    st = bg.hashtogram_build(values, 6, R=1, T=16, epsilon=1.0, rng=np.random.default_rng(2))
    v = 9
    cell = int(st.hashes.eval_point(int(np.uint64(v) | np.uint64(1) << np.uint64(6)))[0])
    assert bg.hashtogram_query(st, v) == pytest.approx(st.debias * st.cells[0, cell], rel=1e-12)


@pytest.mark.slow
def test_hashtogram_planted_heavy_envelope():
    # half the users hold one item; the estimate must stay inside the coarse
    # high-probability envelope in >= 18 of 20 seeded runs
    n, eps, beta = 100_000, 1.0, 0.1
    preset = bg.hashtogram_preset_outer(n, d_prime=1, beta=beta, epsilon=eps)
    planted, absent = 77, 123456
    rng = np.random.default_rng(0)
    values = np.where(np.arange(n) < n // 2, planted, rng.integers(1000, 1 << 20, n)).astype(np.uint64)
    bound = (400.0 / eps) * math.sqrt(n * math.log(12 * n * 1 / beta))
    ok_planted = ok_absent = 0
    for s in range(20):
        st = bg.hashtogram_build(values, 20, preset.R, preset.T, eps, np.random.default_rng(5000 + s))
        ok_planted += abs(bg.hashtogram_query(st, planted) - n // 2) <= bound
        ok_absent += abs(bg.hashtogram_query(st, absent)) <= bound
    assert ok_planted >= 18
    assert ok_absent >= 18


# ---------------------------------------------------------------- codes


def test_repetition_code_examples():
    c = bg.RepetitionCode(3, 5)
    assert c.encode(0b101) == 0b111110000011111
    assert c.decode(c.encode(0b101)) == 0b101
    # one flipped bit per block still decodes
    corrupted = c.encode(0b101) ^ 0b000010000100001
    assert c.decode(corrupted) == 0b101


def test_repetition_code_exhaustive_two_flips_per_block():
    # every byte, every single-block pattern of <= 2 flips, decodes correctly
    c = bg.RepetitionCode(8, 5)
    rows, expected = [], []
    patterns = [(i,) for i in range(5)] + [(i, k) for i in range(5) for k in range(i + 1, 5)]
    for value in range(256):
        base = np.array([(c.encode(value) >> (c.n_code - 1 - p)) & 1 for p in range(c.n_code)], dtype=np.uint8)
        for block in range(8):
            for pat in patterns:
                row = base.copy()
                for off in pat:
                    row[block * 5 + off] ^= 1
                rows.append(row)
                expected.append(value)
    decoded = c.decode_bits(np.stack(rows))
    assert np.array_equal(decoded, np.array(expected, dtype=np.uint64))


def test_code_vectorized_bit_access():
    c = bg.RepetitionCode(4, 3)
    values = np.array([0b1010, 0b0110], dtype=np.uint64)
    # position p repeats message bit p // reps, most significant first
    for pos in range(12):
        bits = c.encoded_bit(values, np.array([pos, pos]))
        src = pos // 3
        assert bits[0] == (0b1010 >> (3 - src)) & 1
        assert bits[1] == (0b0110 >> (3 - src)) & 1


def test_code_width_validation():
    c = bg.RepetitionCode(3, 5)
    with pytest.raises(ValueError):
        c.encode(8)
    with pytest.raises(ValueError):
        c.decode(1 << 15)


def test_identity_code_round_trip():
    c = bg.IdentityCode(6)
    assert c.encode(0b101100) == 0b101100
    assert c.decode(0b101100) == 0b101100
    assert c.n_code == 6


# ---------------------------------------------------------------- warmup protocol


def test_succinct_hist_noiseless_reconstruction():
    n = 4096
    values = np.full(n, 0b1011, dtype=np.uint64)
    res = bg.succinct_hist(values, 4, math.inf, seed=3, T=4)
    assert res.items[0] == 0b1011
    assert res.estimates[0] == pytest.approx(n)


def test_succinct_hist_table_has_exactly_T_slots():
    values = np.random.default_rng(0).integers(0, 256, 5000).astype(np.uint64)
    res = bg.succinct_hist(values, 8, 2.0, seed=1, T=8)
    assert len(res.meta["candidate_table"]) == 8
    assert len(res.items) <= 8
    assert res.meta["T"] == 8


def test_succinct_hist_planted_recovery_quick():
    # strong planted item: each of a handful of runs should catch it
    n, D, eps = 100_000, 8, 2.0
    w = bg.succinct_hist_scale(n, D, eps)
    assert w < 0.85 * n  # the detection scale leaves room at these parameters
    rng = np.random.default_rng(4)
    values = np.where(np.arange(n) < 0.85 * n, 0xAB, rng.integers(0, 256, n)).astype(np.uint64)
    hits = sum(0xAB in bg.succinct_hist(values, D, eps, seed=s).items for s in range(6))
    assert hits >= 5


# ---------------------------------------------------------------- full protocol


def test_bitstogram_params_defaults():
    p = bg.bitstogram_params(100_000, 2**32, 2.0, 0.1)
    assert p.code.n_code == 160
    assert p.R >= 1 and p.T >= 2 and (p.T & (p.T - 1)) == 0
    assert p.inner.R >= 1 and p.outer.R >= 1
    with pytest.raises(ValueError):
        bg.bitstogram_params(100, 100, 2.0, 0.1)


@pytest.mark.slow
def test_run_bitstogram_degenerate_planted():
    # all users hold one item: it is listed with an estimate inside the
    # coarse envelope in >= 18 of 20 seeded runs
    n, eps, beta = 100_000, 2.0, 0.1
    params = bg.bitstogram_params(n, 2**32, eps, beta)
    values = np.full(n, 0xDEADBEEF, dtype=np.uint64)
    d_prime = params.R * params.T
    bound = (400.0 / (eps / 2)) * math.sqrt(n * math.log(12 * n * d_prime / beta))
    ok = 0
    for seed in range(20):
        res = bg.run_bitstogram(values, params, seed=seed)
        ok += 0xDEADBEEF in res.items and abs(res.estimate(0xDEADBEEF) - n) <= bound
    assert ok >= 18


def test_run_bitstogram_light_tail_excludes_absent_item():
    n = 20_000
    params = bg.bitstogram_params(n, 2**16, 2.0, 0.1)
    absent = 0xABCD
    # the detection threshold the full protocol can promise is far above any
    # frequency here, so the absent item must never be produced
    threshold = 264.0 * n**1.5 / params.T
    for seed in range(5):
        values = np.random.default_rng(seed).integers(0, absent, n).astype(np.uint64)
        assert max(np.bincount(values.astype(np.int64)).max(), 1) < threshold
        res = bg.run_bitstogram(values, params, seed=seed)
        assert absent not in res.items
        assert len(res) <= params.R * params.T
        assert res.meta["candidates"] <= params.R * params.T  # pre-drop list bound


def test_run_bitstogram_reproducible():
    n = 20_000
    params = bg.bitstogram_params(n, 2**16, 2.0, 0.1)
    values = np.full(n, 0xBEEF, dtype=np.uint64)
    a = bg.run_bitstogram(values, params, seed=5)
    b = bg.run_bitstogram(values, params, seed=5)
    assert a.items == b.items and a.estimates == b.estimates


def test_run_bitstogram_small_domain_route():
    n = 10_000
    params = bg.bitstogram_params(n, 64, 2.0, 0.1)  # 64 < sqrt(10000)
    rng = np.random.default_rng(1)
    values = np.where(rng.random(n) < 0.6, 7, rng.integers(0, 64, n)).astype(np.uint64)
    res = bg.run_bitstogram(values, params, seed=2)
    assert res.meta["route"] == "explicit"
    assert res.items[0] == 7
    assert res.estimate(7) == pytest.approx(0.6 * n, rel=0.2)


def test_each_user_contributes_two_bits(monkeypatch):
    # structural LDP accounting: every user is randomized once for the
    # reconstruction stage and once for the estimation stage
    n = 5_000
    params = bg.bitstogram_params(n, 2**16, 2.0, 0.1)
    values = np.random.default_rng(0).integers(0, 2**16, n).astype(np.uint64)
    calls = []
    original = bg.basic_randomizer_bits

    def counting(x, epsilon, rng):
        calls.append((len(x), epsilon))
        return original(x, epsilon, rng)

    monkeypatch.setattr(bg, "basic_randomizer_bits", counting)
    bg.run_bitstogram(values, params, seed=3)
    total_bits = sum(c for c, _ in calls)
    assert total_bits == 2 * n
    assert all(eps == params.epsilon / 2 for _, eps in calls)
