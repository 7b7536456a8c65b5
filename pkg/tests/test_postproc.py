import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mccvqkd.keyrate import ChannelPoint, SecurityParams, holevo_bound, key_rate_report, mutual_information
from mccvqkd.postproc import (
    FER_ANCHORS,
    BitBlock,
    CodeTable,
    ConstantFER,
    InfeasibleCodeError,
    LogisticFER,
    beta_from_code,
    code_rate_for_distance,
    leak_ec,
    p_ec_from_fer,
    snr_for_code,
    toeplitz_pa,
)


def dense_toeplitz(seed, n, out_len):
    """Literal Toeplitz matrix, one entry at a time."""
    M = np.zeros((out_len, n), dtype=np.uint8)
    for j in range(out_len):
        for i in range(n):
            M[j, i] = seed[n - 1 + j - i]
    return M


def gf2_matvec(M, x):
    out = np.zeros(M.shape[0], dtype=np.uint8)
    for j in range(M.shape[0]):
        acc = 0
        for i in range(M.shape[1]):
            acc ^= int(M[j, i]) & int(x[i])
        out[j] = acc
    return out


@pytest.mark.parametrize("L,rate", [(5, 0.33), (10, 0.3), (25, 0.18), (50, 0.07), (75, 0.0325), (100, 0.02)])
def test_code_rate_tabulated(L, rate):
    assert code_rate_for_distance(L) == rate


def test_code_rate_nearest():
    assert code_rate_for_distance(60) == 0.07
    assert code_rate_for_distance(1) == 0.33
    assert code_rate_for_distance(300) == 0.02
    # Equidistant: longer distance, lower rate.
    assert code_rate_for_distance(62.5) == 0.0325


def test_code_table_invariants():
    with pytest.raises(ValueError):
        CodeTable(())
    with pytest.raises(ValueError):
        CodeTable(((5.0, 0.3), (10.0, 0.4)))
    with pytest.raises(ValueError):
        CodeTable(((5.0, 1.3),))
    with pytest.raises(ValueError):
        CodeTable(((10.0, 0.3), (5.0, 0.2)))


def test_beta_from_code_examples():
    assert beta_from_code(0.5, 1.0) == pytest.approx(1.0)
    snr = 2 ** (2 * 0.0753) - 1
    assert beta_from_code(0.07, snr) == pytest.approx(0.07 / 0.0753, rel=1e-12)
    assert beta_from_code(0.07, snr) == pytest.approx(0.9296, abs=1e-4)
    with pytest.raises(InfeasibleCodeError):
        beta_from_code(0.33, 0.1)
    with pytest.raises(ValueError):
        beta_from_code(0.3, 0.0)


@given(cr=st.floats(0.005, 0.9), beta=st.floats(0.5, 1.0))
def test_beta_code_round_trip(cr, beta):
    b = beta_from_code(cr, snr_for_code(cr, beta))
    assert b == pytest.approx(beta, rel=1e-12)
    assert b * 0.5 * math.log2(1 + snr_for_code(cr, beta)) == pytest.approx(cr, rel=1e-12)


def test_leak_ec():
    assert leak_ec(1e9, 4.0, 0.93, 1.5361) == pytest.approx(1e9 * (4 - 0.93 * 1.5361), rel=1e-12)
    assert leak_ec(1e9, 4.0, 0.93, 1.5361) == pytest.approx(2.5714e9, rel=1e-4)
    assert leak_ec(100, 1.5, 1.0, 1.5) == 0.0
    with pytest.raises(ValueError):
        leak_ec(100, 1.0, 1.0, 1.5)


@pytest.mark.parametrize("H_l", [1.6, 3.0, 8.0])
def test_leak_ec_recovers_asymptotic_rate(H_l):
    p = ChannelPoint(3.8, 0.5, 0.02, 0.6)
    I, chi, beta, n = mutual_information(p), holevo_bound(p), 0.93, 1e9
    rate = H_l - leak_ec(n, H_l, beta, I) / n - chi
    assert rate == pytest.approx(beta * I - chi, abs=1e-9)


def test_fer_anchors_reproduced():
    fer = LogisticFER()
    for beta, f in FER_ANCHORS:
        assert abs(fer(beta) - f) <= 0.005
    assert fer(0.9296) == pytest.approx(0.0209, abs=0.005)
    assert fer(0.9311) == pytest.approx(0.0362, abs=0.005)


def test_fer_monotone_and_clamped():
    fer = LogisticFER()
    grid = np.linspace(0.92, 0.94, 201)
    assert np.all(np.diff(fer(grid)) >= 0)
    assert fer(0.0) == pytest.approx(0.0, abs=1e-12)
    assert 0.0 <= fer(5.0) <= 1.0
    assert fer.extrapolated(0.5) and not fer.extrapolated(0.93)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fer(0.1, warn=True)
    assert caught


def test_fer_rejects_empty_anchors():
    with pytest.raises(ValueError):
        LogisticFER([])


def test_constant_fer():
    assert ConstantFER(0.0)(0.9) == 0.0
    assert np.all(ConstantFER(1.0)(np.array([0.5, 0.9])) == 1.0)
    with pytest.raises(ValueError):
        ConstantFER(1.5)


def test_p_ec_used_by_keyrate():
    fer = LogisticFER()(0.93)
    sec = SecurityParams(p_ec=p_ec_from_fer(fer))
    rep = key_rate_report(0.93, ChannelPoint(3.8, 0.5, 0.02, 0.6), sec, 1.0)
    assert rep.R_UB - rep.R_LB == pytest.approx((1 - fer) / sec.block_size_Nt)


def test_bitblock():
    b = BitBlock([1, 0, 1, 0, 0, 0, 0, 1, 1], subcarrier=2, block_id=7)
    assert len(b) == 9
    assert b.to_hex() == "a180"
    assert b.to_line() == "2 7 a180"
    with pytest.raises(ValueError):
        BitBlock([])
    with pytest.raises(ValueError):
        BitBlock([0, 2])


def test_toeplitz_zero_input():
    rng = np.random.default_rng(1)
    seed = rng.integers(0, 2, 16 + 8 - 1)
    assert not toeplitz_pa(BitBlock(np.zeros(16)), seed, 8).bits.any()


def test_toeplitz_parity():
    x = np.random.default_rng(2).integers(0, 2, 33)
    out = toeplitz_pa(BitBlock(x), np.ones(33), 1)
    assert out.bits.tolist() == [int(x.sum() % 2)]


def test_toeplitz_dense_oracle_16_to_8():
    rng = np.random.default_rng(3)
    x = rng.integers(0, 2, 16)
    seed = rng.integers(0, 2, 23)
    expected = gf2_matvec(dense_toeplitz(seed, 16, 8), x)
    assert np.array_equal(toeplitz_pa(BitBlock(x), seed, 8).bits, expected)


def test_toeplitz_fft_path_matches_dense():
    rng = np.random.default_rng(4)
    n, out_len = 1500, 700
    x = rng.integers(0, 2, n)
    seed = rng.integers(0, 2, n + out_len - 1)
    M = dense_toeplitz(seed, n, out_len)
    assert np.array_equal(toeplitz_pa(BitBlock(x), seed, out_len).bits, (M.astype(int) @ x) % 2)


def test_toeplitz_preconditions():
    with pytest.raises(ValueError):
        toeplitz_pa(BitBlock(np.ones(8)), np.ones(10), 4)
    with pytest.raises(ValueError):
        toeplitz_pa(BitBlock(np.ones(8)), np.ones(16), 9)


@settings(max_examples=200, deadline=None)
@given(data=st.data(), n=st.integers(1, 64))
def test_toeplitz_linearity(data, n):
    out_len = data.draw(st.integers(1, n))
    bits = st.lists(st.integers(0, 1), min_size=n, max_size=n)
    a = np.array(data.draw(bits))
    b = np.array(data.draw(bits))
    seed = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n + out_len - 1, max_size=n + out_len - 1)))
    ha = toeplitz_pa(BitBlock(a), seed, out_len).bits
    hb = toeplitz_pa(BitBlock(b), seed, out_len).bits
    hab = toeplitz_pa(BitBlock(a ^ b), seed, out_len).bits if (a ^ b).size else None
    assert np.array_equal(hab, ha ^ hb)


def test_toeplitz_exact_universality_exhaustive():
    # Over every seed, distinct inputs collide on exactly a 2**-out_len fraction.
    n, out_len = 6, 3
    a = BitBlock([1, 0, 1, 1, 0, 0])
    b = BitBlock([0, 1, 1, 0, 0, 1])
    seeds = list(itertools.product((0, 1), repeat=n + out_len - 1))
    hits = sum(
        np.array_equal(toeplitz_pa(a, s, out_len).bits, toeplitz_pa(b, s, out_len).bits) for s in seeds
    )
    assert hits * 2**out_len == len(seeds)
