import itertools
import numpy as np
import pytest
from polarthru.config import CRC8
from polarthru.crc import crc_append, crc_check
from polarthru.polar import (
    PolarCodeSpec,
    PolarCode,
    boxplus,
    embed,
    encode,
    genie_error_matrix,
    genie_scd_decode,
    polar_transform,
)


def weight_order(n):
    # Reed-Muller style ordering: heavier rows first
    return sorted(range(n), key=lambda i: (-bin(i).count("1"), -i))


def spec_for(n, k):
    return PolarCodeSpec.from_order(weight_order(n), k)


def bpsk_llr(x, snr_db, rng):
    n0 = 10 ** (-snr_db / 10)
    y = (2.0 * x - 1.0) + rng.standard_normal(x.shape) * np.sqrt(n0 / 2)
    return -4.0 * y / n0


def test_encode_kernel():
    s = PolarCodeSpec.from_order([1, 0], 2)
    assert list(encode(np.array([0, 0]), s)) == [0, 0]
    assert list(encode(np.array([0, 1]), s)) == [1, 1]


def test_encode_matches_kronecker():
    f = np.array([[1, 0], [1, 1]])
    g4 = np.kron(f, f)
    g8 = np.kron(g4, f)
    u = np.array([0, 1, 0, 1])
    assert list(polar_transform(u)) == list((u @ g4) % 2)
    for bits in itertools.product([0, 1], repeat=8):
        u = np.array(bits)
        assert list(polar_transform(u)) == list((u @ g8) % 2)


def test_transform_is_involution():
    rng = np.random.default_rng(0)
    u = rng.integers(0, 2, size=(10, 64), dtype=np.uint8)
    assert np.array_equal(polar_transform(polar_transform(u)), u)


def test_encode_refuses_frozen_ones():
    s = spec_for(8, 4)
    u = np.zeros(8, dtype=np.uint8)
    u[0] = 1
    with pytest.raises(ValueError):
        encode(u, s)


def test_spec_validation():
    with pytest.raises(ValueError):
        PolarCodeSpec.from_order([0, 1, 2], 1)
    with pytest.raises(ValueError):
        PolarCodeSpec.from_order([0, 0, 1, 2], 1)
    with pytest.raises(ValueError):
        PolarCodeSpec.from_order([0, 1, 2, 3], 5)


def test_spec_information_set():
    s = PolarCodeSpec.from_order([7, 6, 5, 3, 4, 2, 1, 0], 4)
    assert list(s.information_set) == [3, 5, 6, 7]
    assert s.with_k(2).information_mask.sum() == 2


def test_boxplus():
    assert boxplus(5.0, 0.0) == pytest.approx(0.0)
    assert boxplus(300.0, 2.5) == pytest.approx(2.5)
    assert boxplus(-300.0, 2.5) == pytest.approx(-2.5)
    expected = 2 * np.arctanh(np.tanh(1.0) * np.tanh(1.5))
    assert boxplus(2.0, 3.0) == pytest.approx(expected, abs=1e-12)
    assert boxplus(2.0, 3.0) == pytest.approx(1.6935, abs=1e-4)
    a = np.linspace(-10, 10, 21)
    b = np.linspace(8, -8, 21)
    ref = 2 * np.arctanh(np.tanh(a / 2) * np.tanh(b / 2))
    assert np.allclose(boxplus(a, b), ref, atol=1e-9)


def test_scd_all_frozen():
    code = PolarCode(spec_for(16, 0))
    assert code.scd_decode(np.ones(16)).shape == (0,)


def test_scd_round_trip_noiseless():
    s = PolarCodeSpec.from_order([7, 6, 5, 3, 4, 2, 1, 0], 4)
    code = PolarCode(s)
    for bits in itertools.product([0, 1], repeat=4):
        m = np.array(bits, dtype=np.uint8)
        x = encode(embed(m, s), s)
        llr = 20.0 * (1.0 - 2.0 * x)
        assert np.array_equal(code.scd_decode(llr), m)


def test_scd_corrects_single_flip():
    s = PolarCodeSpec.from_order([7, 6, 5, 3, 4, 2, 1, 0], 4)
    code = PolarCode(s)
    for bits in itertools.product([0, 1], repeat=4):
        m = np.array(bits, dtype=np.uint8)
        x = encode(embed(m, s), s)
        for i in range(8):
            llr = 20.0 * (1.0 - 2.0 * x)
            llr[i] = -llr[i]
            assert np.array_equal(code.scd_decode(llr), m)


def test_scd_batch_matches_single():
    rng = np.random.default_rng(4)
    s = spec_for(64, 32)
    code = PolarCode(s)
    m = rng.integers(0, 2, size=(20, 32), dtype=np.uint8)
    llr = bpsk_llr(encode(embed(m, s), s), 1.0, rng)
    batch = code.scd_decode(llr)
    for i in range(20):
        assert np.array_equal(batch[i], code.scd_decode(llr[i]))


def test_scld_list_one_equals_scd():
    rng = np.random.default_rng(5)
    s = spec_for(32, 16)
    code = PolarCode(s)
    m = rng.integers(0, 2, size=(1000, 16), dtype=np.uint8)
    llr = bpsk_llr(encode(embed(m, s), s), 0.0, rng)
    expected = code.scd_decode(llr)
    for i in range(1000):
        assert np.array_equal(code.scld_decode(llr[i], 1), expected[i])


def test_scld_noiseless_with_crc():
    rng = np.random.default_rng(6)
    s = spec_for(32, 16)
    code = PolarCode(s)
    m = crc_append(rng.integers(0, 2, size=8, dtype=np.uint8), CRC8)
    llr = 20.0 * (1.0 - 2.0 * encode(embed(m, s), s))
    decoded = code.scld_decode(llr, 4, CRC8)
    assert np.array_equal(decoded, m)
    assert crc_check(decoded, CRC8)


def test_scld_candidates_sorted():
    rng = np.random.default_rng(7)
    code = PolarCode(spec_for(32, 16))
    messages, metrics = code.scl_candidates(rng.standard_normal(32) * 2, 8)
    assert len(messages) == 8
    assert np.all(np.diff(metrics) >= 0)
    assert len({tuple(m) for m in messages}) == 8


def test_scld_prefix_crc():
    rng = np.random.default_rng(8)
    s = spec_for(32, 12)
    code = PolarCode(s)
    word = crc_append(rng.integers(0, 2, size=10, dtype=np.uint8), CRC8)
    prefix, tail = word[:6], word[6:]
    llr = 20.0 * (1.0 - 2.0 * encode(embed(tail, s), s))
    assert np.array_equal(code.scld_decode(llr, 4, CRC8, prefix=prefix), tail)
    wrong = prefix.copy()
    wrong[0] ^= 1
    assert code.scld_decode(llr, 1, CRC8, prefix=wrong) is None


def test_scld_refuses_zero_list():
    code = PolarCode(spec_for(8, 4))
    with pytest.raises(ValueError):
        code.scld_decode(np.ones(8), 0)


def test_llr_must_be_finite():
    code = PolarCode(spec_for(8, 4))
    with pytest.raises(ValueError):
        code.scd_decode(np.array([np.nan] + [1.0] * 7))


def _naive_genie(llr, u):
    # sequential SC over all channels, substituting the true bit
    errors = []

    def rec(lv, offset):
        m = len(lv)
        if m == 1:
            if (lv[0] < 0) != bool(u[offset]):
                errors.append(offset)
            return np.array([u[offset]], dtype=np.uint8)
        h = m // 2
        a = boxplus(lv[:h], lv[h:])
        x1 = rec(a, offset)
        x2 = rec(lv[h:] + (1 - 2.0 * x1) * lv[:h], offset + h)
        return np.concatenate([x1 ^ x2, x2])

    rec(np.asarray(llr, dtype=float), 0)
    return sorted(errors)


def test_genie_noiseless_is_empty():
    rng = np.random.default_rng(9)
    u = rng.integers(0, 2, size=64, dtype=np.uint8)
    llr = 20.0 * (1.0 - 2.0 * polar_transform(u))
    assert genie_scd_decode(llr, u) == []


def test_genie_adversarial_matches_trace():
    rng = np.random.default_rng(10)
    u = rng.integers(0, 2, size=16, dtype=np.uint8)
    llr = -6.0 * (1.0 - 2.0 * polar_transform(u))
    events = genie_scd_decode(llr, u)
    assert 15 in events
    assert events == _naive_genie(llr, u)


def test_genie_matches_trace_on_noise():
    rng = np.random.default_rng(11)
    for _ in range(20):
        u = rng.integers(0, 2, size=32, dtype=np.uint8)
        llr = bpsk_llr(polar_transform(u), 0.0, rng)
        assert genie_scd_decode(llr, u) == _naive_genie(llr, u)


def test_genie_consistency_with_scd():
    rng = np.random.default_rng(12)
    s = spec_for(64, 32)
    code = PolarCode(s)
    m = rng.integers(0, 2, size=(400, 32), dtype=np.uint8)
    u = embed(m, s)
    llr = bpsk_llr(encode(u, s), 1.0, rng)
    eps = genie_error_matrix(llr, u)
    failed = np.any(code.scd_decode(llr) != m, axis=1)
    assert np.array_equal(failed, eps[:, s.information_set].any(axis=1))
    assert failed.any() and not failed.all()


@pytest.mark.slow
def test_list_gain():
    rng = np.random.default_rng(13)
    s = spec_for(16, 8)
    code = PolarCode(s)
    frames = 10000
    data = rng.integers(0, 2, size=(frames, 0), dtype=np.uint8)
    m = crc_append(data, CRC8)
    llr = bpsk_llr(encode(embed(m, s), s), 1.0, rng)
    fails = {1: 0, 8: 0}
    for i in range(frames):
        for size in fails:
            decoded = code.scld_decode(llr[i], size, CRC8)
            if decoded is None or not np.array_equal(decoded, m[i]):
                fails[size] += 1
    assert fails[8] <= fails[1]
