import itertools
import math
import numpy as np
import pytest
from polarthru.config import LlrMethod
from polarthru.construction import check_node_mean
from polarthru.modem import (
    ConstellationSpec,
    avg_pam_llr,
    boxplus,
    cc_combine_dependent,
    cc_combine_independent,
    chase_equivalent,
    constellation,
    exact_msd_llr,
    level_mean_llrs,
    modulate,
    pam_exact_llr,
    pam_map,
    pam_piecewise_llr,
    precode,
    qam_avg_llrs,
    qam_level_llrs,
    qam_map,
    unprecode,
    verify_spm,
)


def noisy_symbols(spec, frames, rng):
    labels = rng.integers(0, 2, size=(frames, spec.bits_per_symbol), dtype=np.uint8)
    x = modulate(labels.T, spec)
    w = rng.standard_normal((2, frames)) * math.sqrt(spec.n0 / 2)
    y = x + w[0] + (0j if spec.is_bpsk else 1j * w[1])
    return labels, y


def test_precode():
    assert list(precode([0, 0])) == [0, 0]
    assert list(precode([1, 0, 1, 1])) == [1, 0, 0, 1]
    for bits in itertools.product([0, 1], repeat=6):
        assert list(unprecode(precode(bits))) == list(bits)
    with pytest.raises(ValueError):
        precode([1, 0, 1])


def test_pam_map():
    assert pam_map([0]) == -1
    assert pam_map([1]) == 1
    assert pam_map([0, 1]) == 1
    assert [int(pam_map([d & 1, d >> 1])) for d in range(4)] == [-3, -1, 1, 3]


def test_qam_map_four_points():
    assert qam_map([0, 0]) == -1 - 1j
    assert qam_map([1, 0]) == 1 - 1j
    assert qam_map([0, 1]) == 1 + 1j
    assert qam_map([1, 1]) == -1 + 1j


@pytest.mark.parametrize("b", [2, 4, 6, 8])
def test_qam_map_is_a_lattice_bijection(b):
    _, points = constellation(b)
    assert len(set(points.tolist())) == 2 ** b
    m = 2 ** (b // 2)
    assert np.all(np.abs(points.real) <= m - 1)
    assert np.all(points.real % 2 == 1)
    assert np.all(points.imag % 2 == 1)
    spec = ConstellationSpec.from_snr(b, 0.0)
    assert np.mean(np.abs(points) ** 2) == pytest.approx(spec.es)


def test_spm_ladder():
    r2 = math.sqrt(2)
    assert verify_spm(2) == pytest.approx([2, 2 * r2])
    assert verify_spm(4) == pytest.approx([2, 2 * r2, 4, 4 * r2])
    ladder = verify_spm(6)
    assert np.allclose(np.diff(np.log(ladder)), math.log(r2))
    with pytest.raises(ValueError):
        verify_spm(3)


def test_constellation_spec():
    s = ConstellationSpec.from_snr(4, 10.0)
    assert s.pam_order == 4
    assert s.es == 10.0
    assert s.n0 == pytest.approx(1.0)
    assert s.gamma_db == pytest.approx(10.0)
    assert ConstellationSpec.from_snr(1, 0.0).n0 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ConstellationSpec(bits_per_symbol=3, n0=1.0)
    with pytest.raises(ValueError):
        ConstellationSpec(bits_per_symbol=4, n0=0.0)


def test_bpsk_llr_is_linear():
    s = ConstellationSpec(bits_per_symbol=1, n0=0.7)
    y = np.linspace(-3, 3, 13)
    assert np.allclose(exact_msd_llr(y, 0, None, s), -4 * y / 0.7)
    for method in LlrMethod:
        assert np.allclose(qam_level_llrs(y, 0, None, s, method), -4 * y / 0.7)


def test_symmetric_point_gives_zero():
    s = ConstellationSpec.from_snr(4, 6.0)
    assert exact_msd_llr(0.0, 0, None, s)[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("b,frames", [(4, 100000), (6, 100000)])
@pytest.mark.parametrize("gamma_db", [0.0, 6.0, 12.0])
def test_decomposition_is_exact(b, frames, gamma_db):
    rng = np.random.default_rng(b * 100 + int(gamma_db))
    s = ConstellationSpec.from_snr(b, gamma_db)
    labels, y = noisy_symbols(s, frames, rng)
    for level in range(b):
        decided = labels[:, :level]
        direct = exact_msd_llr(y, level, decided, s)
        split = qam_level_llrs(y, level, decided, s, LlrMethod.EXACT)
        assert np.max(np.abs(direct - split)) <= 1e-9


def test_four_qam_first_level():
    s = ConstellationSpec.from_snr(2, 3.0)
    y = np.array([0.3 - 0.8j, -1.2 + 0.1j])
    expected = boxplus(-4 * y.real / s.n0, -4 * y.imag / s.n0)
    assert np.allclose(qam_level_llrs(y, 0, None, s), expected)


def test_piecewise_examples():
    assert pam_piecewise_llr(0.0, 0, 0, 4, 1.0) == pytest.approx(0.0)
    assert pam_piecewise_llr(0.5, 0, 0, 4, 1.0) == pytest.approx(2.0)
    assert pam_piecewise_llr(-10.0, 0, 0, 4, 1.0) > 0
    assert pam_piecewise_llr(10.0, 0, 0, 4, 1.0) < 0


def test_piecewise_is_continuous():
    for level, lower in [(0, 0), (1, 0), (1, 1), (2, 3)]:
        x0 = 2 * lower - 7
        s = 2 ** (level + 1)
        for j in range(1, (8 >> level) - 1):
            edge = x0 + j * s
            left = pam_piecewise_llr(edge - 1e-9, level, lower, 8, 1.3)
            right = pam_piecewise_llr(edge + 1e-9, level, lower, 8, 1.3)
            assert left == pytest.approx(right, abs=1e-6)


def test_piecewise_matches_max_log():
    y = np.linspace(-9, 9, 181)
    for level, lower in [(0, 0), (1, 1), (2, 2)]:
        x0 = 2 * lower - 7
        s = 2 ** (level + 1)
        points = x0 + s * np.arange(8 >> level)
        d = (y[:, None] - points[None, :]) ** 2
        ref = (d[:, 1::2].min(axis=1) - d[:, 0::2].min(axis=1)) / 1.3
        assert np.allclose(pam_piecewise_llr(y, level, lower, 8, 1.3), ref)


def test_piecewise_sign_agreement():
    rng = np.random.default_rng(21)
    s = ConstellationSpec.from_snr(4, 10.0)
    labels, y = noisy_symbols(s, 100000, rng)
    # the sum at level 1 mixes two max-log errors, its zero crossing moves most
    floors = [0.999, 0.98, 0.999, 0.999]
    for level in range(4):
        decided = labels[:, :level]
        exact = exact_msd_llr(y, level, decided, s)
        approx = qam_level_llrs(y, level, decided, s, LlrMethod.PIECEWISE)
        assert np.mean(np.sign(exact) == np.sign(approx)) >= floors[level]


def test_piecewise_two_point_subset_is_exact():
    y = np.linspace(-6, 6, 61)
    for lower in range(2):
        assert np.allclose(
            pam_piecewise_llr(y, 1, lower, 4, 0.8), pam_exact_llr(y, 1, lower, 4, 0.8)
        )


def test_pam_exact_against_direct_sum():
    y = 0.37
    n0 = 0.9
    points = np.array([-3, -1, 1, 3])
    like = np.exp(-((y - points) ** 2) / n0)
    ref = math.log((like[0] + like[2]) / (like[1] + like[3]))
    assert pam_exact_llr(y, 0, 0, 4, n0) == pytest.approx(ref)


def test_missing_decisions_refused():
    s = ConstellationSpec.from_snr(4, 6.0)
    with pytest.raises(ValueError):
        qam_level_llrs([0.1 + 0.2j], 2, [[1]], s)
    with pytest.raises(ValueError):
        exact_msd_llr([0.1], 4, [[0, 0, 0, 0]], s)


def test_chase_single_reception():
    rng = np.random.default_rng(22)
    s = ConstellationSpec.from_snr(4, 5.0)
    labels, y = noisy_symbols(s, 500, rng)
    for level in range(4):
        assert np.allclose(
            cc_combine_dependent(y[:, None], level, labels[:, :level], s),
            exact_msd_llr(y, level, labels[:, :level], s),
        )


def test_chase_bpsk_accumulates():
    s = ConstellationSpec(bits_per_symbol=1, n0=0.8)
    ys = np.array([[0.3, -0.1, 0.7], [-1.2, 0.4, 0.0]])
    combined = cc_combine_dependent(ys, 0, None, s)
    assert np.allclose(combined, (-4 * ys / 0.8).sum(axis=1))
    accumulated = np.zeros(2)
    for i in range(3):
        accumulated = cc_combine_independent(exact_msd_llr(ys[:, i], 0, None, s), accumulated)
    assert np.allclose(accumulated, combined)
    single = exact_msd_llr(ys[:, 0], 0, None, s)
    doubled = cc_combine_dependent(np.repeat(ys[:, :1], 2, axis=1), 0, None, s)
    assert np.all(np.abs(doubled) >= np.abs(single))


def test_chase_mean_sample_identity():
    rng = np.random.default_rng(23)
    s = ConstellationSpec.from_snr(4, 2.0)
    labels = rng.integers(0, 2, size=(300, 4), dtype=np.uint8)
    x = modulate(labels.T, s)
    noise = rng.standard_normal((300, 3)) + 1j * rng.standard_normal((300, 3))
    ys = x[:, None] + noise * math.sqrt(s.n0 / 2)
    mean, n0 = chase_equivalent(ys, s.n0)
    for level in range(4):
        joint = cc_combine_dependent(ys, level, labels[:, :level], s)
        via_mean = exact_msd_llr(mean, level, labels[:, :level], s.with_n0(n0))
        assert np.allclose(joint, via_mean, atol=1e-8)


def test_independent_combining():
    assert cc_combine_independent(1.5, 0.0) == 1.5
    a, b, c = 0.4, -2.0, 3.1
    assert cc_combine_independent(cc_combine_independent(a, b), c) == pytest.approx(
        cc_combine_independent(a, cc_combine_independent(b, c))
    )


def test_average_llr_anchors():
    four = [avg_pam_llr(k, 4, 5.0 / 10.0) for k in range(2)]
    assert four == pytest.approx([6.3, 31.9], abs=0.2)
    eight = [avg_pam_llr(k, 8, 21.0 / 10.0) for k in range(3)]
    assert eight == pytest.approx([0.7, 6.0, 30.5], abs=0.2)


def test_average_llr_bpsk():
    for gamma_db in [-3.0, 0.0, 4.0]:
        n0 = 1.0 / 10 ** (gamma_db / 10)
        assert avg_pam_llr(0, 2, n0) == pytest.approx(4 * 10 ** (gamma_db / 10))


def test_average_llr_against_monte_carlo():
    rng = np.random.default_rng(24)
    n0 = 1.7
    level = 1
    zeros = np.array([-7, -5, 1, 3])
    x = rng.choice(zeros, size=400000)
    y = x + rng.standard_normal(len(x)) * math.sqrt(n0 / 2)
    lower = ((x + 7) // 2) % 2
    sample = pam_piecewise_llr(y, level, lower, 8, n0).mean()
    assert avg_pam_llr(level, 8, n0) == pytest.approx(sample, abs=0.03)


@pytest.mark.parametrize(
    "m,gamma_db", [(4, 0.0), (4, 12.0), (8, 6.0), (8, 14.0), (16, 12.0), (16, 20.0)]
)
def test_average_llr_ordering(m, gamma_db):
    es = (m * m - 1) / 3
    means = [avg_pam_llr(k, m, es / 10 ** (gamma_db / 10)) for k in range(int(math.log2(m)))]
    assert means[0] > 0
    assert np.all(np.diff(means) > 0)


def test_qam_average_llrs():
    out = qam_avg_llrs([6.3, 31.9])
    assert out[1] == pytest.approx(12.6)
    assert out[3] == pytest.approx(63.8)
    assert out[0] == pytest.approx(check_node_mean(6.3))
    assert out[0] < 6.3


def test_level_means_16qam_4db():
    s = ConstellationSpec.from_snr(4, 4.0)
    means = level_mean_llrs(s)
    assert means[1] == pytest.approx(2 * avg_pam_llr(0, 4, s.n0))
    assert means[3] == pytest.approx(2 * 16 / s.n0)
    assert np.all(np.diff(means) > 0)
    assert level_mean_llrs(ConstellationSpec(bits_per_symbol=1, n0=0.5))[0] == pytest.approx(8.0)
