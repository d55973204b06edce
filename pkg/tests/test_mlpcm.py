import numpy as np
import pytest
from polarthru.config import DesignMethod, Protocol
from polarthru.construction import ga_design, nc_binary_design, nc_design
from polarthru.mlpcm import (
    MlpcmSpec,
    design_cc_d_qam,
    design_cc_i_qam,
    design_ir_i_qam,
    design_mlpcm,
    design_nc_d_qam,
    design_nc_i_qam,
    design_sim_qam,
    equivalent_snr_db,
    joint_nc_design,
    level_means,
    level_reliabilities,
    split_joint_order,
)


def test_equivalent_snr():
    assert equivalent_snr_db(4.0) == pytest.approx(0.0)
    assert equivalent_snr_db(40.0) == pytest.approx(10.0)


def test_level_means_bpsk():
    assert list(level_means(0.0, 1)) == pytest.approx([4.0])


def test_joint_split_symmetric():
    v = level_reliabilities(1.0, 64, 1)[0]
    joint = joint_nc_design([v, v])
    k1, k2 = split_joint_order(joint.sorted_channels, joint.k_opt, 64, 2)
    assert abs(k1 - k2) <= 1
    assert k1 + k2 == joint.k_opt


def test_nc_d_partition_is_joint_sort():
    spec = design_nc_d_qam(4.0, 512, 4)
    chosen = set(spec.joint_order[: spec.total_k])
    per_level = set()
    for n, level in enumerate(spec.levels):
        per_level |= {n * 512 + int(i) for i in level.information_set}
    assert per_level == chosen
    assert spec.protocol == Protocol.NC_D


def test_nc_d_rates_follow_level_order():
    spec = design_nc_d_qam(4.0, 512, 4)
    assert list(spec.level_k) == sorted(spec.level_k)
    assert 0 < spec.rate < 1


def test_nc_d_level_fers_compose():
    vectors = level_reliabilities(4.0, 256, 4)
    joint = joint_nc_design(vectors)
    spec = design_nc_d_qam(4.0, 256, 4)
    combined = 1 - np.prod([1 - p for p in spec.level_fer])
    assert combined == pytest.approx(joint.fer_at(joint.k_opt), rel=1e-9, abs=1e-15)
    assert spec.predicted_throughput == pytest.approx(4 * joint.predicted_throughput)


def test_nc_d_level_fers_balance_on_data_levels():
    spec = design_nc_d_qam(2.0, 512, 4)
    fers = [p for k, p in zip(spec.level_k, spec.level_fer) if k > 16]
    assert len(fers) >= 2
    assert max(fers) <= 10 * min(fers)


def test_nc_d_nearly_frozen_level_is_not_balanced():
    # level 0 keeps only its few best channels, so its FER sits far below the others
    spec = design_nc_d_qam(2.0, 512, 4)
    assert spec.level_k[0] <= 16
    assert spec.level_fer[0] < 0.1 * min(spec.level_fer[1:])
    higher = design_nc_d_qam(4.0, 512, 4)
    fers = [p for k, p in zip(higher.level_k, higher.level_fer) if k > 0]
    assert max(fers) <= 100 * min(fers)


@pytest.mark.parametrize("gamma_db", [2.0, 4.0, 6.0])
def test_nc_i_beats_nc_d_prediction(gamma_db):
    nc_i = design_nc_i_qam(gamma_db, 512, 4)
    nc_d = design_nc_d_qam(gamma_db, 512, 4)
    assert nc_i.predicted_throughput >= nc_d.predicted_throughput
    assert nc_i.joint_order is None


def test_nc_i_levels_are_equivalent_bpsk_designs():
    spec = design_nc_i_qam(4.0, 256, 4)
    for level, mean in zip(spec.levels, level_means(4.0, 4)):
        alone = ga_design(equivalent_snr_db(mean), 256)
        assert abs(level.k_info - alone.k_opt) <= 1
        assert level == nc_design(mean, 256).code()


def test_bpsk_nc_d_is_binary_design():
    spec = design_nc_d_qam(0.0, 256, 1)
    nc = ga_design(0.0, 256)
    assert spec.level_k == (nc.k_opt,)
    assert spec.predicted_throughput == pytest.approx(nc.predicted_throughput)


def test_with_total_k():
    spec = design_nc_d_qam(4.0, 128, 4)
    smaller = spec.with_total_k(spec.total_k - 10)
    assert smaller.total_k == spec.total_k - 10
    for a, b in zip(smaller.levels, spec.levels):
        assert np.all(b.information_mask[a.information_mask])
    with pytest.raises(ValueError):
        spec.with_total_k(4 * 128 + 1)
    with pytest.raises(ValueError):
        design_nc_i_qam(4.0, 128, 4).with_total_k(10)


def test_with_level_k():
    spec = design_nc_i_qam(6.0, 128, 4)
    changed = spec.with_level_k(2, 5)
    assert changed.level_k[2] == 5
    assert changed.level_k[:2] == spec.level_k[:2]


@pytest.mark.parametrize("gamma_db", [10.0, 12.0])
def test_cc_i_rates_not_below_nc_i(gamma_db):
    cc = design_cc_i_qam(gamma_db, 256, 4)
    nc = design_nc_i_qam(gamma_db, 256, 4)
    assert all(a >= b for a, b in zip(cc.level_k, nc.level_k))


def test_cc_collapses_at_high_snr():
    cc = design_cc_d_qam(20.0, 128, 4)
    nc = design_nc_d_qam(20.0, 128, 4)
    assert cc.total_k >= nc.total_k
    assert cc.predicted_throughput == pytest.approx(nc.predicted_throughput, abs=0.04)


def test_ir_first_round_is_nc_i():
    ir = design_ir_i_qam(4.0, 128, 4, 3)
    nc = design_nc_i_qam(4.0, 128, 4)
    first = ir.first_round()
    assert first.level_k == nc.level_k
    assert [lv.sorted_channels for lv in first.levels] == [lv.sorted_channels for lv in nc.levels]


def test_ir_single_transmission_is_nc_i():
    ir = design_ir_i_qam(4.0, 128, 4, 1)
    nc = design_nc_i_qam(4.0, 128, 4)
    assert ir.predicted_throughput == pytest.approx(nc.predicted_throughput)


def test_ir_not_below_cc_i():
    ir = design_ir_i_qam(4.0, 256, 4, 8)
    cc = design_cc_i_qam(4.0, 256, 4, max_rounds=8)
    assert ir.predicted_throughput >= cc.predicted_throughput - 1e-6


def test_spec_validation():
    good = design_nc_i_qam(4.0, 64, 4)
    with pytest.raises(ValueError):
        MlpcmSpec(
            bits_per_symbol=2,
            n_block=64,
            design_snr_db=4.0,
            protocol=Protocol.NC_I,
            levels=good.levels,
            predicted_throughput=1.0,
            level_fer=good.level_fer,
        )
    with pytest.raises(ValueError):
        design_nc_d_qam(4.0, 100, 4)
    with pytest.raises(ValueError):
        design_nc_d_qam(4.0, 64, 3)


def test_dispatch():
    assert design_mlpcm(Protocol.NC_D, 4.0, 64, 4) == design_nc_d_qam(4.0, 64, 4)
    assert design_mlpcm(Protocol.CC_I, 4.0, 64, 4).protocol == Protocol.CC_I
    ir = design_mlpcm(Protocol.IR, 4.0, 64, 4, max_transmissions=2)
    assert len(ir.levels) == 4


def test_sim_design_per_level():
    spec = design_sim_qam(10.0, 64, 4, n_sim=200, seed=1)
    assert spec.design_method == DesignMethod.SIM
    assert spec == design_sim_qam(10.0, 64, 4, n_sim=200, seed=1, threads=2)
    with pytest.raises(ValueError):
        design_sim_qam(10.0, 64, 4, n_sim=200, protocol=Protocol.CC_I)


def test_sim_design_bpsk_nc_d():
    spec = design_mlpcm(Protocol.NC_D, 2.0, 64, 1, method=DesignMethod.SIM, n_sim=300)
    assert spec.joint_order == spec.levels[0].sorted_channels


def test_joint_design_matches_function_one():
    vectors = level_reliabilities(3.0, 64, 2)
    assert joint_nc_design(vectors) == nc_binary_design(np.concatenate(vectors))
