import pytest
from polarthru.construction import ga_design
from polarthru.mlpcm import design_nc_d_qam, design_nc_i_qam
from polarthru.ratematch import (
    golden_section_search,
    iteration_bound,
    rate_match_spec,
    scld_rate_match,
)


class Counting:
    def __init__(self, f):
        self.f = f
        self.calls = []

    def __call__(self, k):
        self.calls.append(k)
        return self.f(k)


def test_synthetic_parabola():
    objective = Counting(lambda k: -((k - 8800) ** 2))
    a = 8000
    b = min(a + 16384 // 10, 16384)
    result = golden_section_search(objective, a, b)
    assert result.k_opt == 8801
    assert result.evaluations <= 16
    assert len(objective.calls) == result.evaluations
    assert len(set(objective.calls)) == len(objective.calls)
    assert all(a <= k <= b for k in objective.calls)
    assert result.iterations <= iteration_bound(a, b)


def test_optimum_at_lower_end():
    result = golden_section_search(lambda k: -k, 10, 30)
    assert result.k_opt == 10


def test_optimum_at_upper_end_is_one_short():
    result = golden_section_search(lambda k: k, 10, 30)
    assert result.k_opt == 29


def test_degenerate_interval():
    result = golden_section_search(lambda k: 1.0, 12, 12)
    assert result.k_opt == 12
    assert result.evaluations == 1
    with pytest.raises(ValueError):
        golden_section_search(lambda k: 1.0, 13, 12)


def test_refuses_too_long_start():
    order = tuple(range(64))
    with pytest.raises(ValueError):
        scld_rate_match(2.0, 65, 64, order)
    with pytest.raises(ValueError):
        scld_rate_match(2.0, 16, 64, order)


def test_scld_rate_match_bpsk():
    design = ga_design(2.0, 64)
    kwargs = dict(list_size=4, budget=60, seed=1)
    result = scld_rate_match(2.0, design.k_opt, 64, design.sorted_channels, **kwargs)
    assert result.k_opt >= design.k_opt
    assert all(design.k_opt <= k <= 64 for k, _ in result.probes)
    again = scld_rate_match(2.0, design.k_opt, 64, design.sorted_channels, **kwargs)
    assert again == result


def test_small_budget_warns(mocker):
    log = mocker.patch("polarthru.ratematch.log")
    design = ga_design(8.0, 32)
    scld_rate_match(8.0, design.k_opt, 32, design.sorted_channels, list_size=2, budget=10)
    assert log.bind.return_value.warning.called


def test_rate_match_joint_design():
    spec = design_nc_d_qam(8.0, 32, 4)
    matched, results = rate_match_spec(spec, list_size=2, budget=20)
    assert len(results) == 1
    assert matched.total_k == results[0].k_opt
    assert matched.joint_order == spec.joint_order


def test_rate_match_per_level():
    spec = design_nc_i_qam(12.0, 32, 4)
    matched, results = rate_match_spec(spec, list_size=2, budget=20)
    assert len(results) == sum(1 for k in spec.level_k if k > 16)
    assert all(a >= b for a, b in zip(matched.level_k, spec.level_k))
    for a, b in zip(matched.levels, spec.levels):
        assert a.sorted_channels == b.sorted_channels
