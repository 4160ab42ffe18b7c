import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcasim.ccselect import (
    Assignment, CarrierCell, CarrierConfig, Policy, Rule, UeMeasurement, aggregate_scores, assign_roles, choose,
    compute_ue_throughput, evaluate_rule, hex_layout, run_carrier_experiment, run_drop, score_candidates,
    select_ccs,
)
from mcasim.config import ConfigError

LOAD_RULE = Rule("load", 0.0, 1.0, 1.0, 0.0)
RSRQ_RULE = Rule("rsrq", -19.5, -3.0)


def brute_force_select(scores, loads, cc_index, sector_id, theta, max_ccs):
    keyed = sorted(range(len(scores)), key=lambda i: (-scores[i], loads[i], cc_index[i], sector_id[i]))
    passing = [i for i in keyed if scores[i] >= theta]
    return passing[:max_ccs] if passing else keyed[:1]


# -- rules and aggregation ---------------------------------------------------
def test_rule_examples():
    assert evaluate_rule(LOAD_RULE, UeMeasurement(load=np.array(0.25))) == pytest.approx(0.75)
    assert evaluate_rule(RSRQ_RULE, UeMeasurement(rsrq_db=np.array(-3.0))) == 1.0
    assert RSRQ_RULE(5.0) == 1.0 and RSRQ_RULE(-40.0) == 0.0
    assert LOAD_RULE(1.0) == 0.0


def test_missing_metric_and_bad_load():
    with pytest.raises(KeyError):
        evaluate_rule(RSRQ_RULE, UeMeasurement(rsrp_dbm=np.array([-80.0])))
    with pytest.raises(ValueError):
        evaluate_rule(LOAD_RULE, UeMeasurement(load=np.array([1.5])))


def test_rule_validation():
    with pytest.raises(ConfigError):
        Rule("sinr", 0.0, 1.0)
    with pytest.raises(ConfigError):
        Rule("rsrp", -50.0, -110.0)
    with pytest.raises(ValueError):
        Policy("p", ())
    with pytest.raises(ValueError):
        Policy("p", (LOAD_RULE,), theta=1.5)


@given(st.floats(-200, 200, allow_nan=False), st.floats(-200, 200, allow_nan=False))
def test_rule_is_clamped_and_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    for rule in (RSRQ_RULE, LOAD_RULE, Rule("rsrp", -110.0, -50.0)):
        s_lo, s_hi = rule(lo), rule(hi)
        assert 0.0 <= s_lo <= 1.0 and 0.0 <= s_hi <= 1.0
        if rule.high_score >= rule.low_score:
            assert s_lo <= s_hi
        else:
            assert s_lo >= s_hi


def test_aggregate_examples():
    assert aggregate_scores([0.8, 0.4]) == pytest.approx(0.6)
    assert aggregate_scores([0.37]) == 0.37
    assert aggregate_scores([0.0, 0.0, 0.0]) == 0.0
    with pytest.raises(ValueError):
        aggregate_scores([])


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_aggregate_is_arithmetic_mean(scores):
    assert aggregate_scores(scores) == pytest.approx(math.fsum(scores) / len(scores), rel=0, abs=1e-15)


# -- selection ----------------------------------------------------------------
def test_threshold_examples():
    picked = choose([0.9, 0.7, 0.2], [0, 0, 0], [1, 2, 3], [1, 1, 1], 0.5, 5)
    assert picked.tolist() == [0, 1]
    assert choose([0.1, 0.3, 0.2], [0, 0, 0], [1, 2, 3], [1, 1, 1], 0.5, 5).tolist() == [1]
    assert choose([0.6, 0.6], [5, 2], [1, 2], [1, 1], 0.5, 5).tolist() == [1, 0]


GRID = (0.0, 0.5, 0.75, 1.0)


@pytest.mark.parametrize("theta", [0.0, 0.5, 0.8, 1.0])
@pytest.mark.parametrize("max_ccs", [1, 2, 3])
def test_three_cc_fixtures_match_brute_force(theta, max_ccs):
    checked = 0
    for scores in itertools.product(GRID, repeat=3):
        for loads in itertools.product((0, 2, 5), repeat=3):
            for cc_index, sector_id in (((1, 2, 3), (1, 1, 1)), ((2, 2, 1), (3, 1, 2)), ((1, 1, 1), (3, 2, 1))):
                got = choose(scores, loads, cc_index, sector_id, theta, max_ccs).tolist()
                assert got == brute_force_select(scores, loads, cc_index, sector_id, theta, max_ccs)
                checked += 1
    assert checked == 4**3 * 3**3 * 3


def _cells(n, capacity=10):
    return [CarrierCell(site=1 + i // 2, sector=1, cc=1 + i % 5, capacity=capacity) for i in range(n)]


def test_select_ccs_admits_and_assigns_roles():
    cells = _cells(3)
    policy = Policy("proposed", (RSRQ_RULE,), theta=0.5, max_ccs=5)
    meas = UeMeasurement(rsrq_db=np.array([-4.0, -19.5, -6.0]))
    a = select_ccs(0, cells, policy, meas)
    assert a.ccs == (0, 2)
    assert a.roles == ("PCell", "PSCell")
    assert cells[0].admitted == [0] and cells[1].admitted == []


def test_full_cells_block_the_ue():
    cells = _cells(2, capacity=1)
    for c in cells:
        c.admit(99)
    a = select_ccs(0, cells, Policy("b", (RSRQ_RULE,)), UeMeasurement(rsrq_db=np.array([-5.0, -5.0])))
    assert a.blocked
    with pytest.raises(RuntimeError):
        cells[0].admit(1)


def test_roles_follow_node_grouping():
    assert assign_roles([4, 4, 7, 7, 2]) == ("PCell", "SCell", "PSCell", "SCell", "SCell")
    assert assign_roles([3]) == ("PCell",)


def test_ranking_invariant_to_common_scaling():
    rng = np.random.default_rng(3)
    for _ in range(200):
        scores = rng.random(6)
        loads = rng.integers(0, 5, 6)
        cc = rng.integers(1, 6, 6)
        sec = rng.integers(1, 4, 6)
        theta, k = rng.random(), 0.37
        a = choose(scores, loads, cc, sec, theta, 3)
        b = choose(scores * k, loads, cc, sec, theta * k, 3)
        assert a.tolist() == b.tolist()


def test_load_response_is_monotone():
    proposed = Policy("proposed", (RSRQ_RULE, LOAD_RULE))
    baseline = Policy("baseline", (Rule("rsrp", -110.0, -50.0),))
    rsrq = np.array([-8.0, -8.0, -12.0])
    rsrp = np.array([-80.0, -80.0, -90.0])
    prev_p = prev_b = None
    for load0 in np.linspace(0, 1, 11):
        meas = UeMeasurement(rsrp, rsrq, np.array([load0, 0.2, 0.4]))
        p = score_candidates(proposed, meas)
        b = score_candidates(baseline, meas)
        if prev_p is not None:
            assert p[0] <= prev_p[0]
            np.testing.assert_array_equal(p[1:], prev_p[1:])
            np.testing.assert_array_equal(b, prev_b)
        prev_p, prev_b = p, b


# -- throughput -----------------------------------------------------------------
def test_throughput_examples():
    cells = _cells(2)
    cells[0].admit(0)
    one = Assignment(0, (0,), ("PCell",))
    assert compute_ue_throughput(one, cells, [1.0, 1.0]) == pytest.approx(1.4e6)
    cells[0].admit(1)
    assert compute_ue_throughput(one, cells, [1.0, 1.0]) == pytest.approx(0.7e6)
    solo = _cells(2)
    for c in solo:
        c.admit(0)
    both = Assignment(0, (0, 1), ("PCell", "SCell"))
    assert compute_ue_throughput(both, solo, [3.0, 3.0]) == pytest.approx(2 * compute_ue_throughput(
        Assignment(0, (0,), ("PCell",)), solo, [3.0, 3.0]))
    assert compute_ue_throughput(both, solo, [3.0, 3.0], mode="duplicate") == pytest.approx(2.8e6)
    assert compute_ue_throughput(Assignment(0, (), ()), solo, [3.0, 3.0]) == 0.0


# -- scenario --------------------------------------------------------------------
def test_layout_is_twelve_sites():
    layout = hex_layout(3, 4, 500.0)
    assert layout.sites.shape == (12, 2)
    assert layout.n_sectors == 36
    d = np.hypot(*(layout.sites[:, None, :] - layout.sites[None, :, :]).transpose(2, 0, 1))
    assert np.min(d[d > 0]) == pytest.approx(500.0)


@pytest.mark.parametrize("policy", ["baseline", "proposed"])
def test_drop_invariants(policy):
    cfg = CarrierConfig()
    out = run_drop(cfg, 4, 0, policy)
    sizes = [len(a.ccs) for a in out.assignments if not a.blocked]
    assert all(1 <= s <= cfg.max_ccs for s in sizes)
    assert all(len(set(a.ccs)) == len(a.ccs) for a in out.assignments)
    assert int(out.cc_loads.sum()) == sum(sizes)
    assert (out.cc_loads <= cfg.capacity).all()
    # throughput equals an independent recomputation of per-CC shares
    sinr = 10.0 ** (out.sinr_db / 10.0)
    flat_loads = out.cc_loads.reshape(-1)
    for a, tput in zip(out.assignments, out.throughput):
        if a.blocked:
            continue
        expected = sum(1.4e6 * math.log2(1 + sinr[a.ue, c]) / flat_loads[c] for c in a.ccs)
        assert tput == pytest.approx(expected, rel=1e-9)


def test_experiment_is_deterministic():
    cfg = replace(CarrierConfig(), n_ues=30)
    a = run_carrier_experiment(cfg, 11)
    b = run_carrier_experiment(cfg, 11)
    for key, dist in a.throughput.items():
        assert dist.count == b.throughput[key].count
        if dist.count:
            assert dist.percentile(50) == b.throughput[key].percentile(50)
    assert a.jain == b.jain


def test_config_validation():
    with pytest.raises(ConfigError):
        CarrierConfig(theta=1.5).validate()
    with pytest.raises(ConfigError):
        CarrierConfig(n_ues=0).validate()
    with pytest.raises(ConfigError):
        CarrierConfig(assignment_mode="both").validate()


def test_uniform_layout_medians_are_close():
    # without a hotspot the load rule is nearly flat, so both policies should rank by signal quality
    cfg = replace(CarrierConfig(), hotspot_fraction=0.0)
    res = run_carrier_experiment(cfg, 5)
    base = res.throughput["baseline", "all"].percentile(50)
    prop = res.throughput["proposed", "all"].percentile(50)
    assert abs(prop - base) <= 0.10 * base, f"baseline median {base:.3g}, proposed median {prop:.3g}"
