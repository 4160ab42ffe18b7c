import math

import numpy as np
import pytest

from mcasim import radio
from mcasim.radio import LinkModel, decode_outcome, draw_snr, rsrp, rsrq, shannon_rate
from mcasim.rng import RngStream

P_FAIL = 1.0 - math.exp(-0.1)


def test_rayleigh_mean_snr():
    snr = draw_snr(LinkModel(10.0), RngStream(1, "snr"), 1_000_000)
    assert abs(snr.mean() / 10.0 - 1.0) < 0.01


def test_no_fading_is_deterministic():
    link = LinkModel(7.0, fading="none")
    snr = draw_snr(link, RngStream(1, "snr"), 100)
    assert np.all(snr == 10 ** 0.7)
    assert draw_snr(link, RngStream(1, "snr")) == 10 ** 0.7


def test_outage_probability_closed_form():
    assert LinkModel(10.0, 0.0).outage_probability() == pytest.approx(P_FAIL, rel=1e-12)
    assert P_FAIL == pytest.approx(0.09516, abs=1e-5)


def test_decode_boundary_is_inclusive():
    assert decode_outcome(1.0, 1.0)
    assert not decode_outcome(0.0, 1.0)
    with pytest.raises(ValueError):
        decode_outcome(1.0, 0.0)


def test_empirical_failure_rate():
    link = LinkModel()
    u = RngStream(77, "decode").uniform(1_000_000)
    fail = 1.0 - link.succeeds(u).mean()
    assert abs(fail - P_FAIL) < 0.001


def test_uniform_domain_decision_matches_snr_domain():
    link = LinkModel(10.0, 0.0)
    u = RngStream(4, "u").uniform(200_000)
    by_snr = decode_outcome(link.snr_from_uniform(u), link.target_linear)
    by_u = link.succeeds(u)
    # the two agree except possibly on draws within rounding of the boundary
    boundary = np.abs(u - link.outage_probability()) < 1e-12
    assert np.array_equal(by_snr[~boundary], by_u[~boundary])


def test_rsrp_and_rate_examples():
    assert rsrp(46.0, 100.0) == -54.0
    assert shannon_rate(0.0, 1.4e6) == 0.0
    assert shannon_rate(1.0, 1.4e6) == pytest.approx(1.4e6)
    with pytest.raises(ValueError):
        shannon_rate(1.0, 0.0)
    with pytest.raises(ValueError):
        shannon_rate(1.0, -5.0)


def test_rsrq_isolated_cell_limits():
    s = 1e-9
    idle = radio.received_power_total(np.array([s]), np.array([0.0]))
    full = radio.received_power_total(np.array([s]), np.array([1.0]))
    assert rsrq(s, idle) == pytest.approx(-3.0103, abs=1e-3)
    assert rsrq(s, full) == pytest.approx(10 * math.log10(1 / 12), abs=1e-9)
    with pytest.raises(ValueError):
        rsrq(s, s / 100)


def test_rsrq_falls_with_neighbour_activity():
    serving, neighbour = 1e-9, 5e-10
    powers = np.array([serving, neighbour])
    low = rsrq(serving, radio.received_power_total(powers, np.array([0.2, 0.0])))
    high = rsrq(serving, radio.received_power_total(powers, np.array([0.2, 1.0])))
    assert high < low


def test_pathloss_models():
    assert radio.MACRO_PATHLOSS(1000.0) == pytest.approx(128.1)
    assert radio.SMALL_PATHLOSS(1000.0) == pytest.approx(140.7)
    assert radio.MACRO_PATHLOSS(1.0) == 70.0  # minimum coupling loss floor
    d = np.array([100.0, 200.0, 400.0])
    assert np.all(np.diff(radio.MACRO_PATHLOSS(d)) > 0)
    with pytest.raises(ValueError):
        radio.MACRO_PATHLOSS(0.0)


def test_thermal_noise():
    assert radio.thermal_noise_dbm(1e6, 0.0) == pytest.approx(-114.0)
    assert radio.db2lin(10.0) == pytest.approx(10.0)
    assert radio.lin2db(100.0) == pytest.approx(20.0)
