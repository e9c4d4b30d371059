import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from mcptiming import physics as ph


GEOM = ph.GeometrySpec(10.0, 1.25)


def disk_solid_angle_numeric(d, R):
    # integrate the projected area element over the disk
    f = lambda r: 2 * math.pi * r * d / (d * d + r * r) ** 1.5
    return integrate.quad(f, 0, R, epsabs=1e-13, epsrel=1e-12)[0]


@pytest.mark.parametrize("s", [0.3, 2.0, 5.0, 7.5, 9.9])
def test_solid_angles_match_numeric_integral(s):
    om_start, om_stop = ph.solid_angles(GEOM, s)
    assert om_start == pytest.approx(disk_solid_angle_numeric(s, 1.25), rel=1e-10)
    assert om_stop == pytest.approx(disk_solid_angle_numeric(10 - s, 1.25), rel=1e-10)


def test_solid_angle_domain():
    for s in (0.0, 10.0, -1.0, 12.0):
        with pytest.raises(ph.DomainError):
            ph.solid_angles(GEOM, s)


def test_solid_angle_limits():
    # close to a face the disk covers almost a hemisphere
    om, _ = ph.solid_angles(GEOM, 1e-6)
    assert om == pytest.approx(2 * math.pi, rel=1e-5)


@pytest.mark.parametrize("n,f1", [(0.0, 0.25), (1.0, 1.0), (1 / 3, 0.5), (0.041, 0.28075)])
def test_two_photon_fraction(n, f1):
    fr = ph.two_photon_fraction(n)
    assert fr.f1 == pytest.approx(f1, abs=1e-12)
    assert fr.f1 + fr.f3 == pytest.approx(1.0)


def test_channel_fraction_validation():
    with pytest.raises(ph.DomainError):
        ph.ChannelFractions(0.6, 0.6)
    with pytest.raises(ph.DomainError):
        ph.two_photon_fraction(1.5)


def test_singles_rate_inverts():
    fr = ph.two_photon_fraction(0.0)
    om, _ = ph.solid_angles(GEOM, 5.0)
    r = ph.singles_rate(0.007, om, fr, 274064)
    assert ph.efficiency_from_singles(r, om, fr, 274064) == pytest.approx(0.007, rel=1e-14)


def test_efficiency_inversion_hand_values():
    # 99 and 51 counts/s at the centre, f1 = 0.25
    fr = ph.two_photon_fraction(0.0)
    om, _ = ph.solid_angles(GEOM, 5.0)
    frac = om / (4 * math.pi)
    bracket = 1 + 1.8 * 0.25 + 2.7 * 0.75
    assert ph.efficiency_from_singles(99, om, fr, 274064) == pytest.approx(
        99 / (frac * bracket * 274064), rel=1e-14)
    assert ph.efficiency_from_singles(99, om, fr, 274064) == pytest.approx(0.0070, abs=1e-4)
    assert ph.efficiency_from_singles(51, om, fr, 274064) == pytest.approx(0.0036, abs=1e-4)


def test_efficiency_inversion_errors():
    fr = ph.two_photon_fraction(0.0)
    with pytest.raises(ph.DomainError):
        ph.efficiency_from_singles(0.0, 0.1, fr, 1e5)
    with pytest.raises(ph.DomainError):
        ph.singles_rate(1.2, 0.1, fr, 1e5)


def test_coincidence_rates_zero_efficiency():
    fr = ph.two_photon_fraction(0.0)
    r = ph.coincidence_rates(0.0, 0.005, GEOM, 3.0, fr, 3e5)
    assert (r.R_AA, r.R_DA, r.R_total) == (0.0, 0.0, 0.0)


def test_coincidence_rates_hand_formula():
    fr = ph.ChannelFractions(0.5, 0.5)
    s = 3.0
    a_s = (1 - s / math.hypot(s, 1.25)) / 2
    a_p = (1 - (10 - s) / math.hypot(10 - s, 1.25)) / 2
    r = ph.coincidence_rates(0.004, 0.006, GEOM, s, fr, 310000)
    assert r.R_AA == pytest.approx(0.004 * 0.006 * a_p * 1.8 * 0.5 * 310000, rel=1e-12)
    assert r.R_DA == pytest.approx(
        2 * 0.004 * a_s * 310000 * 0.006 * a_p * (1.8 * 0.5 + 2.7 * 0.5), rel=1e-12)
    assert not r.swapped


def test_coincidence_rates_mirror_symmetry():
    fr = ph.ChannelFractions(0.5, 0.5)
    for s in (0.5, 2.0, 4.0):
        a = ph.coincidence_rates(0.005, 0.005, GEOM, s, fr, 310000)
        b = ph.coincidence_rates(0.005, 0.005, GEOM, 10 - s, fr, 310000)
        assert b.swapped
        assert a.R_AA == pytest.approx(b.R_AA, rel=1e-12)
        assert a.R_DA == pytest.approx(b.R_DA, rel=1e-12)


def test_rate_scan_peaks_at_centre_and_aa_dominates():
    fr = ph.ChannelFractions(0.5, 0.5)
    grid = np.arange(1, 100) * 0.1
    tot = [ph.coincidence_rates(0.005, 0.005, GEOM, s, fr, 310000).R_total for s in grid]
    assert grid[int(np.argmax(tot))] == pytest.approx(5.0)
    mid = ph.coincidence_rates(0.005, 0.005, GEOM, 5.0, fr, 310000)
    assert mid.R_AA > mid.R_DA


def test_expected_centroid_shifts():
    c = lambda s: ph.expected_centroid(GEOM, s, tau_delay=50000)
    assert c(5.0) == pytest.approx(50000.0)
    assert c(8.7) - c(5.0) == pytest.approx(-246.8, abs=0.1)
    assert c(4.9) - c(6.4) == pytest.approx(100.07, abs=0.01)
    # tau_delay cancels in differences
    d1 = ph.expected_centroid(GEOM, 6, 10.0) - ph.expected_centroid(GEOM, 4, 10.0)
    d2 = ph.expected_centroid(GEOM, 6, 9e4) - ph.expected_centroid(GEOM, 4, 9e4)
    assert d1 == pytest.approx(d2, abs=1e-9)


def test_avalanche_law_values():
    mcp = ph.McpSpec()
    assert mcp.v_max_mV == pytest.approx(86.0, abs=1.0)
    assert mcp.max_electrons == pytest.approx(2.7e6, abs=0.05e6)
    assert ph.max_penetration_depth(mcp) == pytest.approx(71.15, abs=0.01)
    assert mcp.v_max_mV == pytest.approx(
        1.602176634e-19 * 1.4**44 / 5e-12 * 1e3, rel=1e-12)


@given(st.floats(0.0, 800.0))
def test_avalanche_position_inverts_amplitude(x):
    mcp = ph.McpSpec()
    assert ph.avalanche_position(ph.pulse_amplitude(x, mcp), mcp) == pytest.approx(x, abs=1e-8)


def test_pulse_amplitude_domain():
    mcp = ph.McpSpec()
    with pytest.raises(ph.DomainError):
        ph.pulse_amplitude(-1.0, mcp)
    with pytest.raises(ph.DomainError):
        ph.avalanche_position(200.0, mcp)


def test_penetration_depth_domain():
    with pytest.raises(ph.DomainError):
        ph.max_penetration_depth(ph.McpSpec(bias_angle_deg=0.0))


def test_phd_normalised():
    mcp = ph.McpSpec()
    A0 = ph.phd_normalization(mcp)
    total = integrate.quad(lambda v: ph.phd_density(v, mcp, A0),
                           mcp.single_electron_mV, mcp.v_max_mV, limit=200)[0]
    assert total == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("vth", [0.5, 4.0, 30.0, 80.0])
def test_threshold_curve_is_phd_integral(vth):
    mcp = ph.McpSpec()
    A0 = 0.01
    C0, D0 = ph.threshold_curve_params(mcp, A0)
    numeric = integrate.quad(lambda v: ph.phd_density(v, mcp, A0), vth, mcp.v_max_mV,
                             epsabs=0, epsrel=1e-13, limit=200)[0]
    assert ph.threshold_count_curve(vth, C0, D0) == pytest.approx(numeric, rel=1e-9)


def test_threshold_curve_clamps():
    assert ph.threshold_count_curve(1e6, 10.0, 2.0) == 0.0
    with pytest.raises(ph.DomainError):
        ph.threshold_count_curve(0.0, 1.0, 1.0)


def test_selection_window():
    mcp = ph.McpSpec()
    s0 = 800 / 44
    w = ph.selection_window_width(10.0, 1.0, mcp)
    assert w == pytest.approx(s0 / math.log(1.4) * math.log(1.1), rel=1e-12)
    assert ph.selection_window_width(10.0, 0.0, mcp) == 0.0
    with pytest.raises(ph.DomainError):
        ph.selection_window_width(10.0, -1.0, mcp)


def test_quadrature_budget():
    b = ph.ErrorBudget()
    assert ph.quadrature_budget(b) == pytest.approx(120.6, abs=0.05)
    hand = math.sqrt(123**2 + 2 * 38**2 + 47**2)
    assert ph.quadrature_budget(ph.ErrorBudget(38, 0, 0, 47), qm=123) == pytest.approx(hand)
    assert hand == pytest.approx(142.2, abs=0.1)
    with pytest.raises(ph.DomainError):
        ph.ErrorBudget(jitter_ps=-1)


def test_source_location_term():
    assert ph.source_location_term(0.7) == pytest.approx(46.7, abs=0.05)
