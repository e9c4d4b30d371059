import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcptiming import fitting as ft
from mcptiming.listmode import Histogram

T = np.linspace(-1000.0, 1000.0, 200)


def noisy_lorentzian(rng, total=1e4, fwhm=150.0, baseline=2.0, t=T):
    shape = ft.lorentzian_eval([1.0, 0.0, fwhm, 0.0], t)
    A = (total - baseline * len(t)) / shape.sum()
    truth = np.array([A, 0.0, fwhm, baseline])
    return truth, rng.poisson(ft.lorentzian_eval(truth, t)).astype(float)


def fd_jacobian(f, p, eps=1e-6):
    p = np.asarray(p, dtype=float)
    cols = []
    for k in range(len(p)):
        h = eps * max(1.0, abs(p[k]))
        up, dn = p.copy(), p.copy()
        up[k] += h
        dn[k] -= h
        cols.append((f(up) - f(dn)) / (2 * h))
    return np.column_stack(cols)


# -- Levenberg-Marquardt core ------------------------------------------------

def test_lm_linear_problem_matches_lstsq():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 3))
    y = X @ [1.0, -2.0, 0.5] + 0.01 * rng.normal(size=30)
    res = ft.levenberg_marquardt(lambda p: X @ p - y, lambda p: X, np.zeros(3))
    np.testing.assert_allclose(res.params, np.linalg.lstsq(X, y, rcond=None)[0], rtol=1e-7)
    assert res.converged


def test_lm_rosenbrock():
    r = lambda p: np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]])
    J = lambda p: np.array([[-20 * p[0], 10.0], [-1.0, 0.0]])
    res = ft.levenberg_marquardt(r, J, [-1.2, 1.0])
    np.testing.assert_allclose(res.params, [1.0, 1.0], atol=1e-6)


def test_lm_respects_free_mask():
    X = np.eye(2)
    res = ft.levenberg_marquardt(lambda p: p - [3.0, 4.0], lambda p: X, [0.0, 1.0],
                                 free=np.array([True, False]))
    assert res.params[1] == 1.0
    assert res.params[0] == pytest.approx(3.0)


def test_lm_iteration_cap_reports_not_converged():
    r = lambda p: np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]])
    J = lambda p: np.array([[-20 * p[0], 10.0], [-1.0, 0.0]])
    res = ft.levenberg_marquardt(r, J, [-1.2, 1.0], max_iter=2)
    assert not res.converged
    assert res.n_iter == 2


def test_reduced_chi_square():
    assert ft.reduced_chi_square([1.0, 2.0], [1.0, 2.0], 1) == 2.0
    with pytest.raises(ValueError):
        ft.reduced_chi_square([1.0], [1.0], 0)


# -- Lorentzian --------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.floats(5.0, 1e5), st.floats(-300.0, 300.0), st.floats(40.0, 600.0),
       st.floats(0.1, 50.0))
def test_noiseless_recovery(A, Tc, G, B):
    truth = np.array([A, Tc, G, B])
    y = ft.lorentzian_eval(truth, T)
    init = ft.LorentzianParams(A * 0.7, Tc + 0.2 * G, G * 1.3, B * 0.5 + 1.0)
    rep = ft.fit_lorentzian_arrays(T, y, np.ones_like(y), init)
    assert rep.converged
    np.testing.assert_allclose(np.array(rep.params), truth, rtol=1e-6, atol=1e-6 * A)


@settings(max_examples=30)
@given(st.floats(0.1, 1e4), st.floats(-500.0, 500.0), st.floats(1.0, 800.0),
       st.floats(-10.0, 10.0))
def test_jacobian_matches_finite_differences(A, Tc, G, B):
    p = [A, Tc, G, B]
    J = ft.lorentzian_jacobian(p, T)
    Jn = fd_jacobian(lambda q: ft.lorentzian_eval(q, T), p)
    np.testing.assert_allclose(J, Jn, rtol=1e-6, atol=1e-6 * max(A, 1.0) / 1e3)


@settings(max_examples=30)
@given(st.floats(0.0, 2e4), st.floats(0.01, 2.0), st.floats(0.0, 60.0), st.floats(30.0, 80.0))
def test_extrapolation_jacobian_matches_finite_differences(a2, b, j, s):
    x = np.linspace(10.0, 95.0, 6)
    J = ft.extrapolation_jacobian(a2, b, x, j, s)
    # complex step: no subtractive cancellation, so exact to rounding
    h = 1e-20
    Jn = np.column_stack([ft.extrapolation_model(a2 + 1j * h, b, x, j, s).imag / h,
                          ft.extrapolation_model(a2, b + 1j * h, x, j, s).imag / h])
    np.testing.assert_allclose(J, Jn, rtol=1e-6, atol=1e-9)


def test_poisson_recovery_coverage():
    rng = np.random.default_rng(2024)
    hits = 0
    chis = []
    for _ in range(200):
        truth, y = noisy_lorentzian(rng)
        rep = ft.fit_lorentzian_arrays(T, y, ft.point_sigmas(y, "poisson"), weighting="poisson")
        hits += abs(rep.params.fwhm_ps - truth[2]) < 3 * rep.errors.fwhm_ps
        chis.append(rep.reduced_chi_square)
    assert hits >= 190
    assert 0.7 <= np.median(chis) <= 1.3


def test_unweighted_sandwich_errors_are_calibrated():
    rng = np.random.default_rng(9)
    pulls = []
    for _ in range(200):
        truth, y = noisy_lorentzian(rng)
        rep = ft.fit_lorentzian_arrays(T, y, np.ones_like(y), covariance="poisson",
                                       weighting="unweighted")
        pulls.append((rep.params.fwhm_ps - truth[2]) / rep.errors.fwhm_ps)
    assert 0.8 < np.std(pulls) < 1.2


def test_time_shift_equivariance():
    rng = np.random.default_rng(4)
    _, y = noisy_lorentzian(rng)
    a = ft.fit_lorentzian_arrays(T, y, ft.point_sigmas(y, "paper"))
    b = ft.fit_lorentzian_arrays(T + 1234.5, y, ft.point_sigmas(y, "paper"))
    assert b.params.centroid_ps - a.params.centroid_ps == pytest.approx(1234.5, abs=1e-6)
    assert b.params.fwhm_ps == pytest.approx(a.params.fwhm_ps, rel=1e-8)


def test_amplitude_scaling_keeps_shape():
    y = ft.lorentzian_eval([100.0, 5.0, 200.0, 1.0], T)
    a = ft.fit_lorentzian_arrays(T, y, np.ones_like(y))
    b = ft.fit_lorentzian_arrays(T, 7 * y, np.ones_like(y))
    assert b.params.fwhm_ps == pytest.approx(a.params.fwhm_ps, rel=1e-8)
    assert b.params.amplitude == pytest.approx(7 * a.params.amplitude, rel=1e-8)


def test_point_sigmas():
    x = np.array([0.0, 1.0, 2.0, 10.0])
    np.testing.assert_allclose(ft.point_sigmas(x, "paper"), [1, 1, 1, 3])
    np.testing.assert_allclose(ft.point_sigmas(x, "poisson"), [1, 1, math.sqrt(2), math.sqrt(10)])
    np.testing.assert_allclose(ft.point_sigmas(x, "unweighted"), 1)
    with pytest.raises(ValueError):
        ft.point_sigmas(x, "bayes")


def test_initial_guess():
    y = ft.lorentzian_eval([50.0, 100.0, 200.0, 3.0], T)
    g = ft.initial_guess(T, y)
    assert g.centroid_ps == pytest.approx(100.0, abs=10.0)
    assert g.fwhm_ps == pytest.approx(200.0, rel=0.1)
    assert g.baseline == pytest.approx(y.min())


def test_fit_errors():
    with pytest.raises(ft.FitError):
        ft.fit_lorentzian_arrays(T, np.r_[np.ones(5), np.zeros(195)], np.ones(200))
    with pytest.raises(ft.FitError):
        ft.fit_lorentzian_arrays(T, np.full(200, 4.0), np.ones(200))
    with pytest.raises(ValueError):
        ft.fit_lorentzian_arrays(T, T * 0 + 1, np.ones(200), covariance="bootstrap")


def test_fit_lorentzian_on_histogram_requires_range():
    counts = np.round(ft.lorentzian_eval([100.0, 500.0, 100.0, 1.0], np.arange(200) * 5.0 + 2.5))
    h = Histogram(5, 0, counts.astype(np.int64), tick_ps=1.0)
    with pytest.raises(ft.FitError):
        ft.fit_lorentzian(h, "paper", None)
    full = ft.fit_lorentzian(h, "paper", (0, 1000))
    part = ft.fit_lorentzian(h, "paper", (300, 700))
    assert part.n_points < full.n_points
    assert part.fit_range_ps == (300.0, 700.0)
    assert full.params.fwhm_ps == pytest.approx(100.0, rel=0.02)


def test_fixed_baseline():
    y = ft.lorentzian_eval([100.0, 0.0, 150.0, 0.0], T)
    rep = ft.fit_lorentzian_arrays(T, y, np.ones_like(y), fit_baseline=False)
    assert rep.params.baseline == 0.0
    assert rep.covariance[3, 3] == 0.0
    assert rep.n_free == len(T) - 3


def test_report_dict_keys():
    y = ft.lorentzian_eval([100.0, 0.0, 150.0, 1.0], T)
    d = ft.fit_lorentzian_arrays(T, y, np.ones_like(y)).to_dict()
    for k in ("centroid_ps", "fwhm_ps", "fwhm_sigma_ps", "reduced_chi_square", "converged"):
        assert k in d


# -- extrapolation -------------------------------------------------------------

def test_extrapolation_algebraic_spot_check():
    assert ft.extrapolation_model(123.0**2, 0.0, 0.0, 38.0, 47.0) == pytest.approx(142.2, abs=0.1)


def test_extrapolation_noiseless_recovery():
    x = np.array([93.0, 79.0, 64.0, 50.0, 37.0, 26.0])
    y = ft.extrapolation_model(123.0**2, 1.1, x, 38.0, 47.0)
    pts = [ft.ExtrapolationPoint(a, b, 2.0) for a, b in zip(x, y)]
    rep = ft.fit_extrapolation(pts, 38.0, 47.0)
    assert rep.a_ps == pytest.approx(123.0, rel=1e-6)
    assert rep.b_ps_per_percent == pytest.approx(1.1, rel=1e-6)
    assert rep.covers(123.0)


def test_extrapolation_fixed_b_matches_algebra():
    # with b fixed at 0 the fit inverts the quadrature sum directly
    pts = [ft.ExtrapolationPoint(x, 150.0, 1.0) for x in (10.0, 50.0, 90.0)]
    rep = ft.fit_extrapolation(pts, 38.0, 47.0, fix_b=0.0)
    assert rep.a_ps == pytest.approx(math.sqrt(150.0**2 - 2 * 38.0**2 - 47.0**2), rel=1e-9)


def test_extrapolation_ci_coverage_on_synthetic_points():
    rng = np.random.default_rng(17)
    x = np.array([93.0, 79.0, 64.0, 50.0, 37.0, 26.0])
    sig = np.array([2.4, 2.8, 3.4, 4.2, 5.5, 7.5])
    y0 = ft.extrapolation_model(123.0**2, 1.1, x, 38.0, 47.0)
    cover = 0
    for _ in range(300):
        y = y0 + sig * rng.normal(size=6)
        rep = ft.fit_extrapolation([ft.ExtrapolationPoint(*p) for p in zip(x, y, sig)],
                                   38.0, 47.0)
        cover += rep.covers(123.0)
    assert cover / 300 > 0.88


def test_extrapolation_negative_a_squared():
    pts = [ft.ExtrapolationPoint(x, 60.0 + 0.1 * x, 1.0) for x in (20.0, 50.0, 80.0)]
    rep = ft.fit_extrapolation(pts, 38.0, 47.0)
    assert rep.a_squared < 0
    assert rep.a_ps == 0.0
    assert rep.covers(0.0)


def test_extrapolation_preconditions():
    with pytest.raises(ft.FitError):
        ft.fit_extrapolation([ft.ExtrapolationPoint(1, 150, 1)] * 2, 38, 47)
    with pytest.raises(ft.FitError):
        ft.fit_extrapolation([ft.ExtrapolationPoint(50, 150, 1)] * 3, 38, 47)
    with pytest.raises(ft.FitError):
        ft.fit_extrapolation([ft.ExtrapolationPoint(x, 150, 0) for x in (1, 2, 3)], 38, 47)


def test_extrapolation_t_quantile():
    x = np.array([90.0, 60.0, 30.0, 10.0])
    pts = [ft.ExtrapolationPoint(a, b, 1.0)
           for a, b in zip(x, ft.extrapolation_model(1e4, 1.0, x, 38, 47) + [0.5, -0.5, 0.5, -0.5])]
    rep = ft.fit_extrapolation(pts, 38.0, 47.0)
    assert rep.t_quantile == pytest.approx(4.302653, abs=1e-5)  # t(0.975, 2)


# -- threshold scan --------------------------------------------------------------

def test_threshold_fit_recovers_parameters():
    v = np.geomspace(2, 80, 12)
    c = 656.0 * (6.87 - np.log(v))
    fit = ft.fit_threshold_scan(v, c, sigma=np.ones_like(v))
    assert fit.C0 == pytest.approx(656.0, rel=1e-10)
    assert fit.D0 == pytest.approx(6.87, rel=1e-10)


def test_threshold_fit_needs_points():
    with pytest.raises(ft.FitError):
        ft.fit_threshold_scan([1.0, 2.0], [3.0, 2.0])
