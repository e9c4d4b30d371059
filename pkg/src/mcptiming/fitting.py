"""Least-squares fitting: Lorentzian timing peaks, the FWHM-vs-tagging
extrapolation and the threshold-scan curve."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats

from .listmode import Histogram


class FitError(RuntimeError):
    """A fit cannot be set up (degenerate or insufficient data)."""


# -- Levenberg-Marquardt ---------------------------------------------------


@dataclass
class LMResult:
    params: np.ndarray
    cost: float
    jacobian: np.ndarray
    n_iter: int
    converged: bool


def levenberg_marquardt(
    residuals: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    p0,
    lam: float = 1e-3,
    max_iter: int = 200,
    rtol: float = 1e-10,
    free: Optional[np.ndarray] = None,
) -> LMResult:
    """Minimise ``sum(residuals(p)**2)``.

    Marquardt-scaled damping, multiplied by 10 on a rejected step and divided
    by 10 on an accepted one. Converged once an accepted step lowers the cost
    by a relative amount below ``rtol`` (or no step can lower it at all).
    ``free`` masks which parameters vary.
    """
    p = np.asarray(p0, dtype=float).copy()
    free = np.ones(len(p), dtype=bool) if free is None else np.asarray(free, dtype=bool)
    r = residuals(p)
    cost = float(r @ r)
    converged = cost == 0.0
    it = 0
    while not converged and it < max_iter:
        it += 1
        J = jacobian(p)[:, free]
        g = J.T @ r
        A = J.T @ J
        d = np.diag(A).copy()
        d[d == 0] = 1.0
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                trial = p.copy()
                trial[free] += step
                r_new = residuals(trial)
                new_cost = float(r_new @ r_new)
                if np.isfinite(new_cost) and new_cost <= cost:
                    rel = (cost - new_cost) / cost if cost > 0 else 0.0
                    p, r, cost = trial, r_new, new_cost
                    lam = max(lam / 10, 1e-15)
                    if rel < rtol or cost == 0.0:
                        converged = True
                    break
            lam *= 10
            if lam > 1e16:
                converged = True  # no downhill step left at this precision
                break
    return LMResult(p, cost, jacobian(p), it, converged)


def reduced_chi_square(residuals, sigmas, n_free: int) -> float:
    if n_free < 1:
        raise ValueError("reduced chi-square needs at least one degree of freedom")
    z = np.asarray(residuals, dtype=float) / np.asarray(sigmas, dtype=float)
    return float(z @ z / n_free)


# -- Lorentzian peak -------------------------------------------------------


class LorentzianParams(NamedTuple):
    amplitude: float
    centroid_ps: float
    fwhm_ps: float
    baseline: float = 0.0


PARAM_NAMES = ("amplitude", "centroid_ps", "fwhm_ps", "baseline")


def lorentzian_eval(p, t):
    """``B + A * h**2 / ((t - Tc)**2 + h**2)`` with ``h = FWHM / 2``."""
    A, Tc, G, B = p
    h = 0.5 * G
    d = np.asarray(t, dtype=float) - Tc
    return B + A * h * h / (d * d + h * h)


def lorentzian_jacobian(p, t):
    """Partial derivatives w.r.t. (A, Tc, FWHM, B), one row per ``t``."""
    A, Tc, G, B = p
    h = 0.5 * G
    d = np.asarray(t, dtype=float) - Tc
    q = d * d + h * h
    J = np.empty((d.size, 4))
    J[:, 0] = h * h / q
    J[:, 1] = 2 * A * h * h * d / (q * q)
    J[:, 2] = A * h * d * d / (q * q)
    J[:, 3] = 1.0
    return J


WEIGHTINGS = ("paper", "unweighted", "poisson")


def point_sigmas(counts, weighting: str) -> np.ndarray:
    """Per-bin standard deviations for a weighting scheme.

    ``paper``: sqrt(|x - 1|) floored at 1; ``poisson``: sqrt(x) floored at 1;
    ``unweighted``: 1.
    """
    x = np.asarray(counts, dtype=float)
    if weighting == "paper":
        return np.maximum(np.sqrt(np.abs(x - 1.0)), 1.0)
    if weighting == "poisson":
        return np.maximum(np.sqrt(x), 1.0)
    if weighting == "unweighted":
        return np.ones_like(x)
    raise ValueError(f"unknown weighting {weighting!r}; choose from {WEIGHTINGS}")


@dataclass
class FitReport:
    params: LorentzianParams
    covariance: np.ndarray
    reduced_chi_square: float
    n_points: int
    n_free: int
    converged: bool
    weighting: str = "unweighted"
    fit_range_ps: tuple = (float("nan"), float("nan"))
    n_iter: int = 0

    @property
    def errors(self) -> LorentzianParams:
        return LorentzianParams(*np.sqrt(np.clip(np.diag(self.covariance), 0, None)))

    def to_dict(self) -> dict:
        err = self.errors
        return {
            "amplitude": self.params.amplitude,
            "amplitude_sigma": err.amplitude,
            "centroid_ps": self.params.centroid_ps,
            "centroid_sigma_ps": err.centroid_ps,
            "fwhm_ps": self.params.fwhm_ps,
            "fwhm_sigma_ps": err.fwhm_ps,
            "baseline": self.params.baseline,
            "baseline_sigma": err.baseline,
            "covariance": self.covariance.tolist(),
            "reduced_chi_square": self.reduced_chi_square,
            "n_points": self.n_points,
            "n_free": self.n_free,
            "converged": self.converged,
            "weighting": self.weighting,
            "fit_range_ps": list(self.fit_range_ps),
        }


def initial_guess(t, y) -> LorentzianParams:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y))
    lo = float(y.min())
    A = float(y[k]) - lo
    half = lo + A / 2
    left = k
    while left > 0 and y[left] > half:
        left -= 1
    right = k
    while right < len(y) - 1 and y[right] > half:
        right += 1
    width = float(t[right] - t[left])
    if width <= 0:
        width = float(np.median(np.diff(t))) if len(t) > 1 else 1.0
    return LorentzianParams(A, float(t[k]), width, lo)


def fit_lorentzian_arrays(t, y, sigma, init: Optional[LorentzianParams] = None,
                          fit_baseline: bool = True, covariance: str = "plain",
                          weighting: str = "custom") -> FitReport:
    """Weighted Lorentzian fit of ``y(t)`` with per-point ``sigma``.

    ``covariance``: ``plain`` inverts the weighted normal matrix, ``scaled``
    multiplies that by the reduced chi-square, ``poisson`` is the sandwich
    estimate with the fitted model as the count variance.
    """
    if covariance not in ("plain", "scaled", "poisson"):
        raise ValueError(f"unknown covariance mode {covariance!r}")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.count_nonzero(y) < 8:
        raise FitError("Lorentzian fit needs at least 8 non-empty bins")
    if np.all(y == y[0]):
        raise FitError("degenerate histogram: all bins equal")
    p0 = initial_guess(t, y) if init is None else init
    p0 = np.array(p0, dtype=float)
    if not fit_baseline:
        p0[3] = 0.0
    free = np.array([True, True, True, fit_baseline])
    res = levenberg_marquardt(
        lambda p: (y - lorentzian_eval(p, t)) / sigma,
        lambda p: -lorentzian_jacobian(p, t) / sigma[:, None],
        p0, free=free,
    )
    p = res.params.copy()
    p[2] = abs(p[2])
    n_par = int(free.sum())
    n_free = len(t) - n_par
    rchi = res.cost / n_free if n_free > 0 else float("nan")
    cov = np.zeros((4, 4))
    Jf = res.jacobian[:, free]
    try:
        cf = np.linalg.inv(Jf.T @ Jf)
    except np.linalg.LinAlgError:
        cf = np.linalg.pinv(Jf.T @ Jf)
    if covariance == "scaled" and n_free > 0:
        cf = cf * rchi
    elif covariance == "poisson":
        var = np.clip(lorentzian_eval(p, t), 0.0, None) / sigma**2
        cf = cf @ (Jf.T * var) @ Jf @ cf
    cov[np.ix_(free, free)] = cf
    return FitReport(LorentzianParams(*p), cov, rchi, len(t), n_free,
                     bool(res.converged and p[2] > 0), weighting,
                     (float(t.min()), float(t.max())), res.n_iter)


def fit_lorentzian(hist: Histogram, weighting: str, fit_range_ps: tuple[float, float],
                   init: Optional[LorentzianParams] = None,
                   fit_baseline: bool = True) -> FitReport:
    """Fit a Lorentzian to the bins of ``hist`` whose centres lie inside
    ``fit_range_ps``.

    With ``unweighted`` the sigmas carry no scale. The covariance is then
    the sandwich form with Poisson variance taken from the fitted model. The
    other schemes use the inverse normal matrix as is.
    """
    if fit_range_ps is None:
        raise FitError("fit range is required")
    lo, hi = fit_range_ps
    t = hist.centers_ps
    sel = (t >= lo) & (t <= hi)
    y = hist.counts[sel].astype(float)
    rep = fit_lorentzian_arrays(t[sel], y, point_sigmas(y, weighting), init,
                                fit_baseline,
                                covariance="poisson" if weighting == "unweighted" else "plain",
                                weighting=weighting)
    rep.fit_range_ps = (float(lo), float(hi))
    return rep


# -- FWHM extrapolation ----------------------------------------------------


class ExtrapolationPoint(NamedTuple):
    x_percent: float
    fwhm_ps: float
    fwhm_sigma_ps: float


@dataclass
class ExtrapolationReport:
    a_ps: float
    b_ps_per_percent: float
    ci95_a_ps: float
    a_squared: float
    covariance: np.ndarray
    reduced_chi_square: float
    n_points: int
    jitter_ps: float
    source_term_ps: float
    t_quantile: float = field(default=float("nan"))

    @property
    def ci95_interval(self) -> tuple[float, float]:
        return max(self.a_ps - self.ci95_a_ps, 0.0), self.a_ps + self.ci95_a_ps

    def covers(self, value: float) -> bool:
        lo, hi = self.ci95_interval
        return lo <= value <= hi

    def to_dict(self) -> dict:
        return {
            "a_ps": self.a_ps,
            "b_ps_per_percent": self.b_ps_per_percent,
            "ci95_a_ps": self.ci95_a_ps,
            "ci95_low_ps": self.ci95_interval[0],
            "ci95_high_ps": self.ci95_interval[1],
            "a_squared_ps2": self.a_squared,
            "covariance": self.covariance.tolist(),
            "reduced_chi_square": self.reduced_chi_square,
            "n_points": self.n_points,
            "jitter_ps": self.jitter_ps,
            "source_term_ps": self.source_term_ps,
        }


def extrapolation_model(a2: float, b: float, x, jitter: float, source_term: float):
    x = np.asarray(x, dtype=float)
    return np.sqrt(a2 + (b * x) ** 2 + 2 * jitter**2 + source_term**2)


def extrapolation_jacobian(a2: float, b: float, x, jitter: float, source_term: float):
    """Partials of :func:`extrapolation_model` w.r.t. (a**2, b)."""
    x = np.asarray(x, dtype=float)
    f = extrapolation_model(a2, b, x, jitter, source_term)
    return np.column_stack([0.5 / f, b * x * x / f])


def fit_extrapolation(points: Sequence[ExtrapolationPoint], jitter: float,
                      source_term: float, fix_b: Optional[float] = None) -> ExtrapolationReport:
    """Fit ``FWHM(x) = sqrt(a^2 + (b x)^2 + 2 jitter^2 + source^2)``.

    ``a**2`` is the free parameter, so the reported ``a`` is never complex.
    The 95% half-width on ``a`` comes from the covariance scaled by the
    reduced chi-square and a Student-t quantile with n - 2 dof.
    """
    pts = list(points)
    if len(pts) < 3:
        raise FitError("extrapolation needs at least 3 points")
    if jitter < 0 or source_term < 0:
        raise FitError("jitter and source terms must be >= 0")
    x = np.array([p.x_percent for p in pts], dtype=float)
    y = np.array([p.fwhm_ps for p in pts], dtype=float)
    s = np.array([p.fwhm_sigma_ps for p in pts], dtype=float)
    if np.any(s <= 0) or np.any(y <= 0):
        raise FitError("FWHM values and sigmas must be > 0")
    if fix_b is None and np.ptp(x) == 0:
        raise FitError("all points share one abscissa; b is not identifiable")

    const = 2 * jitter**2 + source_term**2
    if fix_b is None:
        # linear in (a^2, b^2) for the squared widths: a good starting point
        A = np.column_stack([np.ones_like(x), x * x]) / (2 * y * s)[:, None]
        c0 = np.linalg.lstsq(A, (y * y - const) / (2 * y * s), rcond=None)[0]
        p0 = [c0[0], math.sqrt(max(c0[1], 1e-6))]
        free = None
    else:
        p0 = [float(np.average(y * y - const - (fix_b * x) ** 2, weights=1 / s**2)), fix_b]
        free = np.array([True, False])

    res = levenberg_marquardt(
        lambda p: (y - extrapolation_model(p[0], p[1], x, jitter, source_term)) / s,
        lambda p: -extrapolation_jacobian(p[0], p[1], x, jitter, source_term) / s[:, None],
        p0, free=free,
    )
    a2, b = res.params
    n_par = 2 if fix_b is None else 1
    dof = len(pts) - n_par
    rchi = res.cost / dof if dof > 0 else float("nan")
    mask = np.ones(2, dtype=bool) if free is None else free
    Jf = res.jacobian[:, mask]
    cov = np.zeros((2, 2))
    cf = np.linalg.inv(Jf.T @ Jf)
    cov[np.ix_(mask, mask)] = cf * (rchi if dof > 0 else 1.0)
    tq = float(stats.t.ppf(0.975, max(dof, 1)))
    sd_a2 = math.sqrt(max(cov[0, 0], 0.0))
    if a2 > 0:
        a = math.sqrt(a2)
        ci = tq * sd_a2 / (2 * a)
    else:
        a = 0.0
        ci = math.sqrt(tq * sd_a2)
    return ExtrapolationReport(a, abs(b), ci, a2, cov, rchi, len(pts), jitter,
                               source_term, tq)


# -- threshold scan --------------------------------------------------------


@dataclass
class ThresholdFit:
    C0: float
    D0: float
    covariance: np.ndarray
    reduced_chi_square: float
    n_points: int


def fit_threshold_scan(V_th, counts, sigma=None) -> ThresholdFit:
    """Weighted linear fit of ``C0 * (D0 - ln V_th)`` (Poisson sigmas by
    default)."""
    v = np.asarray(V_th, dtype=float)
    c = np.asarray(counts, dtype=float)
    if len(v) < 3:
        raise FitError("threshold fit needs at least 3 points")
    s = np.maximum(np.sqrt(c), 1.0) if sigma is None else np.asarray(sigma, dtype=float)
    # c = k0 + k1 * ln V with k0 = C0 D0, k1 = -C0
    X = np.column_stack([np.ones_like(v), np.log(v)]) / s[:, None]
    k, *_ = np.linalg.lstsq(X, c / s, rcond=None)
    cov_k = np.linalg.inv(X.T @ X)
    C0 = -k[1]
    D0 = k[0] / C0
    r = c - (k[0] + k[1] * np.log(v))
    rchi = reduced_chi_square(r, s, len(v) - 2)
    g = np.array([[0.0, -1.0], [1.0 / C0, k[0] / C0**2]])
    return ThresholdFit(float(C0), float(D0), g @ cov_k @ g.T, rchi, len(v))
