"""One-step robust estimators of location, scale, correlation and slope.

These are the elementary fits everything else is built on.  They are
deliberately cheap: a median-based starting value followed by a single
reweighting or trimming pass.  All of them tolerate a large fraction of
wild values without breaking down, and all of them accept NaN entries,
which are treated as missing and skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "RobustTuning",
    "rob_loc",
    "rob_scale",
    "rob_corr",
    "rob_slope",
    "chisq1_cdf",
    "chisq1_quantile",
]


def chisq1_cdf(x):
    """Chi-squared CDF with one degree of freedom, F(x) = erf(sqrt(x/2)).

    Accepts scalars or arrays.  NaN entries pass through as NaN so the
    caller can keep a missing-value mask intact.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("chisq1_cdf is only defined for x >= 0")
    out = special.erf(np.sqrt(arr / 2.0))
    if arr.ndim == 0:
        return float(out)
    return out


def chisq1_quantile(p):
    """Chi-squared quantile with one degree of freedom.

    Computed as the square of the standard normal quantile at (1+p)/2,
    which keeps the round trip with :func:`chisq1_cdf` accurate to well
    below 1e-8 over the usual probability range.
    """
    arr = np.asarray(p, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)):
        raise ValueError("chisq1_quantile requires 0 < p < 1")
    z = special.ndtri((1.0 + arr) / 2.0)
    out = z * z
    if arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class RobustTuning:
    """Tuning constants shared by the robust estimators and the detector.

    biweight_c is the half-width of the biweight weighting window used by
    rob_loc.  scale_cap (b) bounds the squared deviations entering
    rob_scale and scale_consistency (delta) makes that scale consistent
    at the normal model.  tolerance is the probability that drives the
    flagging cutoff: cutoff = sqrt(chi-squared quantile with 1 df), so
    tolerance 0.99 gives cutoff 2.576.  ellipse_df sets the degrees of
    freedom of the tolerance ellipse used inside rob_corr; the default 2
    matches the bivariate clouds that estimator sees.
    """

    biweight_c: float = 3.0
    scale_cap: float = 2.5
    scale_consistency: float = 0.845
    tolerance: float = 0.99
    ellipse_df: int = 2

    def __post_init__(self):
        if not (self.biweight_c > 0):
            raise ValueError("biweight_c must be positive")
        if not (self.scale_cap > 0):
            raise ValueError("scale_cap must be positive")
        if not (self.scale_consistency > 0):
            raise ValueError("scale_consistency must be positive")
        if not (0.0 < self.tolerance < 1.0):
            raise ValueError("tolerance must lie strictly between 0 and 1")
        if int(self.ellipse_df) != self.ellipse_df or self.ellipse_df < 1:
            raise ValueError("ellipse_df must be a positive integer")

    @property
    def cutoff(self) -> float:
        """Flagging cutoff derived from tolerance; recomputed on access."""
        return math.sqrt(chisq1_quantile(self.tolerance))

    @property
    def ellipse_radius_sq(self) -> float:
        """Squared radius of the rob_corr tolerance ellipse."""
        if self.ellipse_df == 1:
            return chisq1_quantile(self.tolerance)
        if self.ellipse_df == 2:
            # chi-squared quantile with 2 df in closed form
            return -2.0 * math.log1p(-self.tolerance)
        from scipy import stats

        return float(stats.chi2.ppf(self.tolerance, self.ellipse_df))


_DEFAULT_TUNING = RobustTuning()


def _finite(values) -> np.ndarray:
    y = np.asarray(values, dtype=float).ravel()
    return y[np.isfinite(y)]


def rob_loc(values, c: float = 3.0) -> float:
    """One-step biweight estimate of location.

    Starts from the median m1 and the median absolute deviation s1, then
    returns a weighted mean with biweight weights ((1-(t/c)^2)^2 for
    |t| <= c, zero beyond) of the deviations t = (y-m1)/s1.  When s1 is
    zero the majority of the data sits exactly at m1 and m1 is returned.
    """
    y = _finite(values)
    if y.size == 0:
        raise ValueError("rob_loc needs at least one non-missing value")
    m1 = float(np.median(y))
    s1 = float(np.median(np.abs(y - m1)))
    if s1 == 0.0:
        return m1
    # wild values overflow the squaring but land in the zero-weight branch
    with np.errstate(over="ignore"):
        t = (y - m1) / (c * s1)
        w = np.where(np.abs(t) <= 1.0, (1.0 - t * t) ** 2, 0.0)
    return float(np.sum(w * y) / np.sum(w))


def rob_scale(values, cap: float = 2.5, consistency: float = 0.845) -> float:
    """One-step robust scale of an already centered sample.

    Starts from s2 = median(|y|), then averages the bounded loss
    rho(t) = min(t^2, cap^2) of y/s2 and rescales:

        s2 * sqrt(mean(rho(y/s2)) / consistency)

    The consistency constant 0.845 makes the estimate unbiased for the
    standard deviation of Gaussian data.  Returns 0.0 when the majority
    of the sample is exactly zero (s2 == 0), signalling a degenerate
    scale that callers must handle.
    """
    y = _finite(values)
    if y.size == 0:
        raise ValueError("rob_scale needs at least one non-missing value")
    s2 = float(np.median(np.abs(y)))
    if s2 == 0.0:
        return 0.0
    # overflowing squares are capped anyway
    with np.errstate(over="ignore"):
        t = y / s2
        rho = np.minimum(t * t, cap * cap)
    return float(s2 * math.sqrt(np.mean(rho) / consistency))


def rob_corr(x, y, tuning: RobustTuning | None = None) -> float:
    """Robust correlation between two standardized columns.

    A first estimate comes from the identity
    4*cor = scale(x+y)^2 - scale(x-y)^2 evaluated with rob_scale and
    clamped to [-1, 1].  That estimate shapes a tolerance ellipse, and
    the returned value is the uncentered product-moment correlation of
    the points strictly inside the ellipse.  Pairs with a missing entry
    are dropped first.  Returns NaN when the correlation is undefined:
    fewer than two complete pairs, fewer than two points inside the
    ellipse, or a degenerate sum of squares on either axis.
    """
    tuning = tuning or _DEFAULT_TUNING
    xa = np.asarray(x, dtype=float).ravel()
    ya = np.asarray(y, dtype=float).ravel()
    if xa.shape != ya.shape:
        raise ValueError("rob_corr requires columns of equal length")
    ok = np.isfinite(xa) & np.isfinite(ya)
    if int(ok.sum()) < 2:
        return float("nan")
    xa = xa[ok]
    ya = ya[ok]
    splus = rob_scale(xa + ya, tuning.scale_cap, tuning.scale_consistency)
    sminus = rob_scale(xa - ya, tuning.scale_cap, tuning.scale_consistency)
    rho = (splus * splus - sminus * sminus) / 4.0
    rho = min(1.0, max(-1.0, rho))
    if abs(rho) == 1.0:
        # keep the ellipse non-degenerate
        rho = math.copysign(1.0 - 1e-9, rho)
    quad = (xa * xa - 2.0 * rho * xa * ya + ya * ya) / (1.0 - rho * rho)
    inside = quad < tuning.ellipse_radius_sq
    if int(inside.sum()) < 2:
        return float("nan")
    xi = xa[inside]
    yi = ya[inside]
    sxx = float(xi @ xi)
    syy = float(yi @ yi)
    denom = math.sqrt(sxx * syy)
    if denom == 0.0:
        # sxx*syy can underflow to 0 for subnormal inputs even when both
        # factors are positive; roots taken separately survive that
        denom = math.sqrt(sxx) * math.sqrt(syy)
    if denom == 0.0:
        return float("nan")
    r = float(xi @ yi) / denom
    return min(1.0, max(-1.0, r))


def rob_slope(response, predictor, tuning: RobustTuning | None = None) -> float:
    """Robust slope of a no-intercept regression of response on predictor.

    The starting value is the median of the pairwise ratios
    response/predictor over nonzero predictor entries.  Residuals from
    that fit are trimmed at cutoff times their rob_scale, and the least
    squares no-intercept slope of the surviving pairs is returned.  When
    the trimmed least squares denominator vanishes the median-ratio
    start is returned instead.  Raises ValueError when no pair with a
    nonzero predictor exists, in which case no slope is identifiable.
    """
    tuning = tuning or _DEFAULT_TUNING
    ya = np.asarray(response, dtype=float).ravel()
    xa = np.asarray(predictor, dtype=float).ravel()
    if ya.shape != xa.shape:
        raise ValueError("rob_slope requires columns of equal length")
    ok = np.isfinite(ya) & np.isfinite(xa)
    ya = ya[ok]
    xa = xa[ok]
    nz = xa != 0.0
    if not bool(nz.any()):
        raise ValueError("rob_slope undefined: predictor has no nonzero values")
    b0 = float(np.median(ya[nz] / xa[nz]))
    resid = ya - b0 * xa
    s = rob_scale(resid, tuning.scale_cap, tuning.scale_consistency)
    keep = np.abs(resid) <= tuning.cutoff * s
    xk = xa[keep]
    den = float(xk @ xk)
    if den == 0.0:
        return b0
    return float(xk @ ya[keep]) / den

