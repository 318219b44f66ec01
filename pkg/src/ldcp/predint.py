"""Per-parameter interval prediction.

Values are normalized (median / centered absolute first moment), mapped
through a Yeo-Johnson transform with lambda restricted to [0, 2], and a
Laplace-kernel density estimate on the transformed values supplies the
tail quantiles. The quantiles are mapped back to parameter space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"empty interval [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, v, tol: float = 0.0) -> bool:
        return self.lower - tol <= v <= self.upper + tol

    def __iter__(self):
        yield self.lower
        yield self.upper


@dataclass(frozen=True)
class NormalizationParams:
    mu: float
    delta: float


@dataclass(frozen=True)
class TransformParams:
    lam: float

    def __post_init__(self):
        _check_lambda(self.lam)


@dataclass(frozen=True)
class KdeModel:
    points: np.ndarray
    bandwidth: float

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1)
        if pts.size == 0:
            raise ValueError("KDE needs at least one point")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def fit(cls, points) -> "KdeModel":
        pts = np.asarray(points, dtype=np.float64)
        return cls(pts, centered_abs_moment(pts))


def centered_abs_moment(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(np.mean(np.abs(v - np.median(v))))


# -- normalization --------------------------------------------------------

def normalize(values) -> tuple[np.ndarray, NormalizationParams]:
    w = np.asarray(values, dtype=np.float64).reshape(-1)
    if w.size < 2:
        raise ValueError(f"need at least 2 values, got {w.size}")
    mu = float(np.median(w))
    delta = centered_abs_moment(w)
    if delta == 0.0:
        # constant sample: every z is 0 whatever the scale
        return np.zeros_like(w), NormalizationParams(mu, 1.0)
    return (w - mu) / delta, NormalizationParams(mu, delta)


def inverse_normalize(z, params: NormalizationParams):
    return params.mu + params.delta * np.asarray(z, dtype=np.float64)


# -- Yeo-Johnson ------------------------------------------------------------

def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 2.0:
        raise ValueError(f"lambda must lie in [0, 2], got {lam}")


# below this distance from 0 or 2 the power branch underflows (lam * log1p(z)
# can become subnormal); the log branch is then exact to within ~lam
_LAMBDA_EPS = float(np.spacing(1.0))


def yeo_johnson(z, lam: float):
    _check_lambda(lam)
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    lp = np.log1p(z[pos])
    out[pos] = lp if lam < _LAMBDA_EPS else np.expm1(lam * lp) / lam
    ln = np.log1p(-z[~pos])
    out[~pos] = -ln if 2.0 - lam < _LAMBDA_EPS else -np.expm1((2.0 - lam) * ln) / (2.0 - lam)
    return out if out.ndim else float(out)


def inverse_yeo_johnson(y, lam: float):
    _check_lambda(lam)
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    pos = y >= 0
    yp = y[pos]
    out[pos] = np.expm1(yp) if lam < _LAMBDA_EPS else np.expm1(np.log1p(lam * yp) / lam)
    yn = y[~pos]
    out[~pos] = -np.expm1(-yn) if 2.0 - lam < _LAMBDA_EPS else -np.expm1(np.log1p(-(2.0 - lam) * yn) / (2.0 - lam))
    return out if out.ndim else float(out)


def yeo_johnson_loglik(z, lam: float) -> float:
    """Gaussian profile log-likelihood of the transformed sample (up to a constant)."""
    z = np.asarray(z, dtype=np.float64)
    y = yeo_johnson(z, lam)
    var = np.var(y)
    if var <= 0.0:
        return -math.inf
    jac = (lam - 1.0) * np.sum(np.sign(z) * np.log1p(np.abs(z)))
    return -0.5 * z.size * math.log(var) + jac


def fit_lambda(z, grid_points: int = 21) -> TransformParams:
    """MLE of lambda on [0, 2]: coarse grid, then a bounded refinement around the best grid point."""
    z = np.asarray(z, dtype=np.float64)
    if z.size < 2:
        raise ValueError(f"need at least 2 values, got {z.size}")
    grid = np.linspace(0.0, 2.0, grid_points)
    ll = np.array([yeo_johnson_loglik(z, g) for g in grid])
    if not np.any(np.isfinite(ll)):
        return TransformParams(1.0)
    best = int(np.argmax(ll))
    lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, grid_points - 1)]
    res = minimize_scalar(lambda lam: -yeo_johnson_loglik(z, lam), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-10})
    lam = float(min(2.0, max(0.0, res.x)))
    if yeo_johnson_loglik(z, lam) < ll[best]:
        lam = float(grid[best])
    return TransformParams(lam)


# -- Laplace-kernel KDE -------------------------------------------------------

def _laplace_cdf(t):
    t = np.asarray(t, dtype=np.float64)
    e = 0.5 * np.exp(-np.abs(t))
    return np.where(t <= 0, e, 1.0 - e)


def _laplace_sf(t):
    t = np.asarray(t, dtype=np.float64)
    e = 0.5 * np.exp(-np.abs(t))
    return np.where(t > 0, e, 1.0 - e)


def kde_cdf(model: KdeModel, v: float) -> float:
    if v == -math.inf:
        return 0.0
    if v == math.inf:
        return 1.0
    return float(np.mean(_laplace_cdf((v - model.points) / model.bandwidth)))


def kde_sf(model: KdeModel, v: float) -> float:
    """``1 - kde_cdf`` without cancellation in the upper tail."""
    if v == -math.inf:
        return 1.0
    if v == math.inf:
        return 0.0
    return float(np.mean(_laplace_sf((v - model.points) / model.bandwidth)))


def _bisect(f, target: float, lo: float, hi: float, increasing: bool, tol: float = 1e-12) -> float:
    # expand until the bracket straddles the target
    step = max(hi - lo, 1.0)
    sign = 1.0 if increasing else -1.0
    while sign * (f(lo) - target) > 0:
        lo -= step
        step *= 2
    step = max(hi - lo, 1.0)
    while sign * (f(hi) - target) < 0:
        hi += step
        step *= 2
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if sign * (f(mid) - target) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kde_quantile_lower(model: KdeModel, p: float) -> float:
    """Numeric ``F^{-1}(p)`` by bisection on the CDF."""
    return _bisect(lambda v: kde_cdf(model, v), p, float(model.points.min()), float(model.points.max()), True)


def kde_quantile_upper(model: KdeModel, p: float) -> float:
    """Numeric ``F^{-1}(1 - p)`` by bisection on the survival function."""
    return _bisect(lambda v: kde_sf(model, v), p, float(model.points.min()), float(model.points.max()), False)


def closed_form_tails(model: KdeModel, alpha_prime: float) -> tuple[float, float]:
    """Tail quantiles assuming they fall outside the sample range."""
    y, h = model.points, model.bandwidth
    log_k = math.log(y.size)
    lower = -h * (logsumexp(-y / h) - log_k) - h * math.log(1.0 / alpha_prime)
    upper = h * (logsumexp(y / h) - log_k) + h * math.log(1.0 / alpha_prime)
    return float(lower), float(upper)


def confidence_interval(model: KdeModel, alpha_prime: float) -> Interval:
    """``[F^{-1}(a/2), F^{-1}(1 - a/2)]`` of the KDE."""
    if not 0.0 < alpha_prime < 1.0:
        raise ValueError(f"alpha' must lie in (0, 1), got {alpha_prime}")
    half = 0.5 * alpha_prime
    lower, upper = closed_form_tails(model, alpha_prime)
    # the closed form is exact only below min(y) / above max(y)
    if lower > model.points.min():
        lower = kde_quantile_lower(model, half)
    if upper < model.points.max():
        upper = kde_quantile_upper(model, half)
    return Interval(lower, upper)


# -- composition ------------------------------------------------------------

def constant_interval(c: float) -> Interval:
    eps = max(1e-12, 1e-9 * abs(c))
    return Interval(c - eps, c + eps)


def pred_int(values, alpha_prime: float) -> Interval:
    w = np.asarray(values, dtype=np.float64).reshape(-1)
    z, norm = normalize(w)
    if not np.any(z):
        return constant_interval(float(w[0]))
    lam = fit_lambda(z).lam
    y = yeo_johnson(z, lam)
    ci = confidence_interval(KdeModel.fit(y), alpha_prime)
    lo, hi = inverse_normalize(inverse_yeo_johnson(np.array([ci.lower, ci.upper]), lam), norm)
    # round-trip noise must not exclude the observed extremes
    return Interval(min(float(lo), float(w.min())), max(float(hi), float(w.max())))
