"""Spatial prediction for censored data.

Implements the conditional-mean (kriging) predictor plus the four
estimation-and-prediction pipelines: bound imputation (two variants), the
iterative re-imputation scheme for left-censored data, and prediction from
a stochastic-approximation fit.  Also hosts the empirical variogram, its
weighted least-squares fit, Gaussian maximum likelihood on fully observed
data, and a hold-out cross-validation driver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import least_squares, minimize
from scipy.spatial.distance import pdist

from .covariance import (
    CovarianceSpec,
    CovParams,
    build_sigma,
    corr_matrix,
    correlation,
    cross_distance,
    distance_matrix,
    spd_cholesky,
)
from .errors import (
    ConfigurationError,
    DataValidationError,
    NumericalError,
    UnsupportedMethodError,
)
from .model import (
    ModelParams,
    SpatialDataset,
    TrendSpec,
    build_trend,
    criteria,
    loglik,
    param_count,
    partition,
)

METHODS = ("naive1", "naive2", "seminaive", "saem")


@dataclass(frozen=True)
class PredictionResult:
    """Predicted means and standard deviations at target locations."""

    method: str
    coords_pred: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    params_used: ModelParams
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SeminaiveConfig:
    """Stopping constants and iteration cap for the re-imputation scheme."""

    c1: float = 0.1
    c2: float = 2.0
    c3: float = 0.5
    max_iter: int = 20

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) <= 0 or self.max_iter < 1:
            raise ConfigurationError("seminaive constants must be positive")


def krige(
    params: ModelParams,
    x_obs: np.ndarray,
    z_obs: np.ndarray,
    coords_obs: np.ndarray,
    x_pred: np.ndarray,
    coords_pred: np.ndarray,
    spec: CovarianceSpec,
    method: str = "krige",
) -> PredictionResult:
    """Gaussian conditional mean and sd at target locations.

    The joint covariance places the nugget on the diagonal only, so the
    cross block between data and targets is ``sigma2 * rho(h)`` even at
    coincident coordinates.
    """
    coords_obs = np.asarray(coords_obs, dtype=float)
    coords_pred = np.atleast_2d(np.asarray(coords_pred, dtype=float))
    x_obs = np.asarray(x_obs, dtype=float)
    x_pred = np.atleast_2d(np.asarray(x_pred, dtype=float))
    z_obs = np.asarray(z_obs, dtype=float)
    if x_pred.shape[1] != x_obs.shape[1]:
        raise DataValidationError("x_pred and x_obs column counts differ")
    if coords_pred.shape[0] != x_pred.shape[0]:
        raise DataValidationError("coords_pred and x_pred row counts differ")

    p = params.cov
    s_oo = build_sigma(distance_matrix(coords_obs), spec, p)
    cross = p.sigma2 * correlation(
        spec.family, spec.kappa, cross_distance(coords_pred, coords_obs), p.phi
    )
    s_pp = build_sigma(distance_matrix(coords_pred), spec, p)

    lo = spd_cholesky(s_oo, jitter=1e-10 * (p.sigma2 + p.tau2))
    resid = z_obs - x_obs @ params.beta
    w = solve_triangular(lo, cross.T, lower=True)  # L^{-1} Sigma_op
    mean = x_pred @ params.beta + w.T @ solve_triangular(lo, resid, lower=True)
    cov_p = s_pp - w.T @ w
    sd = np.sqrt(np.maximum(np.diag(cov_p), 0.0))
    return PredictionResult(
        method=method,
        coords_pred=coords_pred,
        mean=np.atleast_1d(mean),
        sd=sd,
        params_used=params,
    )


def mspe(observed, predicted) -> float:
    """Mean squared prediction error."""
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if observed.shape != predicted.shape or observed.size == 0:
        raise DataValidationError("observed and predicted must match and be nonempty")
    return float(np.mean((observed - predicted) ** 2))


def sample_skewness(x) -> float:
    """Biased moment skewness ``m3 / m2^{3/2}``."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 == 0:
        return 0.0
    return float(np.mean(d**3) / m2**1.5)


# ---------------------------------------------------------------------------
# Empirical variogram and weighted least-squares fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Variogram:
    """Binned classical (Matheron) semivariance estimates."""

    centers: np.ndarray
    gamma: np.ndarray
    counts: np.ndarray
    max_dist: float


def empirical_variogram(
    coords, z, n_bins: int = 13, max_dist: Optional[float] = None
) -> Variogram:
    """Classical semivariogram over equal-width distance bins.

    ``gamma_b = sum_{pairs in bin} (z_i - z_j)^2 / (2 N_b)``; empty bins are
    dropped.  ``max_dist`` defaults to half the largest pairwise distance.
    """
    coords = np.asarray(coords, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape[0] < 2:
        raise DataValidationError("variogram needs at least two sites")
    d = pdist(coords)
    if max_dist is None:
        max_dist = 0.5 * float(d.max())
    dz2 = pdist(z[:, None], metric="sqeuclidean")
    keep = d <= max_dist
    d, dz2 = d[keep], dz2[keep]
    edges = np.linspace(0.0, max_dist, n_bins + 1)
    which = np.clip(np.digitize(d, edges) - 1, 0, n_bins - 1)
    counts = np.bincount(which, minlength=n_bins)
    sums = np.bincount(which, weights=dz2, minlength=n_bins)
    nonempty = counts > 0
    centers = 0.5 * (edges[:-1] + edges[1:])
    gamma = np.zeros(n_bins)
    gamma[nonempty] = sums[nonempty] / (2.0 * counts[nonempty])
    return Variogram(
        centers=centers[nonempty],
        gamma=gamma[nonempty],
        counts=counts[nonempty],
        max_dist=float(max_dist),
    )


def wls_variofit(
    vario: Variogram, spec: CovarianceSpec, init: Optional[CovParams] = None
) -> CovParams:
    """Fit ``(sigma2, phi, tau2)`` to a binned variogram, weighting squared
    residuals by bin pair counts.  Initializer-grade accuracy only."""
    if vario.centers.shape[0] < 3:
        raise NumericalError("variogram fit needs at least 3 nonempty bins")
    g = vario.gamma
    if init is None:
        sill = max(float(g.max()), 1e-12)
        init = CovParams(
            sigma2=0.8 * sill, phi=vario.max_dist / 3.0, tau2=0.2 * sill
        )
    w = np.sqrt(vario.counts.astype(float))

    def residuals(theta):
        s2, phi, t2 = theta
        model = t2 + s2 * (
            1.0 - correlation(spec.family, spec.kappa, vario.centers, max(phi, 1e-12))
        )
        return w * (model - g)

    x0 = np.array([init.sigma2, init.phi, init.tau2])
    sol = least_squares(
        residuals,
        x0,
        bounds=(np.array([1e-12, 1e-12, 0.0]), np.array([np.inf, np.inf, np.inf])),
        method="trf",
    )
    if not np.all(np.isfinite(sol.x)):
        raise NumericalError("variogram fit diverged")
    s2, phi, t2 = sol.x
    return CovParams(sigma2=max(s2, 1e-12), phi=max(phi, 1e-12), tau2=max(t2, 0.0))


def initial_values(
    data: SpatialDataset, trend: TrendSpec, spec: CovarianceSpec
) -> ModelParams:
    """Automatic starting values: ordinary least squares on bound-imputed
    data plus a weighted variogram fit of the residuals."""
    y = _impute_bounds(data, "naive1")
    x = build_trend(data.coords, data.x_extra, trend)
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ beta
    try:
        cov = wls_variofit(empirical_variogram(data.coords, resid), spec)
    except NumericalError:
        var = max(float(np.var(resid)), 1e-8)
        dmax = float(distance_matrix(data.coords).max())
        cov = CovParams(sigma2=0.8 * var, phi=dmax / 3.0, tau2=0.2 * var)
    if spec.nugget_fixed:
        cov = CovParams(sigma2=cov.sigma2, phi=cov.phi, tau2=spec.fixed_nugget_value)
    return ModelParams(beta=beta, cov=cov)


# ---------------------------------------------------------------------------
# Gaussian maximum likelihood on fully observed (or imputed) data
# ---------------------------------------------------------------------------


def default_search_box(dist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale-aware optimization box for ``(phi, nu2)``."""
    dmax = float(np.max(dist))
    return np.array([1e-4 * dmax, 0.0]), np.array([10.0 * dmax, 1e3])


def gaussian_ml_fit(
    y: np.ndarray,
    x: np.ndarray,
    dist: np.ndarray,
    spec: CovarianceSpec,
    init: CovParams,
    bounds: Optional[tuple] = None,
) -> tuple[ModelParams, float]:
    """Maximize the exact Gaussian log-likelihood over the covariance
    parameters, profiling the trend coefficients (and the sill when it is
    free).  Returns the fitted parameters and the attained log-likelihood.

    The numeric search runs over ``(phi, nu2)`` within ``bounds`` (a pair of
    length-2 arrays).  With a fixed zero nugget the search is over ``phi``
    alone.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n = y.shape[0]
    if bounds is None:
        lo_b, hi_b = default_search_box(dist)
    else:
        lo_b, hi_b = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
    fixed_tau = spec.fixed_nugget_value if spec.nugget_fixed else None

    def profile_nll(phi: float, nu2: float):
        psi = corr_matrix(dist, spec, phi)
        psi[np.diag_indices_from(psi)] += nu2
        lo = spd_cholesky(psi)
        xw = solve_triangular(lo, x, lower=True)
        yw = solve_triangular(lo, y, lower=True)
        beta, *_ = np.linalg.lstsq(xw, yw, rcond=None)
        rw = yw - xw @ beta
        rss = float(rw @ rw)
        logdet = 2.0 * float(np.sum(np.log(np.diag(lo))))
        if fixed_tau is not None and nu2 > 0:
            # sill is pinned by tau2 = nu2 * sigma2
            sigma2 = fixed_tau / nu2
            nll = 0.5 * (
                n * np.log(2 * np.pi) + n * np.log(sigma2) + logdet + rss / sigma2
            )
        else:
            sigma2 = rss / n
            nll = 0.5 * (
                n * np.log(2 * np.pi) + n * np.log(max(sigma2, 1e-300)) + logdet + n
            )
        return nll, beta, sigma2

    if fixed_tau is not None and fixed_tau == 0.0:
        x0 = np.array([np.clip(init.phi, lo_b[0], hi_b[0])])
        obj = lambda t: profile_nll(t[0], 0.0)[0]
        box = [(lo_b[0], hi_b[0])]
    elif fixed_tau is not None:
        nu0 = np.clip(fixed_tau / init.sigma2, max(lo_b[1], 1e-10), hi_b[1])
        x0 = np.array([np.clip(init.phi, lo_b[0], hi_b[0]), nu0])
        obj = lambda t: profile_nll(t[0], t[1])[0]
        box = [(lo_b[0], hi_b[0]), (max(lo_b[1], 1e-10), hi_b[1])]
    else:
        x0 = np.array(
            [np.clip(init.phi, lo_b[0], hi_b[0]), np.clip(init.nu2, lo_b[1], hi_b[1])]
        )
        obj = lambda t: profile_nll(t[0], t[1])[0]
        box = [(lo_b[0], hi_b[0]), (lo_b[1], hi_b[1])]

    sol = minimize(
        obj,
        x0,
        method="Nelder-Mead",
        bounds=box,
        options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 2000},
    )
    if not np.isfinite(sol.fun):
        raise NumericalError("gaussian likelihood optimization diverged")
    phi = float(sol.x[0])
    nu2 = float(sol.x[1]) if sol.x.shape[0] > 1 else 0.0
    nll, beta, sigma2 = profile_nll(phi, nu2)
    tau2 = fixed_tau if fixed_tau is not None else nu2 * sigma2
    params = ModelParams(
        beta=beta, cov=CovParams(sigma2=float(sigma2), phi=phi, tau2=float(tau2))
    )
    return params, -float(nll)


# ---------------------------------------------------------------------------
# Prediction pipelines
# ---------------------------------------------------------------------------


def _impute_bounds(data: SpatialDataset, variant: str) -> np.ndarray:
    """Replace censored readings with their detection bound (or half of it
    for the second variant under left censoring)."""
    if data.cens_type == "interval":
        raise UnsupportedMethodError("bound imputation requires one-sided censoring")
    y = data.value.astype(float).copy()
    idx = np.flatnonzero(data.cens == 1)
    if idx.size == 0:
        return y
    if data.cens_type == "left":
        bound = data.upper[idx]
        y[idx] = bound / 2.0 if variant == "naive2" else bound
    else:
        # halving a right-censoring bound has no meaning; both variants
        # impute the bound itself
        y[idx] = data.lower[idx]
    return y


def predict_naive(
    data: SpatialDataset,
    trend: TrendSpec,
    spec: CovarianceSpec,
    variant: str,
    coords_pred,
    x_extra_pred=None,
    init: Optional[CovParams] = None,
    bounds: Optional[tuple] = None,
) -> PredictionResult:
    """Impute censored readings at the bound (variant ``naive1``) or half
    the bound (``naive2``), fit by Gaussian maximum likelihood, krige."""
    if variant not in ("naive1", "naive2"):
        raise ConfigurationError("variant must be 'naive1' or 'naive2'")
    y = _impute_bounds(data, variant)
    x = build_trend(data.coords, data.x_extra, trend)
    dist = distance_matrix(data.coords)
    if init is None:
        init = initial_values(data, trend, spec).cov
    params, gauss_ll = gaussian_ml_fit(y, x, dist, spec, init, bounds)
    x_pred = build_trend(np.atleast_2d(coords_pred), x_extra_pred, trend)
    result = krige(params, x, y, data.coords, x_pred, coords_pred, spec, method=variant)
    result.extra["gaussian_loglik"] = gauss_ll
    result.extra["imputed"] = y
    return result


def predict_seminaive(
    data: SpatialDataset,
    trend: TrendSpec,
    spec: CovarianceSpec,
    coords_pred,
    x_extra_pred=None,
    cfg: SeminaiveConfig = SeminaiveConfig(),
    init: Optional[CovParams] = None,
    bounds: Optional[tuple] = None,
) -> PredictionResult:
    """Iterative re-imputation predictor for left-censored data.

    Censored entries start at zero, are re-imputed each pass by
    leave-one-out kriging clamped into ``[0, bound]``, and the covariance
    is refitted after every pass.  Stops when, between passes, the fitted
    sill changes by at most ``c1`` relatively, stays below ``c2`` times the
    uncensored-data sill, and the imputed-data skewness exceeds ``c3``
    times the uncensored-data skewness; or at ``max_iter``.
    """
    if data.cens_type != "left":
        raise UnsupportedMethodError("seminaive supports left censoring only")
    x = build_trend(data.coords, data.x_extra, trend)
    dist = distance_matrix(data.coords)
    if init is None:
        init = initial_values(data, trend, spec).cov
    cens_idx = np.flatnonzero(data.cens == 1)
    obs_idx = np.flatnonzero(data.cens == 0)

    y = data.value.astype(float).copy()
    y[cens_idx] = 0.0
    params, gauss_ll = gaussian_ml_fit(y, x, dist, spec, init, bounds)
    iterations = 0
    converged = cens_idx.size == 0

    if cens_idx.size:
        obs_fit, _ = gaussian_ml_fit(
            data.value[obs_idx], x[obs_idx], dist[np.ix_(obs_idx, obs_idx)],
            spec, init, bounds,
        )
        sigma2_obs = obs_fit.cov.sigma2
        skew_obs = sample_skewness(data.value[obs_idx])
        bound = data.upper[cens_idx]

        for iterations in range(1, cfg.max_iter + 1):
            new_vals = np.empty(cens_idx.size)
            for j, i in enumerate(cens_idx):
                keep = np.arange(data.n) != i
                pred = krige(
                    params,
                    x[keep],
                    y[keep],
                    data.coords[keep],
                    x[i : i + 1],
                    data.coords[i : i + 1],
                    spec,
                )
                new_vals[j] = max(0.0, min(float(pred.mean[0]), bound[j]))
            y_new = y.copy()
            y_new[cens_idx] = new_vals
            new_params, gauss_ll = gaussian_ml_fit(y_new, x, dist, spec, params.cov, bounds)
            rel_change = abs(new_params.cov.sigma2 - params.cov.sigma2) / params.cov.sigma2
            y = y_new
            params = new_params
            if (
                rel_change <= cfg.c1
                and new_params.cov.sigma2 <= cfg.c2 * sigma2_obs
                and sample_skewness(y) > cfg.c3 * skew_obs
            ):
                converged = True
                break

    x_pred = build_trend(np.atleast_2d(coords_pred), x_extra_pred, trend)
    result = krige(
        params, x, y, data.coords, x_pred, coords_pred, spec, method="seminaive"
    )
    result.extra["gaussian_loglik"] = gauss_ll
    result.extra["imputed"] = y
    result.extra["iterations"] = iterations
    result.extra["converged"] = converged
    return result


def predict_saem(fit, x_pred, coords_pred) -> PredictionResult:
    """Krige with a completed fit's estimates, imputing censored readings
    by their fitted conditional means."""
    x_pred = np.atleast_2d(np.asarray(x_pred, dtype=float))
    if x_pred.shape[1] != fit.x.shape[1]:
        raise DataValidationError("x_pred column count does not match the fit")
    return krige(
        fit.params,
        fit.x,
        fit.zhat,
        fit.data.coords,
        x_pred,
        coords_pred,
        fit.spec,
        method="saem",
    )


# ---------------------------------------------------------------------------
# Hold-out comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodReport:
    """One comparison row: estimates, censored-data criteria, hold-out error."""

    method: str
    params: ModelParams
    loglik: float
    aic: float
    bic: float
    rmspe: float


def cross_validate(
    data: SpatialDataset,
    trend: TrendSpec,
    spec: CovarianceSpec,
    n_est: int,
    methods: Sequence[str],
    saem_config=None,
    seminaive_config: SeminaiveConfig = SeminaiveConfig(),
    init: Optional[CovParams] = None,
    bounds: Optional[tuple] = None,
    eval_seed: int = 20_25,
) -> list[MethodReport]:
    """Fit on the first ``n_est`` rows, predict the remaining rows, and
    report parameters, censored-data criteria, and root MSPE per method.

    Hold-out rows must be uncensored (their readings are the comparison
    truth).  The reported log-likelihood is the censored-data likelihood
    of the estimation block evaluated at each method's estimates.
    """
    if not 1 <= n_est < data.n:
        raise DataValidationError("n_est must leave at least one hold-out row")
    est = SpatialDataset(
        coords=data.coords[:n_est],
        value=data.value[:n_est],
        cens=data.cens[:n_est],
        lower=data.lower[:n_est],
        upper=data.upper[:n_est],
        x_extra=None if data.x_extra is None else data.x_extra[:n_est],
        cens_type=data.cens_type,
    )
    hold_cens = data.cens[n_est:]
    if np.any(hold_cens == 1):
        raise DataValidationError("hold-out rows must be uncensored")
    coords_pred = data.coords[n_est:]
    x_extra_pred = None if data.x_extra is None else data.x_extra[n_est:]
    truth = data.value[n_est:]

    p = build_trend(est.coords, est.x_extra, trend).shape[1]
    k = param_count(p, spec.nugget_fixed)
    reports = []
    for method in methods:
        if method not in METHODS:
            raise ConfigurationError(f"unknown method {method!r}")
        if method in ("naive1", "naive2"):
            res = predict_naive(
                est, trend, spec, method, coords_pred, x_extra_pred, init, bounds
            )
        elif method == "seminaive":
            res = predict_seminaive(
                est, trend, spec, coords_pred, x_extra_pred,
                seminaive_config, init, bounds,
            )
        else:
            from .saem import saem_fit

            if saem_config is None:
                raise ConfigurationError("saem method requires a saem_config")
            fit = saem_fit(est, trend, spec, saem_config)
            x_pred = build_trend(coords_pred, x_extra_pred, trend)
            res = predict_saem(fit, x_pred, coords_pred)
        ll = loglik(res.params_used, est, trend, spec, rng=eval_seed)
        crit = criteria(ll.value, k, est.n)
        reports.append(
            MethodReport(
                method=method,
                params=res.params_used,
                loglik=ll.value,
                aic=crit.aic,
                bic=crit.bic,
                rmspe=float(np.sqrt(mspe(truth, res.mean))),
            )
        )
    return reports
