"""Spatial censored linear model: data container, trend, and likelihood.

The response is a Gaussian random field with linear trend ``X beta`` and
covariance ``tau2 I + sigma2 R(phi)``.  Each site is either observed
exactly or known only to lie in an interval; the likelihood factors into
the exact density of the observed block times the conditional rectangle
probability of the censored block.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .covariance import (
    CovarianceSpec,
    CovParams,
    build_sigma,
    distance_matrix,
    spd_cholesky,
)
from .errors import DataValidationError, ModelSpecificationError
from .mvn import Rectangle, RectProb, mvn_logpdf, mvn_rect_prob

CENS_TYPES = ("left", "right", "interval")


@dataclass(frozen=True)
class TrendSpec:
    """Mean-structure choice.

    ``cte`` is an intercept only, ``first`` adds the two coordinates as
    regressors, ``other`` uses an intercept plus the dataset's extra
    covariates.
    """

    kind: str = "cte"

    def __post_init__(self):
        if self.kind not in ("cte", "first", "other"):
            raise ModelSpecificationError(f"unknown trend kind {self.kind!r}")


@dataclass(frozen=True)
class ModelParams:
    """Full parameter vector: trend coefficients plus covariance parameters."""

    beta: np.ndarray
    cov: CovParams

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, float)))

    def as_array(self) -> np.ndarray:
        """Stacked ``(beta..., sigma2, phi, tau2)`` vector."""
        return np.concatenate([self.beta, self.cov.as_array()])


@dataclass(frozen=True)
class SpatialDataset:
    """Censored spatial observations.

    ``value`` holds the recorded reading for every site: the response when
    ``cens == 0``, the reported detection bound otherwise.  ``lower`` and
    ``upper`` carry the censoring interval for ``cens == 1`` rows (``-inf``
    lower bound for left censoring, ``+inf`` upper bound for right
    censoring); they are ignored for observed rows.
    """

    coords: np.ndarray
    value: np.ndarray
    cens: np.ndarray
    lower: np.ndarray = field(default=None)
    upper: np.ndarray = field(default=None)
    x_extra: Optional[np.ndarray] = None
    cens_type: str = "left"

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        value = np.asarray(self.value, dtype=float)
        cens = np.asarray(self.cens, dtype=int)
        n = value.shape[0]
        if coords.ndim != 2 or coords.shape != (n, 2):
            raise DataValidationError("coords must be an (n, 2) array")
        if not np.isin(cens, (0, 1)).all():
            raise DataValidationError("cens must contain only 0 and 1")
        if self.cens_type not in CENS_TYPES:
            raise DataValidationError(f"unknown cens_type {self.cens_type!r}")
        lower = self.lower
        upper = self.upper
        if lower is None:
            lower = np.full(n, -np.inf)
        if upper is None:
            upper = np.full(n, np.inf)
        lower = np.asarray(lower, dtype=float).copy()
        upper = np.asarray(upper, dtype=float).copy()
        if lower.shape != (n,) or upper.shape != (n,):
            raise DataValidationError("lower/upper must be length-n vectors")
        lower[cens == 0] = -np.inf
        upper[cens == 0] = np.inf
        is_c = cens == 1
        if not np.isfinite(value[~is_c]).all():
            raise DataValidationError("observed rows require finite values")
        if np.any(lower[is_c] >= upper[is_c]):
            raise DataValidationError("censored rows require lower < upper")
        if self.cens_type == "left" and not np.all(np.isneginf(lower[is_c])):
            raise DataValidationError("left censoring requires lower = -inf")
        if self.cens_type == "right" and not np.all(np.isposinf(upper[is_c])):
            raise DataValidationError("right censoring requires upper = +inf")
        if self.x_extra is not None:
            x_extra = np.asarray(self.x_extra, dtype=float)
            if x_extra.ndim == 1:
                x_extra = x_extra[:, None]
            if x_extra.shape[0] != n:
                raise DataValidationError("x_extra row count must match n")
            object.__setattr__(self, "x_extra", x_extra)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "cens", cens)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n(self) -> int:
        return self.value.shape[0]

    @property
    def n_censored(self) -> int:
        return int(self.cens.sum())

    @classmethod
    def from_censored(
        cls,
        coords,
        values,
        cens,
        cens_type: str = "left",
        limits=None,
        x_extra=None,
    ) -> "SpatialDataset":
        """Build a dataset from a censoring indicator and detection limits.

        ``limits`` is the per-row (or scalar) detection bound for censored
        rows; it defaults to the recorded ``values`` there.
        """
        values = np.asarray(values, dtype=float)
        cens = np.asarray(cens, dtype=int)
        n = values.shape[0]
        if limits is None:
            bound = values.copy()
        else:
            bound = np.broadcast_to(np.asarray(limits, dtype=float), (n,)).copy()
        lower = np.full(n, -np.inf)
        upper = np.full(n, np.inf)
        is_c = cens == 1
        if cens_type == "left":
            upper[is_c] = bound[is_c]
        elif cens_type == "right":
            lower[is_c] = bound[is_c]
        else:
            raise DataValidationError(
                "from_censored supports left/right; build interval data directly"
            )
        value = values.copy()
        value[is_c] = bound[is_c]
        return cls(
            coords=coords,
            value=value,
            cens=cens,
            lower=lower,
            upper=upper,
            x_extra=x_extra,
            cens_type=cens_type,
        )

    def fingerprint(self) -> str:
        """Stable SHA-256 of the numeric content, for provenance stamps."""
        import hashlib

        h = hashlib.sha256()
        for arr in (self.coords, self.value, self.cens, self.lower, self.upper):
            h.update(np.ascontiguousarray(arr).tobytes())
        if self.x_extra is not None:
            h.update(np.ascontiguousarray(self.x_extra).tobytes())
        h.update(self.cens_type.encode())
        return h.hexdigest()


@dataclass(frozen=True)
class Partition:
    """Observed/censored index sets and the reordered-to-original map."""

    obs_idx: np.ndarray
    cens_idx: np.ndarray

    @property
    def order(self) -> np.ndarray:
        return np.concatenate([self.obs_idx, self.cens_idx])


def build_trend(coords, x_extra, trend: TrendSpec) -> np.ndarray:
    """Trend matrix: ones / ones+coords / ones+covariates, full rank checked."""
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    if trend.kind == "cte":
        x = np.ones((n, 1))
    elif trend.kind == "first":
        x = np.column_stack([np.ones(n), coords])
    else:
        if x_extra is None:
            raise ModelSpecificationError("trend 'other' requires extra covariates")
        x_extra = np.asarray(x_extra, dtype=float)
        if x_extra.ndim == 1:
            x_extra = x_extra[:, None]
        x = np.column_stack([np.ones(n), x_extra])
    if np.linalg.matrix_rank(x) < min(x.shape):
        raise ModelSpecificationError("trend matrix is rank deficient")
    return x


def partition(data: SpatialDataset) -> Partition:
    """Indices of observed (``cens == 0``) and censored rows, original order."""
    cens = data.cens
    return Partition(
        obs_idx=np.flatnonzero(cens == 0), cens_idx=np.flatnonzero(cens == 1)
    )


def conditional_given_obs(sigma, x, beta, values, obs_idx, cens_idx):
    """Conditional mean and covariance of the censored block given the
    observed block, from precomputed ``Sigma`` and trend matrix.

    With no observed rows this degenerates to the unconditional
    ``(X_c beta, Sigma_cc)``.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    mu_all = x @ beta
    if obs_idx.size == 0:
        return mu_all[cens_idx], sigma[np.ix_(cens_idx, cens_idx)]
    s_oo = sigma[np.ix_(obs_idx, obs_idx)]
    s_co = sigma[np.ix_(cens_idx, obs_idx)]
    s_cc = sigma[np.ix_(cens_idx, cens_idx)]
    lo = spd_cholesky(s_oo)
    resid = values[obs_idx] - mu_all[obs_idx]
    # kriging weights K = S_co S_oo^{-1} via two triangular solves
    w = solve_triangular(lo, s_co.T, lower=True)
    mu = mu_all[cens_idx] + w.T @ solve_triangular(lo, resid, lower=True)
    cond = s_cc - w.T @ w
    cond = 0.5 * (cond + cond.T)
    return mu, cond


def conditional_cens_given_obs(
    params: ModelParams, data: SpatialDataset, trend: TrendSpec, spec: CovarianceSpec
):
    """Conditional law of the censored block given the observed block."""
    x = build_trend(data.coords, data.x_extra, trend)
    sigma = build_sigma(distance_matrix(data.coords), spec, params.cov)
    part = partition(data)
    return conditional_given_obs(
        sigma, x, params.beta, data.value, part.obs_idx, part.cens_idx
    )


@dataclass(frozen=True)
class LogLik:
    """Observed-data log-likelihood with the Monte Carlo error of the
    censored factor (zero when nothing is censored)."""

    value: float
    cens_prob: float = 1.0
    cens_prob_se: float = 0.0
    n_points: int = 0
    zero_prob: bool = False

    @property
    def se(self) -> float:
        """Standard error of ``value`` (delta method on the log factor)."""
        if self.cens_prob <= 0:
            return np.inf
        return self.cens_prob_se / self.cens_prob

    def __float__(self) -> float:
        return self.value


def loglik(
    params: ModelParams,
    data: SpatialDataset,
    trend: TrendSpec,
    spec: CovarianceSpec,
    rng=None,
    eps: float = 1e-4,
    max_points: int = 100_000,
) -> LogLik:
    """Observed-data log-likelihood of the censored spatial model.

    Exact Gaussian density on the observed block plus the log rectangle
    probability of the censored block under its conditional law.  A
    rectangle estimate of zero yields ``-inf`` with ``zero_prob`` set.
    """
    x = build_trend(data.coords, data.x_extra, trend)
    sigma = build_sigma(distance_matrix(data.coords), spec, params.cov)
    part = partition(data)
    obs, cen = part.obs_idx, part.cens_idx
    mu_all = x @ params.beta

    obs_term = 0.0
    if obs.size:
        obs_term = mvn_logpdf(
            data.value[obs], mu_all[obs], sigma[np.ix_(obs, obs)]
        )
    if cen.size == 0:
        return LogLik(value=obs_term)

    mu, cond = conditional_given_obs(sigma, x, params.beta, data.value, obs, cen)
    rect = Rectangle(lower=data.lower[cen], upper=data.upper[cen])
    rp: RectProb = mvn_rect_prob(mu, cond, rect, rng=rng, eps=eps, max_points=max_points)
    if rp.prob <= 0.0:
        return LogLik(
            value=-np.inf,
            cens_prob=rp.prob,
            cens_prob_se=rp.se,
            n_points=rp.n_points,
            zero_prob=True,
        )
    return LogLik(
        value=obs_term + float(np.log(rp.prob)),
        cens_prob=rp.prob,
        cens_prob_se=rp.se,
        n_points=rp.n_points,
    )


@dataclass(frozen=True)
class Criteria:
    """Information criteria; ``aicc`` is None when ``n <= k + 1``."""

    aic: float
    bic: float
    aicc: Optional[float]


def param_count(p: int, nugget_fixed: bool) -> int:
    """Free-parameter count: trend coefficients plus 3 covariance
    parameters, or 2 when the nugget is held fixed."""
    return p + (2 if nugget_fixed else 3)


def criteria(loglik_value: float, n_params: int, n: int) -> Criteria:
    """AIC / BIC / small-sample-corrected AIC for a fitted model."""
    ll = float(loglik_value)
    k = n_params
    aic = -2.0 * ll + 2.0 * k
    bic = -2.0 * ll + k * np.log(n)
    aicc = aic + 2.0 * k * (k + 1.0) / (n - k - 1.0) if n > k + 1 else None
    return Criteria(aic=aic, bic=bic, aicc=aicc)
