"""Stochastic-approximation EM estimation for the censored spatial model.

Each iteration draws a small Gibbs sample of the censored block from its
conditional truncated normal law, folds it into running estimates of the
conditional first and second moments with a decreasing step size, and then
performs the conditional maximization: closed forms for the trend
coefficients and the sill, a box-constrained numeric search for the range
and relative nugget.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .covariance import (
    CovarianceSpec,
    CovParams,
    build_sigma,
    corr_matrix,
    distance_matrix,
    spd_cholesky,
)
from .errors import ConfigurationError, DataValidationError, NumericalError
from .model import (
    Criteria,
    LogLik,
    ModelParams,
    SpatialDataset,
    TrendSpec,
    build_trend,
    conditional_given_obs,
    criteria,
    loglik,
    param_count,
    partition,
)
from .mvn import Rectangle, RngState, tmvn_gibbs


@dataclass(frozen=True)
class SaemConfig:
    """Settings of the stochastic EM loop.

    ``m`` is the Monte Carlo sample size per iteration (values above 20
    trigger a warning: the stochastic approximation is designed for small
    samples), ``max_iter`` the iteration cap, and ``pc`` the cut point:
    the first ``ceil(pc * max_iter)`` iterations run memoryless (step size
    one) before the decaying-step averaging phase begins.

    ``lower`` and ``upper`` bound the inner search over ``(phi, nu2)``
    (``phi`` alone when the nugget is fixed).  ``init_sigma2``,
    ``init_phi`` and ``init_nugget`` seed the parameters; leave them None
    to use the automatic variogram-based initializer.
    """

    m: int = 15
    max_iter: int = 300
    pc: float = 0.2
    perc: float = 0.25
    init_sigma2: Optional[float] = None
    init_phi: Optional[float] = None
    init_nugget: Optional[float] = None
    lower: tuple = (1e-4, 1e-4)
    upper: tuple = (1e4, 1e4)
    tol: float = 1e-4
    seed: int = 0
    gibbs_burn_in: int = 20
    monitor_eps: float = 1e-3
    final_eps: float = 1e-4
    rect_max_points: int = 100_000

    def __post_init__(self):
        if self.m < 1 or self.max_iter < 1:
            raise ConfigurationError("m and max_iter must be positive")
        if not 0.0 <= self.pc < 1.0:
            raise ConfigurationError("pc must lie in [0, 1)")
        if self.tol < 0:
            raise ConfigurationError("tol must be >= 0")
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or np.any(lower >= upper):
            raise ConfigurationError("need lower < upper componentwise")
        object.__setattr__(self, "lower", tuple(lower))
        object.__setattr__(self, "upper", tuple(upper))
        if self.m > 20:
            warnings.warn(
                "Monte Carlo sample per iteration above 20; the stochastic "
                "approximation is tuned for small samples",
                stacklevel=2,
            )


@dataclass
class SaemState:
    """Mutable loop state: moment estimates and the persistent Gibbs chain."""

    zhat: np.ndarray
    zzhat: np.ndarray
    chain: Optional[np.ndarray] = None
    iteration: int = 0


@dataclass(frozen=True)
class SaemFit:
    """Completed fit: estimates, conditional moments, criteria, and trace."""

    params: ModelParams
    zhat: np.ndarray
    zzhat: np.ndarray
    loglik: LogLik
    criteria: Criteria
    trace_params: np.ndarray
    trace_loglik: np.ndarray
    converged: bool
    iterations_used: int
    config: SaemConfig
    data: SpatialDataset
    trend: TrendSpec
    spec: CovarianceSpec
    x: np.ndarray = field(repr=False, default=None)
    dist: np.ndarray = field(repr=False, default=None)
    fingerprint: str = ""

    def trace_summary(self) -> np.ndarray:
        """Mean of the parameter trace after discarding the first ``perc``
        share of iterations (a smoothed point estimate of the noisy path)."""
        start = int(self.config.perc * self.iterations_used)
        return self.trace_params[start:].mean(axis=0)

    @property
    def aic(self) -> float:
        return self.criteria.aic

    @property
    def bic(self) -> float:
        return self.criteria.bic

    @property
    def aicc(self) -> Optional[float]:
        return self.criteria.aicc


def delta_schedule(k: int, max_iter: int, pc: float) -> float:
    """Step size: 1 through the cut point, then ``1 / (k - cut)``."""
    if not 1 <= k <= max_iter:
        raise ConfigurationError("iteration index out of range")
    cut = math.ceil(pc * max_iter)
    return 1.0 if k <= cut else 1.0 / (k - cut)


def _initial_params(
    data: SpatialDataset, trend: TrendSpec, spec: CovarianceSpec, config: SaemConfig,
    x: np.ndarray, dist: np.ndarray, y_imputed: np.ndarray,
) -> ModelParams:
    if config.init_sigma2 is None or config.init_phi is None:
        from .predict import initial_values

        auto = initial_values(data, trend, spec)
        cov = auto.cov
    else:
        tau2 = (
            spec.fixed_nugget_value
            if spec.nugget_fixed
            else (config.init_nugget if config.init_nugget is not None else 0.0)
        )
        cov = CovParams(
            sigma2=float(config.init_sigma2), phi=float(config.init_phi), tau2=float(tau2)
        )
    sigma = build_sigma(dist, spec, cov)
    lo = spd_cholesky(sigma, jitter=1e-10 * (cov.sigma2 + cov.tau2))
    xw = solve_triangular(lo, x, lower=True)
    yw = solve_triangular(lo, y_imputed, lower=True)
    beta, *_ = np.linalg.lstsq(xw, yw, rcond=None)
    return ModelParams(beta=beta, cov=cov)


def _imputed_start(data: SpatialDataset) -> np.ndarray:
    """Initial completion of the response: observed values, censored rows
    at their nearest finite bound (interval midpoint when both finite)."""
    y = data.value.astype(float).copy()
    cen = np.flatnonzero(data.cens == 1)
    for i in cen:
        lo, hi = data.lower[i], data.upper[i]
        if np.isfinite(lo) and np.isfinite(hi):
            y[i] = 0.5 * (lo + hi)
        elif np.isfinite(hi):
            y[i] = hi
        else:
            y[i] = lo
    return y


def e_step(
    state: SaemState,
    data: SpatialDataset,
    params: ModelParams,
    trend: TrendSpec,
    spec: CovarianceSpec,
    config: SaemConfig,
    rng,
):
    """One sampling + stochastic-approximation update of the moments.

    Advances ``state.iteration``, draws ``config.m`` Gibbs samples of the
    censored block (warm-started from the previous call's chain), and mixes
    their Monte Carlo moments into ``state`` with the scheduled step size.
    Observed coordinates stay pinned to the recorded values.
    """
    x = build_trend(data.coords, data.x_extra, trend)
    sigma = build_sigma(distance_matrix(data.coords), spec, params.cov)
    return _e_step_core(state, data, params, sigma, x, config, rng)


def _e_step_core(state, data, params, sigma, x, config, rng):
    state.iteration += 1
    delta = delta_schedule(state.iteration, config.max_iter, config.pc)
    part = partition(data)
    obs, cen = part.obs_idx, part.cens_idx
    value = data.value

    if cen.size == 0:
        state.zhat = value.copy()
        state.zzhat = np.outer(value, value)
        return state.zhat, state.zzhat

    mu, cond = conditional_given_obs(sigma, x, params.beta, value, obs, cen)
    rect = Rectangle(lower=data.lower[cen], upper=data.upper[cen])
    samples_c = tmvn_gibbs(
        mu,
        cond,
        rect,
        n_samples=config.m,
        burn_in=config.gibbs_burn_in,
        thin=1,
        rng=rng,
        start=state.chain,
    )
    state.chain = samples_c[-1].copy()

    z = np.tile(value, (config.m, 1))
    z[:, cen] = samples_c
    mc1 = z.mean(axis=0)
    mc2 = z.T @ z / config.m

    state.zhat = state.zhat + delta * (mc1 - state.zhat)
    state.zzhat = state.zzhat + delta * (mc2 - state.zzhat)
    # keep observed coordinates exact against drift
    state.zhat[obs] = value[obs]
    state.zzhat[np.ix_(obs, obs)] = np.outer(value[obs], value[obs])
    state.zzhat = 0.5 * (state.zzhat + state.zzhat.T)
    return state.zhat, state.zzhat


def cm_step(
    zhat: np.ndarray,
    zzhat: np.ndarray,
    x: np.ndarray,
    dist: np.ndarray,
    spec: CovarianceSpec,
    config: SaemConfig,
    prev: ModelParams,
) -> ModelParams:
    """Conditional maximization given the current moment estimates.

    The trend coefficients are generalized least squares under the previous
    covariance; the sill is its closed-form update; the range and relative
    nugget come from a box-constrained simplex search started at the
    previous iterate.  With a fixed nugget only the range is searched and
    ``nu2`` tracks ``fixed_nugget / sigma2``.
    """
    n = x.shape[0]
    sigma_prev = build_sigma(dist, spec, prev.cov)
    lo = spd_cholesky(sigma_prev, jitter=1e-10 * (prev.cov.sigma2 + prev.cov.tau2))
    sig_inv = cho_solve((lo, True), np.eye(n))

    xw = solve_triangular(lo, x, lower=True)
    zw = solve_triangular(lo, zhat, lower=True)
    beta, *_ = np.linalg.lstsq(xw, zw, rcond=None)

    # sill update with the previous correlation-scale precision
    psi_inv = prev.cov.sigma2 * sig_inv
    mu = x @ beta
    quad = float(
        np.sum(zzhat * psi_inv) - 2.0 * zhat @ psi_inv @ mu + mu @ psi_inv @ mu
    )
    sigma2 = quad / n
    if not np.isfinite(sigma2) or sigma2 <= 0:
        raise NumericalError("sill update produced a non-positive value")

    lower = np.asarray(config.lower, dtype=float)
    upper = np.asarray(config.upper, dtype=float)

    def neg_profile(theta):
        phi = theta[0]
        nu2 = (
            spec.fixed_nugget_value / sigma2 if spec.nugget_fixed else float(theta[1])
        )
        psi = corr_matrix(dist, spec, phi)
        psi[np.diag_indices_from(psi)] += nu2
        sig = sigma2 * psi
        try:
            lo_s = spd_cholesky(sig)
        except Exception:
            return np.inf
        logdet = 2.0 * float(np.sum(np.log(np.diag(lo_s))))
        s_inv = cho_solve((lo_s, True), np.eye(n))
        a_hat = float(
            np.sum(zzhat * s_inv) - 2.0 * zhat @ s_inv @ mu + mu @ s_inv @ mu
        )
        return 0.5 * (logdet + a_hat)

    if spec.nugget_fixed:
        x0 = np.array([np.clip(prev.cov.phi, lower[0], upper[0])])
        box = [(lower[0], upper[0])]
    else:
        x0 = np.array(
            [
                np.clip(prev.cov.phi, lower[0], upper[0]),
                np.clip(prev.cov.nu2, lower[-1], upper[-1]),
            ]
        )
        box = [(lower[0], upper[0]), (lower[-1], upper[-1])]
    # warm-started every iteration, so a modest simplex tolerance suffices;
    # the EM loop supplies the outer convergence pressure
    sol = minimize(
        neg_profile,
        x0,
        method="Nelder-Mead",
        bounds=box,
        options={"xatol": 1e-5, "fatol": 1e-8, "maxiter": 300},
    )
    if not np.isfinite(sol.fun):
        raise NumericalError("inner covariance search produced a non-finite objective")
    phi = float(sol.x[0])
    if spec.nugget_fixed:
        tau2 = spec.fixed_nugget_value
    else:
        tau2 = float(sol.x[1]) * sigma2
    return ModelParams(beta=beta, cov=CovParams(sigma2=sigma2, phi=phi, tau2=tau2))


def saem_fit(
    data: SpatialDataset,
    trend: TrendSpec,
    spec: CovarianceSpec,
    config: SaemConfig,
) -> SaemFit:
    """Run the full stochastic EM loop and return the completed fit.

    Iterates until the relative change between successive evaluations of
    the observed-data log-likelihood drops below ``config.tol`` (checked
    after the cut point; the likelihood is evaluated every iteration then,
    every fifth iteration before) or the iteration cap is reached.
    """
    x = build_trend(data.coords, data.x_extra, trend)
    n, p = x.shape
    if n < p + 2:
        raise DataValidationError(f"need at least p + 2 = {p + 2} sites, got {n}")
    dist = distance_matrix(data.coords)
    cut = math.ceil(config.pc * config.max_iter)

    root = RngState(config.seed)
    gibbs_rng, ll_rng = root.spawn(2)

    y0 = _imputed_start(data)
    params = _initial_params(data, trend, spec, config, x, dist, y0)
    state = SaemState(zhat=y0.copy(), zzhat=np.outer(y0, y0), chain=None)
    part = partition(data)
    if part.cens_idx.size:
        state.chain = y0[part.cens_idx].copy()

    n_theta = p + 3
    trace_params = np.full((config.max_iter, n_theta), np.nan)
    trace_ll = np.full(config.max_iter, np.nan)
    prev_ll = None
    converged = False
    iterations = 0

    for k in range(1, config.max_iter + 1):
        iterations = k
        sigma = build_sigma(dist, spec, params.cov)
        try:
            _e_step_core(state, data, params, sigma, x, config, gibbs_rng)
            params = cm_step(state.zhat, state.zzhat, x, dist, spec, config, params)
        except NumericalError as exc:
            raise NumericalError(f"iteration {k}: {exc}") from exc
        trace_params[k - 1] = params.as_array()

        evaluate = k > cut or k % 5 == 0 or k == config.max_iter
        if evaluate:
            ll = loglik(
                params,
                data,
                trend,
                spec,
                rng=ll_rng,
                eps=config.monitor_eps,
                max_points=config.rect_max_points,
            )
            trace_ll[k - 1] = ll.value
            if (
                prev_ll is not None
                and k > cut
                and np.isfinite(ll.value)
                and np.isfinite(prev_ll)
                and prev_ll != 0.0
                and abs(ll.value / prev_ll - 1.0) < config.tol
            ):
                converged = True
                prev_ll = ll.value
                break
            prev_ll = ll.value

    final_ll = loglik(
        params,
        data,
        trend,
        spec,
        rng=ll_rng,
        eps=config.final_eps,
        max_points=config.rect_max_points,
    )
    k_params = param_count(p, spec.nugget_fixed)
    crit = criteria(final_ll.value, k_params, n)
    return SaemFit(
        params=params,
        zhat=state.zhat,
        zzhat=state.zzhat,
        loglik=final_ll,
        criteria=crit,
        trace_params=trace_params[:iterations],
        trace_loglik=trace_ll[:iterations],
        converged=converged,
        iterations_used=iterations,
        config=config,
        data=data,
        trend=trend,
        spec=spec,
        x=x,
        dist=dist,
        fingerprint=data.fingerprint(),
    )
