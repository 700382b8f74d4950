"""Spatial covariance families and their parameter derivatives.

The covariance of the random field is ``Sigma = tau2 * I + sigma2 * R(phi)``
where ``R(phi)`` is an isotropic correlation matrix built from one of five
families.  Throughout the package the covariance parameters are ordered as
``alpha = (sigma2, phi, tau2)`` and derivative routines take a 1-based index
``k`` into that vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky
from scipy.spatial.distance import cdist
from scipy.special import gamma as gamma_fn
from scipy.special import kv

from .errors import ConfigurationError, SingularCovarianceError

FAMILIES = ("exponential", "gaussian", "spherical", "matern", "powered-exponential")

_MATERN_FD_REL_STEP = 1e-6  # relative phi step for Matern second derivatives


@dataclass(frozen=True)
class CovarianceSpec:
    """Correlation family plus the options that do not change during a fit.

    Parameters
    ----------
    family : str
        One of ``exponential``, ``gaussian``, ``spherical``, ``matern``,
        ``powered-exponential``.
    kappa : float
        Smoothness (matern, ``kappa > 0``) or power
        (powered-exponential, ``0 < kappa <= 2``); ignored otherwise.
    nugget_fixed : bool
        When True the nugget ``tau2`` is held at ``fixed_nugget_value``
        instead of being estimated.
    fixed_nugget_value : float
        Nugget variance used when ``nugget_fixed`` is set.
    """

    family: str
    kappa: float = 0.0
    nugget_fixed: bool = False
    fixed_nugget_value: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(
                f"unsupported covariance family {self.family!r}; "
                f"expected one of {FAMILIES}"
            )
        if self.family == "matern" and not self.kappa > 0:
            raise ConfigurationError("matern requires kappa > 0")
        if self.family == "powered-exponential" and not 0 < self.kappa <= 2:
            raise ConfigurationError("powered-exponential requires kappa in (0, 2]")
        if self.fixed_nugget_value < 0:
            raise ConfigurationError("fixed_nugget_value must be >= 0")


@dataclass(frozen=True)
class CovParams:
    """Covariance parameters ``(sigma2, phi, tau2)``.

    ``sigma2`` is the partial sill, ``phi`` the range in distance units and
    ``tau2`` the nugget.  ``nu2 = tau2 / sigma2`` is the relative nugget used
    by the profile objective of the fitting routines.
    """

    sigma2: float
    phi: float
    tau2: float = 0.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ConfigurationError("sigma2 must be > 0")
        if not self.phi > 0:
            raise ConfigurationError("phi must be > 0")
        if self.tau2 < 0:
            raise ConfigurationError("tau2 must be >= 0")

    @property
    def nu2(self) -> float:
        return self.tau2 / self.sigma2

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma2, self.phi, self.tau2])


def distance_matrix(coords: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix of an ``(n, 2)`` coordinate array."""
    coords = np.asarray(coords, dtype=float)
    d = cdist(coords, coords)
    np.fill_diagonal(d, 0.0)
    return d


def cross_distance(coords_a: np.ndarray, coords_b: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances between two coordinate sets."""
    return cdist(np.asarray(coords_a, dtype=float), np.asarray(coords_b, dtype=float))


def correlation(family: str, kappa: float, h, phi: float):
    """Correlation ``rho(h; phi)`` for one family, vectorized in ``h``.

    ``rho(0) = 1`` for every family.  Returns a scalar for scalar ``h``.
    """
    if family not in FAMILIES:
        raise ConfigurationError(f"unsupported covariance family {family!r}")
    if not phi > 0:
        raise ConfigurationError("phi must be > 0")
    h = np.asarray(h, dtype=float)
    u = h / phi
    if family == "exponential":
        rho = np.exp(-u)
    elif family == "gaussian":
        rho = np.exp(-(u**2))
    elif family == "spherical":
        rho = np.where(u <= 1.0, 1.0 - 1.5 * u + 0.5 * u**3, 0.0)
    elif family == "powered-exponential":
        rho = np.exp(-np.power(u, kappa))
    else:  # matern
        c = 2.0 ** (1.0 - kappa) / gamma_fn(kappa)
        with np.errstate(invalid="ignore", over="ignore"):
            rho = c * np.power(u, kappa) * kv(kappa, u)
        rho = np.where(u == 0.0, 1.0, rho)
        rho = np.nan_to_num(rho, nan=0.0)  # kv underflow far beyond the range
    return rho if rho.ndim else float(rho)


def _dcorr_dphi(family: str, kappa: float, h: np.ndarray, phi: float) -> np.ndarray:
    """Analytic ``d rho / d phi`` elementwise over ``h``."""
    u = h / phi
    if family == "exponential":
        return np.exp(-u) * u / phi
    if family == "gaussian":
        return np.exp(-(u**2)) * 2.0 * u**2 / phi
    if family == "spherical":
        return np.where(u <= 1.0, 1.5 * (h / phi**2) * (1.0 - u**2), 0.0)
    if family == "powered-exponential":
        g = np.power(u, kappa)
        return kappa * g / phi * np.exp(-g)
    # matern: d/dx [x^k K_k(x)] = -x^k K_{k-1}(x) and dx/dphi = -x/phi
    c = 2.0 ** (1.0 - kappa) / gamma_fn(kappa)
    with np.errstate(invalid="ignore", over="ignore"):
        out = c / phi * np.power(u, kappa + 1.0) * kv(kappa - 1.0, u)
    return np.nan_to_num(np.where(u == 0.0, 0.0, out), nan=0.0)


def _d2corr_dphi2(family: str, kappa: float, h: np.ndarray, phi: float) -> np.ndarray:
    """Analytic ``d^2 rho / d phi^2``; Matern falls back to a central
    difference of the analytic first derivative."""
    u = h / phi
    if family == "exponential":
        return np.exp(-u) * (u / phi**2) * (u - 2.0)
    if family == "gaussian":
        return np.exp(-(u**2)) * (2.0 * u**2 / phi**2) * (2.0 * u**2 - 3.0)
    if family == "spherical":
        return np.where(u <= 1.0, (3.0 * h / phi**3) * (2.0 * u**2 - 1.0), 0.0)
    if family == "powered-exponential":
        g = np.power(u, kappa)
        return (kappa * g / phi**2) * np.exp(-g) * (kappa * g - kappa - 1.0)
    step = phi * _MATERN_FD_REL_STEP
    hi = _dcorr_dphi(family, kappa, h, phi + step)
    lo = _dcorr_dphi(family, kappa, h, phi - step)
    return (hi - lo) / (2.0 * step)


def corr_matrix(dist: np.ndarray, spec: CovarianceSpec, phi: float) -> np.ndarray:
    """Correlation matrix ``R(phi)`` over a symmetric distance matrix.

    Evaluates the family on the upper triangle only (the Matern Bessel
    functions are the cost driver in fitting loops) and mirrors.
    """
    n = dist.shape[0]
    iu = np.triu_indices(n, k=1)
    r = np.eye(n)
    vals = correlation(spec.family, spec.kappa, dist[iu], phi)
    r[iu] = vals
    r.T[iu] = vals
    return r


def build_sigma(dist: np.ndarray, spec: CovarianceSpec, p: CovParams) -> np.ndarray:
    """Covariance matrix ``Sigma = tau2 * I + sigma2 * R(phi)``."""
    dist = np.asarray(dist, dtype=float)
    sigma = p.sigma2 * corr_matrix(dist, spec, p.phi)
    sigma[np.diag_indices_from(sigma)] += p.tau2
    return sigma


def spd_cholesky(mat: np.ndarray, jitter: float | None = None) -> np.ndarray:
    """Lower Cholesky factor with a one-shot diagonal jitter retry.

    A failed factorization is retried once with ``jitter`` added to the
    diagonal (default ``1e-10 * mean diagonal``); a second failure raises
    :class:`SingularCovarianceError`.
    """
    try:
        return cholesky(mat, lower=True)
    except np.linalg.LinAlgError:
        pass
    if jitter is None:
        jitter = 1e-10 * float(np.mean(np.diag(mat)))
    bumped = mat + jitter * np.eye(mat.shape[0])
    try:
        return cholesky(bumped, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            "covariance matrix is numerically non positive definite"
        ) from exc


def cholesky_sigma(dist: np.ndarray, spec: CovarianceSpec, p: CovParams) -> np.ndarray:
    """Convenience: build ``Sigma`` and return its lower Cholesky factor."""
    sigma = build_sigma(dist, spec, p)
    return spd_cholesky(sigma, jitter=1e-10 * (p.sigma2 + p.tau2))


def _check_k(k: int):
    if k not in (1, 2, 3):
        raise ConfigurationError(f"parameter index must be 1, 2 or 3, got {k}")


def dsigma(dist: np.ndarray, spec: CovarianceSpec, p: CovParams, k: int) -> np.ndarray:
    """First derivative of ``Sigma`` with respect to ``alpha_k``.

    ``k=1`` is sigma2 (returns ``R(phi)``), ``k=2`` is phi
    (``sigma2 * dR/dphi``) and ``k=3`` is tau2 (identity).
    """
    _check_k(k)
    dist = np.asarray(dist, dtype=float)
    if k == 1:
        return corr_matrix(dist, spec, p.phi)
    if k == 2:
        return p.sigma2 * _dcorr_dphi(spec.family, spec.kappa, dist, p.phi)
    return np.eye(dist.shape[0])


def d2sigma(
    dist: np.ndarray, spec: CovarianceSpec, p: CovParams, k: int, l: int
) -> np.ndarray:
    """Second derivative of ``Sigma`` with respect to ``alpha_k, alpha_l``.

    Only the ``(phi, phi)`` and ``(sigma2, phi)`` blocks are nonzero.
    """
    _check_k(k)
    _check_k(l)
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    pair = tuple(sorted((k, l)))
    if pair == (2, 2):
        return p.sigma2 * _d2corr_dphi2(spec.family, spec.kappa, dist, p.phi)
    if pair == (1, 2):
        return _dcorr_dphi(spec.family, spec.kappa, dist, p.phi)
    return np.zeros((n, n))


def dsigma_inv(
    dist: np.ndarray,
    spec: CovarianceSpec,
    p: CovParams,
    k: int,
    sigma_inv: np.ndarray | None = None,
) -> np.ndarray:
    """``d Sigma^{-1} / d alpha_k = -Sigma^{-1} (d Sigma / d alpha_k) Sigma^{-1}``.

    ``sigma_inv`` may be supplied to avoid refactorizing in hot loops.
    """
    if sigma_inv is None:
        sigma_inv = inv_sigma(dist, spec, p)
    return -sigma_inv @ dsigma(dist, spec, p, k) @ sigma_inv


def d2sigma_inv(
    dist: np.ndarray,
    spec: CovarianceSpec,
    p: CovParams,
    k: int,
    l: int,
    sigma_inv: np.ndarray | None = None,
) -> np.ndarray:
    """Second derivative of the precision matrix with respect to
    ``alpha_k, alpha_l``."""
    if sigma_inv is None:
        sigma_inv = inv_sigma(dist, spec, p)
    sk = dsigma(dist, spec, p, k)
    sl = dsigma(dist, spec, p, l)
    skl = d2sigma(dist, spec, p, k, l)
    a = sigma_inv @ sl @ sigma_inv @ sk @ sigma_inv
    b = sigma_inv @ sk @ sigma_inv @ sl @ sigma_inv
    c = sigma_inv @ skl @ sigma_inv
    return a + b - c


def inv_sigma(dist: np.ndarray, spec: CovarianceSpec, p: CovParams) -> np.ndarray:
    """Explicit inverse of ``Sigma`` via its Cholesky factor."""
    lo = cholesky_sigma(dist, spec, p)
    n = lo.shape[0]
    from scipy.linalg import cho_solve

    return cho_solve((lo, True), np.eye(n))
