"""Multivariate normal primitives.

Log-density, rectangle probabilities, Gibbs sampling from box-truncated
normals, and Monte Carlo truncated moments.  All sampling is driven by an
explicit :class:`RngState` (PCG64) so that identical seeds reproduce
identical streams bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import ndtr, ndtri

from .covariance import spd_cholesky
from .errors import DataValidationError

_TAIL_SWITCH = 34.0  # standardized bound beyond which Phi differences underflow
_LOG_2PI = np.log(2.0 * np.pi)


class RngState:
    """Seeded random stream (numpy PCG64 behind a ``Generator``).

    The ``seed`` fully determines the stream.  ``spawn`` derives independent
    child streams deterministically, for callers that parallelize work.
    """

    def __init__(self, seed):
        if isinstance(seed, np.random.SeedSequence):
            self._ss = seed
            self.seed = seed.entropy
        else:
            self.seed = int(seed)
            self._ss = np.random.SeedSequence(self.seed)
        self.generator = np.random.Generator(np.random.PCG64(self._ss))

    def spawn(self, n: int) -> list["RngState"]:
        return [RngState(child) for child in self._ss.spawn(n)]


def as_generator(rng) -> np.random.Generator:
    """Accept an RngState, Generator, or integer seed."""
    if isinstance(rng, RngState):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.PCG64(int(rng)))


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box ``lower <= x <= upper`` with +-inf allowed."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != upper.shape:
            raise DataValidationError("rectangle bounds must have equal length")
        if not np.all(lower < upper):
            raise DataValidationError("rectangle requires lower < upper componentwise")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


def mvn_logpdf(x, mean, cov) -> float:
    """Log density of ``N(mean, cov)`` at ``x`` via Cholesky."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = x.shape[0]
    lo = spd_cholesky(cov)
    w = solve_triangular(lo, x - mean, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(lo)))
    return float(-0.5 * (n * _LOG_2PI + logdet + w @ w))


def _trunc_std_ppf(u: float, a: float, b: float) -> float:
    """Quantile of a standard normal truncated to ``[a, b]``.

    Works in whichever tail keeps the CDF difference away from underflow;
    if both bounds sit beyond ``+-34`` standard deviations, where the
    difference of normal CDFs is identically zero in double precision, an
    exponential tail approximation is used instead.  Never returns NaN.
    """
    if b <= 0.0:
        return -_trunc_std_ppf(1.0 - u, -b, -a)
    if a >= _TAIL_SWITCH:
        # exponential approximation to the far upper tail, exact inverse CDF
        # of the limiting hazard-rate distribution on [a, b]
        if np.isinf(b):
            x = a - np.log1p(-u) / a
        else:
            width = -np.expm1(-a * (b - a))
            x = a - np.log1p(-u * width) / a
        return min(max(x, a), b if np.isfinite(b) else x)
    if a >= 0.0:
        pa = ndtr(-a)
        pb = ndtr(-b)
        x = -ndtri(pa - u * (pa - pb))
    else:
        pa = ndtr(a)
        pb = ndtr(b)
        x = ndtri(pa + u * (pb - pa))
    if np.isfinite(x):
        return min(max(x, a), b)
    return a if u < 0.5 else b  # pa == pb rounding corner


def tmvn_gibbs(
    mean,
    cov,
    rect: Rectangle,
    n_samples: int,
    burn_in: int = 20,
    thin: int = 1,
    rng=None,
    start=None,
) -> np.ndarray:
    """Coordinate-wise Gibbs sampler for ``N(mean, cov)`` truncated to ``rect``.

    Each full conditional is a univariate truncated normal sampled by
    inverse CDF, so the draw count is fixed and the output is a
    deterministic function of ``rng``.  Returns an ``(n_samples, n)`` array;
    every row lies inside the rectangle.

    ``start`` optionally sets the initial chain state (defaults to the mean
    clipped into the rectangle), which lets callers persist the chain across
    repeated invocations.
    """
    gen = as_generator(rng)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = mean.shape[0]
    if rect.dim != n:
        raise DataValidationError("rectangle dimension does not match mean")
    lower, upper = rect.lower, rect.upper

    lo = spd_cholesky(cov)
    lam = cho_solve((lo, True), np.eye(n))  # precision matrix
    cond_sd = 1.0 / np.sqrt(np.diag(lam))

    if start is None:
        x = np.clip(mean, lower, upper)
    else:
        x = np.clip(np.asarray(start, dtype=float).copy(), lower, upper)

    out = np.empty((n_samples, n))
    kept = 0
    sweep = 0
    while kept < n_samples:
        sweep += 1
        for i in range(n):
            r = lam[i] @ (x - mean) - lam[i, i] * (x[i] - mean[i])
            m_i = mean[i] - r / lam[i, i]
            a = (lower[i] - m_i) / cond_sd[i]
            b = (upper[i] - m_i) / cond_sd[i]
            u = gen.random()
            x[i] = m_i + cond_sd[i] * _trunc_std_ppf(u, a, b)
            if x[i] < lower[i]:
                x[i] = lower[i]
            elif x[i] > upper[i]:
                x[i] = upper[i]
        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            out[kept] = x
            kept += 1
    return out


def tmvn_moments(
    mean,
    cov,
    rect: Rectangle,
    n_samples: int,
    rng=None,
    burn_in: int = 100,
    thin: int = 1,
    start=None,
):
    """Monte Carlo first and second moments of a truncated normal.

    Returns ``(m1, m2)`` where ``m1`` approximates ``E[Z]`` and ``m2``
    approximates the uncentered ``E[Z Z^T]`` (symmetrized).
    """
    samples = tmvn_gibbs(
        mean, cov, rect, n_samples, burn_in=burn_in, thin=thin, rng=rng, start=start
    )
    m1 = samples.mean(axis=0)
    m2 = samples.T @ samples / n_samples
    m2 = 0.5 * (m2 + m2.T)
    return m1, m2


@dataclass(frozen=True)
class RectProb:
    """Rectangle probability estimate with its standard error."""

    prob: float
    se: float
    n_points: int
    hit_cap: bool = False

    def __float__(self) -> float:
        return self.prob


def _first_primes(count: int) -> np.ndarray:
    primes = []
    cand = 2
    while len(primes) < count:
        if all(cand % q for q in primes if q * q <= cand):
            primes.append(cand)
        cand += 1
    return np.array(primes, dtype=float)


def _ordered_cholesky(corr: np.ndarray, lower: np.ndarray, upper: np.ndarray):
    """Cholesky factor with the Genz variable ordering.

    Variables are permuted so that the most restrictive coordinate is
    integrated first (smallest conditional probability given truncated
    expected values of earlier coordinates), which stabilizes the
    separation-of-variables integrand.  The ordering is a deterministic
    function of the problem, so permuting the input reproduces the same
    internal order.
    """
    n = corr.shape[0]
    c = corr.copy()
    a = lower.copy()
    b = upper.copy()
    ell = np.zeros((n, n))
    y = np.zeros(n)
    eps = 1e-12
    for i in range(n):
        best_j, best_p = i, np.inf
        for j in range(i, n):
            var_j = c[j, j] - ell[j, :i] @ ell[j, :i]
            sd_j = np.sqrt(max(var_j, eps))
            s = ell[j, :i] @ y[:i]
            p_j = ndtr((b[j] - s) / sd_j) - ndtr((a[j] - s) / sd_j)
            if p_j < best_p:
                best_p, best_j = p_j, j
        if best_j != i:
            idx = np.arange(n)
            idx[i], idx[best_j] = best_j, i
            c = c[np.ix_(idx, idx)]
            a[[i, best_j]] = a[[best_j, i]]
            b[[i, best_j]] = b[[best_j, i]]
            ell[[i, best_j], :i] = ell[[best_j, i], :i]
        var_i = c[i, i] - ell[i, :i] @ ell[i, :i]
        ell[i, i] = np.sqrt(max(var_i, eps))
        for j in range(i + 1, n):
            ell[j, i] = (c[j, i] - ell[j, :i] @ ell[i, :i]) / ell[i, i]
        s = ell[i, :i] @ y[:i]
        ai = (a[i] - s) / ell[i, i]
        bi = (b[i] - s) / ell[i, i]
        p_i = max(ndtr(bi) - ndtr(ai), 1e-300)
        pdf_a = np.exp(-0.5 * ai * ai) / np.sqrt(2 * np.pi) if np.isfinite(ai) else 0.0
        pdf_b = np.exp(-0.5 * bi * bi) / np.sqrt(2 * np.pi) if np.isfinite(bi) else 0.0
        y[i] = (pdf_a - pdf_b) / p_i
    return ell, a, b


def mvn_rect_prob(
    mean,
    cov,
    rect: Rectangle,
    rng=None,
    eps: float = 1e-4,
    max_points: int = 100_000,
) -> RectProb:
    """Estimate ``P(lower <= X <= upper)`` for ``X ~ N(mean, cov)``.

    Uses the separation-of-variables transform with a randomly shifted
    Kronecker (root-prime) lattice.  Batches of quasi-random points are
    added until the standard error over batch means drops below ``eps`` or
    ``max_points`` lattice points have been spent (reported via
    ``hit_cap``).
    """
    gen = as_generator(rng)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = mean.shape[0]
    if rect.dim != n:
        raise DataValidationError("rectangle dimension does not match mean")

    sd = np.sqrt(np.diag(cov))
    low = (rect.lower - mean) / sd
    high = (rect.upper - mean) / sd
    if n == 1:
        prob = float(ndtr(high[0]) - ndtr(low[0]))
        return RectProb(prob=prob, se=0.0, n_points=0)

    corr = cov / np.outer(sd, sd)
    ell, low, high = _ordered_cholesky(corr, low, high)

    diag = np.diag(ell)
    c0 = ndtr(low[0] / diag[0])
    d0 = ndtr(high[0] / diag[0])

    q = np.sqrt(_first_primes(n - 1))
    points_per_batch = 1_000
    idx = np.arange(1, points_per_batch + 1)[None, :]
    batch_means: list[float] = []
    n_points = 0
    min_batches = 10

    def run_batch() -> float:
        shift = gen.random(n - 1)
        z = q[:, None] * idx + shift[:, None]
        z -= np.floor(z)
        x = np.abs(2.0 * z - 1.0)  # tent periodization
        y = np.zeros((n - 1, points_per_batch))
        c = np.full(points_per_batch, c0)
        dc = np.full(points_per_batch, d0 - c0)
        pv = dc.copy()
        for i in range(1, n):
            arg = np.clip(c + x[i - 1] * dc, 1e-300, 1.0 - 1e-16)
            y[i - 1] = ndtri(arg)
            s = ell[i, :i] @ y[:i]
            c = ndtr((low[i] - s) / diag[i])
            d = ndtr((high[i] - s) / diag[i])
            dc = d - c
            pv = pv * dc
        return float(pv.mean())

    while True:
        batch_means.append(run_batch())
        n_points += points_per_batch
        nb = len(batch_means)
        if nb >= min_batches:
            se = float(np.std(batch_means, ddof=1) / np.sqrt(nb))
            if se <= eps:
                return RectProb(float(np.mean(batch_means)), se, n_points)
        if n_points + points_per_batch > max_points:
            nb = len(batch_means)
            se = float(np.std(batch_means, ddof=1) / np.sqrt(nb)) if nb > 1 else np.inf
            return RectProb(float(np.mean(batch_means)), se, n_points, hit_cap=True)
