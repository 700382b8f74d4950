import numpy as np
import pytest
from numpy.testing import assert_allclose

from geocens import (
    CovarianceSpec,
    CovParams,
    DegenerateCurvatureError,
    ModelParams,
    TrendSpec,
    classify,
    delta_explanatory,
    delta_response,
    delta_scale,
    local_influence,
    m0,
    perturbed_q_value,
    q_hessian,
    q_value,
    saem_fit,
)
from geocens.covariance import distance_matrix
from geocens.influence import curvature_matrix, params_from_vector
from geocens.model import build_trend

from oracles import central_hessian, central_mixed_derivative

ALL_SPECS = [
    CovarianceSpec("exponential"),
    CovarianceSpec("gaussian"),
    CovarianceSpec("spherical"),
    CovarianceSpec("matern", kappa=0.7),
    CovarianceSpec("powered-exponential", kappa=1.4),
]


def synthetic_instance(seed, n=12, p=2, nugget_fixed=False):
    """Random geometry, moments, and parameters for derivative checks."""
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 6, size=(n, 2))
    x = np.column_stack([np.ones(n), rng.uniform(0, 1, n)])[:, :p]
    zhat = rng.normal(1.0, 1.5, n)
    w = rng.normal(size=(n, n + 2)) * 0.4
    zzhat = np.outer(zhat, zhat) + w @ w.T / (n + 2)
    params = ModelParams(
        beta=rng.normal(0, 1, p),
        cov=CovParams(
            sigma2=rng.uniform(0.8, 2.5),
            phi=rng.uniform(0.8, 2.5),
            tau2=0.0 if nugget_fixed else rng.uniform(0.1, 0.6),
        ),
    )
    return coords, x, zhat, zzhat, params


def theta_of(params, nugget_fixed):
    t = [*params.beta, params.cov.sigma2, params.cov.phi]
    if not nugget_fixed:
        t.append(params.cov.tau2)
    return np.array(t)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.family)
def test_q_hessian_matches_finite_differences(spec):
    coords, x, zhat, zzhat, params = synthetic_instance(3)
    dist = distance_matrix(coords)
    p = x.shape[1]
    theta0 = theta_of(params, nugget_fixed=False)

    def f(theta):
        pr = params_from_vector(theta, p, nugget_fixed=False)
        return q_value(pr, zhat, zzhat, x, dist, spec)

    want = central_hessian(f, theta0, rel_step=2e-4)
    got = q_hessian(params, zhat, zzhat, x, dist, spec)
    err = np.abs(got - want).max() / np.abs(want).max()
    assert err < 1e-4, (spec.family, err)


def test_q_hessian_beta_block_closed_form():
    spec = CovarianceSpec("exponential")
    coords, x, zhat, zzhat, params = synthetic_instance(5)
    dist = distance_matrix(coords)
    from geocens.covariance import build_sigma

    si = np.linalg.inv(build_sigma(dist, spec, params.cov))
    got = q_hessian(params, zhat, zzhat, x, dist, spec)
    # the objective is maximized, so the coefficient block is negative definite
    assert_allclose(got[:2, :2], -(x.T @ si @ x), rtol=1e-10)


def test_q_hessian_fixed_nugget_drops_row():
    spec = CovarianceSpec("gaussian", nugget_fixed=True, fixed_nugget_value=0.0)
    coords, x, zhat, zzhat, params = synthetic_instance(6, nugget_fixed=True)
    dist = distance_matrix(coords)
    h = q_hessian(params, zhat, zzhat, x, dist, spec)
    assert h.shape == (4, 4)  # p=2 plus (sigma2, phi)

    def f(theta):
        pr = params_from_vector(theta, 2, nugget_fixed=True, fixed_nugget=0.0)
        return q_value(pr, zhat, zzhat, x, dist, spec)

    want = central_hessian(f, theta_of(params, nugget_fixed=True), rel_step=2e-4)
    assert np.abs(h - want).max() / np.abs(want).max() < 1e-4


# ---------------------------------------------------------------------------
# perturbation cross-derivatives vs finite differences in omega
# ---------------------------------------------------------------------------


def mixed_fd(scheme, spec, params, zhat, zzhat, x, dist, nugget_fixed=False):
    p = x.shape[1]
    n = x.shape[0]
    omega0 = np.ones(n) if scheme == "scale" else np.zeros(n)

    def f(theta, omega):
        pr = params_from_vector(theta, p, nugget_fixed=nugget_fixed)
        return perturbed_q_value(scheme, pr, omega, zhat, zzhat, x, dist, spec)

    return central_mixed_derivative(
        f, theta_of(params, nugget_fixed), omega0, rel_step_t=2e-4, rel_step_w=2e-4
    )


@pytest.mark.parametrize("scheme,builder", [
    ("response", delta_response),
    ("scale", delta_scale),
    ("explanatory", delta_explanatory),
])
def test_delta_matches_mixed_finite_difference(scheme, builder):
    spec = CovarianceSpec("exponential")
    for seed in (0, 1, 2):
        coords, x, zhat, zzhat, params = synthetic_instance(seed, n=8)
        dist = distance_matrix(coords)
        got = builder(params, zhat, zzhat, x, dist, spec)
        want = mixed_fd(scheme, spec, params, zhat, zzhat, x, dist)
        err = np.abs(got - want).max() / np.abs(want).max()
        assert err < 1e-4, (scheme, seed, err)


def test_delta_response_beta_block_closed_form():
    spec = CovarianceSpec("gaussian")
    coords, x, zhat, zzhat, params = synthetic_instance(9)
    dist = distance_matrix(coords)
    from geocens.covariance import build_sigma

    si = np.linalg.inv(build_sigma(dist, spec, params.cov))
    got = delta_response(params, zhat, zzhat, x, dist, spec)
    assert_allclose(got[:2], -(x.T @ si), rtol=1e-9)


def test_delta_response_zero_alpha_rows_at_fitted_zero_moments():
    # a fit with all-zero conditional means and matching coefficients has
    # zero residual, so every covariance-parameter row vanishes
    spec = CovarianceSpec("exponential")
    coords, x, _, _, params0 = synthetic_instance(10)
    dist = distance_matrix(coords)
    n = coords.shape[0]
    zhat = np.zeros(n)
    zzhat = np.eye(n) * 0.5
    params = ModelParams(beta=np.zeros(x.shape[1]), cov=params0.cov)
    d = delta_response(params, zhat, zzhat, x, dist, spec)
    assert_allclose(d[2:], 0.0, atol=1e-14)


def test_delta_explanatory_zero_for_zero_moments_and_beta():
    spec = CovarianceSpec("exponential")
    coords, x, _, _, params0 = synthetic_instance(11)
    dist = distance_matrix(coords)
    n = coords.shape[0]
    params = ModelParams(beta=np.zeros(x.shape[1]), cov=params0.cov)
    d = delta_explanatory(params, np.zeros(n), np.eye(n), x, dist, spec)
    assert_allclose(d, 0.0, atol=1e-14)


def test_delta_scale_single_site_scalar_reduction():
    # n=1: the whole machinery collapses to scalars that can be written out
    spec = CovarianceSpec("exponential")
    dist = np.zeros((1, 1))
    x = np.array([[1.0]])
    zhat = np.array([1.3])
    zzhat = np.array([[2.5]])
    params = ModelParams(beta=[0.4], cov=CovParams(sigma2=1.5, phi=1.0, tau2=0.5))
    s = params.cov.sigma2 + params.cov.tau2
    r = zhat[0] - 0.4
    d = delta_scale(params, zhat, zzhat, x, dist, spec)
    assert d[0, 0] == pytest.approx(-r / s, rel=1e-12)
    # covariance rows: 0.5 * g_k * (m2 - 2 zhat mu + mu^2) with g_k = -s_k/s^2
    for row, s_k in zip(d[1:], (1.0, 0.0, 1.0)):  # dSigma/d(sigma2,phi,tau2) at h=0
        g_k = -s_k / s**2
        want = 0.5 * g_k * (zzhat[0, 0] - 2 * zhat[0] * 0.4 + 0.4**2)
        assert row[0] == pytest.approx(want, rel=1e-12)


def test_delta_scale_fixed_nugget_shape():
    spec = CovarianceSpec("exponential", nugget_fixed=True, fixed_nugget_value=0.0)
    coords, x, zhat, zzhat, params = synthetic_instance(12, nugget_fixed=True)
    dist = distance_matrix(coords)
    d = delta_scale(params, zhat, zzhat, x, dist, spec)
    assert d.shape == (x.shape[1] + 2, coords.shape[0])
    want = mixed_fd("scale", spec, params, zhat, zzhat, x, dist, nugget_fixed=True)
    assert np.abs(d - want).max() / np.abs(want).max() < 1e-4


# ---------------------------------------------------------------------------
# M(0), conformal curvature, classification
# ---------------------------------------------------------------------------


def random_curvature_instance(seed, n=15, k=5):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(k, k))
    q_hess = -(a @ a.T + k * np.eye(k))  # negative definite
    delta = rng.normal(size=(k, n))
    return q_hess, delta


def test_m0_rank_one_indicator():
    k, n, j = 3, 6, 2
    q_hess = -np.eye(k)
    delta = np.zeros((k, n))
    delta[0, j] = 2.0
    values = m0(q_hess, delta)
    want = np.zeros(n)
    want[j] = 1.0
    assert_allclose(values, want, atol=1e-12)


def test_m0_sums_to_one_and_is_conformal_curvature():
    for seed in range(20):
        q_hess, delta = random_curvature_instance(seed)
        values = m0(q_hess, delta)
        assert values.sum() == pytest.approx(1.0, abs=1e-10)
        assert np.all(values >= -1e-12) and np.all(values <= 1.0 + 1e-12)
        f = curvature_matrix(q_hess, delta)
        direct = np.diag(f) / np.trace(f)
        assert_allclose(values, direct, atol=1e-10)


def test_m0_degenerate_curvature_raises():
    with pytest.raises(DegenerateCurvatureError):
        m0(-np.eye(2), np.zeros((2, 4)))


def test_curvature_matrix_psd():
    for seed in range(10):
        q_hess, delta = random_curvature_instance(seed)
        eig = np.linalg.eigvalsh(curvature_matrix(q_hess, delta))
        assert eig.min() >= -1e-8 * max(eig.max(), 1.0)


def test_classify_constant_vector_no_flags():
    benchmark, flags = classify(np.full(5, 0.2), 3.0)
    assert benchmark == pytest.approx(0.2)
    assert not flags.any()


def test_classify_direct_arithmetic():
    values = np.array([0.7, 0.1, 0.1, 0.1])
    benchmark, flags = classify(values, 1.0)
    assert benchmark == pytest.approx(0.55)
    assert list(flags) == [True, False, False, False]


def test_classify_monotone_in_cstar():
    rng = np.random.default_rng(33)
    values = rng.uniform(0, 1, 50)
    flags_by_c = [classify(values, c)[1].sum() for c in (0.5, 1.0, 2.0, 3.0, 5.0)]
    assert all(a >= b for a, b in zip(flags_by_c, flags_by_c[1:]))


# ---------------------------------------------------------------------------
# end-to-end report
# ---------------------------------------------------------------------------


def test_local_influence_report_properties():
    from study import run_study

    fit, report, _ = run_study(700, inject_three=False, max_iter=8)
    for name in ("response", "scale", "explanatory"):
        diag = report.scheme(name)
        assert diag is not None, report.errors
        assert diag.m0.sum() == pytest.approx(1.0, abs=1e-8)
        assert np.all(diag.m0 >= -1e-12) and np.all(diag.m0 <= 1.0)
        assert diag.flags.dtype == bool
        assert diag.rank >= 1


def test_local_influence_flags_injected_outliers():
    from study import run_study

    fit, report, targets = run_study(601, inject_three=True, max_iter=10)
    flagged = set(report.response.atypical.tolist())
    assert set(targets.tolist()) <= flagged


def test_local_influence_clean_data_low_flag_rate():
    from study import run_study

    rates = []
    for seed in (701, 702, 703):
        fit, report, _ = run_study(seed, inject_three=False, max_iter=8)
        rates.append(report.response.flags.mean())
    assert np.mean(rates) <= 0.05
