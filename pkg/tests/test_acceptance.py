"""Acceptance suite: one test per criterion, each printing a PASS/FAIL
line with its measured figures and enforcing its runtime budget."""

import os
import time

import numpy as np
import pytest

import geocens
from geocens import (
    CovarianceSpec,
    CovParams,
    ModelParams,
    Rectangle,
    RngState,
    SaemConfig,
    TrendSpec,
    classify,
    krige,
    m0,
    mspe,
    perturbed_q_value,
    q_hessian,
    q_value,
    saem_fit,
    tmvn_gibbs,
    tmvn_moments,
)
from geocens.cli import main as cli_main
from geocens.covariance import correlation, distance_matrix
from geocens.influence import (
    curvature_matrix,
    delta_explanatory,
    delta_response,
    delta_scale,
    params_from_vector,
)
from geocens.model import SpatialDataset, build_trend
from geocens.predict import predict_saem
from geocens.simulate import SimConfig, simulate_scl

from oracles import (
    batch_means_se,
    central_hessian,
    central_mixed_derivative,
    gaussian_ml_oracle,
    rejection_tmvn,
)
from study import run_study, TRUE_BETA, TRUE_COV

FIXTURE_RAINFALL = os.path.join(
    os.path.dirname(__file__), "fixtures", "parana_rainfall.csv"
)


def report(criterion: str, ok: bool, detail: str, elapsed: float, budget: float):
    status = "PASS" if ok and elapsed < budget else "FAIL"
    print(
        f"ACCEPTANCE {criterion}: {status} ({detail}; {elapsed:.1f}s of {budget:.0f}s)"
    )
    assert ok, detail
    assert elapsed < budget, f"runtime {elapsed:.1f}s exceeded budget {budget}s"


def test_criterion_1_truncated_moment_oracle():
    """Gibbs moments agree with rejection sampling on 10 random problems."""
    t0 = time.time()
    rng_np = np.random.default_rng(2024)
    worst = 0.0
    for case in range(10):
        n = int(rng_np.integers(1, 5))
        a = rng_np.normal(size=(n, n))
        cov = a @ a.T + n * np.eye(n)
        mean = rng_np.normal(0, 1, n)
        sd = np.sqrt(np.diag(cov))
        lower = mean - rng_np.uniform(0.6, 1.5, n) * sd
        upper = lower + rng_np.uniform(1.0, 2.5, n) * sd
        rect = Rectangle(lower=lower, upper=upper)
        samples = tmvn_gibbs(
            mean, cov, rect, n_samples=16_000, rng=RngState(900 + case), thin=2
        )
        ref = rejection_tmvn(mean, cov, lower, upper, 30_000, rng_np)
        for j in range(n):
            se = np.hypot(
                batch_means_se(samples[:, j]), ref[:, j].std() / np.sqrt(len(ref))
            )
            dev = abs(samples[:, j].mean() - ref[:, j].mean()) / se
            worst = max(worst, dev)
        for j in range(n):
            for k in range(j, n):
                pkg = samples[:, j] * samples[:, k]
                orc = ref[:, j] * ref[:, k]
                se = np.hypot(batch_means_se(pkg), orc.std() / np.sqrt(len(orc)))
                dev = abs(pkg.mean() - orc.mean()) / se
                worst = max(worst, dev)
    report(
        "1 truncated-moment oracle",
        worst < 3.0,
        f"worst deviation {worst:.2f} combined SEs over 10 problems",
        time.time() - t0,
        60,
    )


def _hessian_instance(seed, spec, n=20):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 6, size=(n, 2))
    x = np.column_stack([np.ones(n), rng.uniform(0, 1, n)])
    zhat = rng.normal(1.0, 1.5, n)
    w = rng.normal(size=(n, n + 2)) * 0.4
    zzhat = np.outer(zhat, zhat) + w @ w.T / (n + 2)
    params = ModelParams(
        beta=rng.normal(0, 1, 2),
        cov=CovParams(
            sigma2=rng.uniform(0.8, 2.5),
            phi=rng.uniform(0.8, 2.5),
            tau2=rng.uniform(0.1, 0.6),
        ),
    )
    return coords, x, zhat, zzhat, params


ALL_FAMILIES = [
    CovarianceSpec("exponential"),
    CovarianceSpec("gaussian"),
    CovarianceSpec("spherical"),
    CovarianceSpec("matern", kappa=0.7),
    CovarianceSpec("powered-exponential", kappa=1.4),
]


def test_criterion_2_hessian_oracle():
    """Analytic Hessian vs central differences of the explicit objective."""
    t0 = time.time()
    worst = 0.0
    for i in range(10):
        spec = ALL_FAMILIES[i % 5]
        coords, x, zhat, zzhat, params = _hessian_instance(100 + i, spec)
        dist = distance_matrix(coords)
        theta0 = np.concatenate([params.beta, params.cov.as_array()])

        def f(theta):
            pr = params_from_vector(theta, 2, nugget_fixed=False)
            return q_value(pr, zhat, zzhat, x, dist, spec)

        want = central_hessian(f, theta0, rel_step=2e-4)
        got = q_hessian(params, zhat, zzhat, x, dist, spec)
        worst = max(worst, np.abs(got - want).max() / np.abs(want).max())
    report(
        "2 Hessian oracle",
        worst < 1e-4,
        f"worst relative error {worst:.2e} over 10 instances, 5 families",
        time.time() - t0,
        60,
    )


def test_criterion_3_delta_matrix_oracles():
    """Each perturbation cross-derivative vs the mixed finite-difference
    oracle at the null perturbation."""
    t0 = time.time()
    builders = {
        "response": delta_response,
        "scale": delta_scale,
        "explanatory": delta_explanatory,
    }
    worst = {name: 0.0 for name in builders}
    for i in range(4):
        spec = ALL_FAMILIES[i % 5]
        coords, x, zhat, zzhat, params = _hessian_instance(200 + i, spec, n=10)
        dist = distance_matrix(coords)
        theta0 = np.concatenate([params.beta, params.cov.as_array()])
        for name, builder in builders.items():
            omega0 = np.ones(10) if name == "scale" else np.zeros(10)

            def f(theta, omega, _name=name):
                pr = params_from_vector(theta, 2, nugget_fixed=False)
                return perturbed_q_value(_name, pr, omega, zhat, zzhat, x, dist, spec)

            want = central_mixed_derivative(f, theta0, omega0, 2e-4, 2e-4)
            got = builder(params, zhat, zzhat, x, dist, spec)
            worst[name] = max(
                worst[name], np.abs(got - want).max() / np.abs(want).max()
            )
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    report(
        "3 delta-matrix oracles",
        max(worst.values()) < 1e-4,
        f"worst relative errors {detail}",
        time.time() - t0,
        60,
    )


def test_criterion_4_zero_censoring_equivalence():
    """Stochastic EM on uncensored data equals direct numeric ML."""
    t0 = time.time()
    spec = CovarianceSpec("exponential")
    res = simulate_scl(
        SimConfig(
            n_est=50,
            n_pred=0,
            beta=[2.0],
            cov=CovParams(sigma2=2.0, phi=1.0, tau2=0.2),
            spec=spec,
            cens_level=0.0,
            coord_box=((0.0, 6.0), (0.0, 6.0)),
            seed=20,
        )
    )
    data = res.data
    cfg = SaemConfig(
        m=10, max_iter=120, pc=0.2, init_sigma2=1.0, init_phi=1.0,
        init_nugget=0.1, lower=(0.05, 1e-4), upper=(20.0, 10.0), tol=0.0, seed=2,
    )
    fit = saem_fit(data, TrendSpec("cte"), spec, cfg)
    x = build_trend(data.coords, None, TrendSpec("cte"))
    beta_o, s2_o, phi_o, tau2_o, _ = gaussian_ml_oracle(
        data.value, x, distance_matrix(data.coords),
        lambda d, phi: correlation("exponential", 0.0, d, phi),
        init=[cfg.init_phi, cfg.init_nugget / cfg.init_sigma2],
        bounds=[(0.05, 20.0), (1e-4, 10.0)],
    )
    got = fit.params.as_array()
    want = np.array([beta_o[0], s2_o, phi_o, tau2_o])
    rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-8)
    report(
        "4 zero-censoring equivalence",
        rel.max() < 1e-4,
        f"max relative parameter gap {rel.max():.2e}",
        time.time() - t0,
        30,
    )


def test_criterion_5_exact_interpolation():
    """Kriging at the data sites reproduces the data when the nugget is 0."""
    t0 = time.time()
    rng = np.random.default_rng(7)
    coords = rng.uniform(0, 4, size=(12, 2))
    x = np.column_stack([np.ones(12), coords])
    beta = np.array([1.0, 0.5, -0.2])
    z = x @ beta + rng.normal(0, 1, 12)
    params = ModelParams(beta=beta, cov=CovParams(sigma2=1.5, phi=1.0, tau2=0.0))
    out = krige(params, x, z, coords, x, coords, CovarianceSpec("exponential"))
    gap = np.abs(out.mean - z).max()
    report(
        "5 exact interpolation",
        gap < 1e-8 and out.sd.max() <= 1e-6,
        f"max mean gap {gap:.1e}, max sd {out.sd.max():.1e}",
        time.time() - t0,
        1,
    )


@pytest.fixture(scope="module")
def clean_study_runs():
    return [run_study(seed, inject_three=False) for seed in range(700, 720)]


def test_criterion_6_parameter_recovery(clean_study_runs):
    """20 seeded censored simulations: coefficients inside 3 empirical SDs
    in >= 18 runs; range and sill medians within 30% of truth."""
    t0 = time.time()
    betas = np.array([fit.params.beta for fit, _, _ in clean_study_runs])
    phis = np.array([fit.params.cov.phi for fit, _, _ in clean_study_runs])
    s2s = np.array([fit.params.cov.sigma2 for fit, _, _ in clean_study_runs])
    sd = betas.std(axis=0, ddof=1)
    inside = (np.abs(betas - TRUE_BETA) <= 3 * sd).all(axis=1).sum()
    phi_err = abs(np.median(phis) / TRUE_COV.phi - 1.0)
    s2_err = abs(np.median(s2s) / TRUE_COV.sigma2 - 1.0)
    elapsed = time.time() - t0
    report(
        "6 parameter recovery",
        inside >= 18 and phi_err < 0.30 and s2_err < 0.30,
        f"beta inside 3SD in {inside}/20, median range err {phi_err:.0%}, "
        f"median sill err {s2_err:.0%}",
        elapsed,
        600,
    )


def test_criterion_7_influence_detection(clean_study_runs):
    """Three +5 sd outliers flagged by the response scheme in >= 90% of 20
    runs; clean-data mean flag rate <= 5%."""
    t0 = time.time()
    hits = 0
    for seed in range(600, 620):
        _, rep, targets = run_study(seed, inject_three=True, max_iter=25)
        diag = rep.response
        if diag is None:
            continue
        if set(targets.tolist()) <= set(diag.atypical.tolist()):
            hits += 1
    clean_rates = [
        rep.response.flags.mean()
        for _, rep, _ in clean_study_runs
        if rep.response is not None
    ]
    clean_rate = float(np.mean(clean_rates))
    report(
        "7 influence detection",
        hits >= 18 and clean_rate <= 0.05,
        f"all-three detection {hits}/20, clean flag rate {clean_rate:.1%}",
        time.time() - t0,
        600,
    )


def test_criterion_8_m0_identities():
    """M(0) sums to one and equals the conformal curvature directly."""
    t0 = time.time()
    worst_sum, worst_gap = 0.0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        k, n = 5, 15
        a = rng.normal(size=(k, k))
        hess = -(a @ a.T + k * np.eye(k))
        delta = rng.normal(size=(k, n))
        values = m0(hess, delta)
        worst_sum = max(worst_sum, abs(values.sum() - 1.0))
        f = curvature_matrix(hess, delta)
        worst_gap = max(worst_gap, np.abs(values - np.diag(f) / np.trace(f)).max())
    report(
        "8 M(0) identities",
        worst_sum < 1e-8 and worst_gap < 1e-10,
        f"sum gap {worst_sum:.1e}, conformal-curvature gap {worst_gap:.1e}",
        time.time() - t0,
        10,
    )


@pytest.mark.skipif(
    not os.path.exists(FIXTURE_RAINFALL),
    reason="rainfall fixture not present; criterion explicitly waived",
)
def test_criterion_9_rainfall_reproduction():
    """Conditional: reproduce the published rainfall workflow within
    tolerance when the 143-site fixture is available."""
    t0 = time.time()
    raw = np.loadtxt(FIXTURE_RAINFALL, delimiter=",", skiprows=1)
    coords, values = raw[:, :2], raw[:, 2]
    assert values.shape[0] == 143, "fixture must have 143 rows (x,y,value)"
    est_values = values[:100]
    k = int(np.ceil(0.25 * 100))
    order = np.argsort(est_values, kind="stable")
    lod = est_values[order[k - 1]]
    cens = np.zeros(100, dtype=int)
    cens[order[:k]] = 1
    vals = est_values.copy()
    vals[order[:k]] = lod
    data = SpatialDataset.from_censored(
        coords[:100], vals, cens, cens_type="left", limits=np.full(100, lod)
    )
    spec = CovarianceSpec("gaussian")
    cfg = SaemConfig(
        m=15, max_iter=200, pc=0.2, init_sigma2=68.0, init_phi=900.0,
        init_nugget=170.0, lower=(1e-4, 1e-4), upper=(5e4, 5e3), tol=1e-4, seed=1,
    )
    fit = saem_fit(data, TrendSpec("first"), spec, cfg)
    x_pred = build_trend(coords[100:], None, TrendSpec("first"))
    pred = predict_saem(fit, x_pred, coords[100:])
    rmspe = float(np.sqrt(mspe(values[100:], pred.mean)))

    # the censored-data log-likelihood at the published estimates
    published = ModelParams(
        beta=[367.1364, -0.0758, -0.3124],
        cov=CovParams(sigma2=832.6448, phi=211.2341, tau2=360.1578),
    )
    ll_pub = geocens.loglik(published, data, TrendSpec("first"), spec, rng=3)
    assert abs(ll_pub.value / -353.601 - 1.0) < 0.01, ll_pub.value

    want = {"beta0": 367.1364, "sigma2": 832.6448, "phi": 211.2341, "tau2": 360.1578}
    got = {
        "beta0": fit.params.beta[0],
        "sigma2": fit.params.cov.sigma2,
        "phi": fit.params.cov.phi,
        "tau2": fit.params.cov.tau2,
    }
    rel = {k: abs(got[k] / want[k] - 1.0) for k in want}
    ok = max(rel.values()) < 0.05 and abs(rmspe / 5.649 - 1.0) < 0.10
    report(
        "9 rainfall reproduction",
        ok,
        f"max param gap {max(rel.values()):.1%}, sqrt-MSPE {rmspe:.3f} vs 5.649",
        time.time() - t0,
        300,
    )


def test_criterion_10_cli_determinism(tmp_path):
    """Identical command + seed produce byte-identical files."""
    t0 = time.time()
    dirs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert cli_main([
            "simulate", "--n-est", "30", "--n-pred", "6", "--beta", "8",
            "--sigma2", "1.5", "--phi", "0.8", "--cens-level", "0.15",
            "--box", "0,5,0,5", "--seed", "11", "--out-dir", str(out),
        ]) == 0
        assert cli_main([
            "fit", "--data", str(out / "data.csv"), "--init-sigma2", "1.5",
            "--init-phi", "1", "--nugget", "0.1", "--m", "8", "--max-iter", "8",
            "--tol", "0", "--lower", "0.05,1e-4", "--upper", "20,10",
            "--seed", "9", "--out-dir", str(out),
        ]) == 0
        assert cli_main([
            "diagnose", "--fit", str(out / "fit.json"), "--out-dir", str(out),
        ]) == 0
        dirs.append(out)
    identical = True
    for name in sorted(os.listdir(dirs[0])):
        with open(dirs[0] / name, "rb") as fa, open(dirs[1] / name, "rb") as fb:
            if fa.read() != fb.read():
                identical = False
    report(
        "10 CLI determinism",
        identical,
        "simulate+fit+diagnose outputs byte-identical across reruns",
        time.time() - t0,
        60,
    )
