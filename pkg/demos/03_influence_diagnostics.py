"""Detect artificially inflated observations with local influence
diagnostics.

Three responses of a censored Matern field are shifted upward by five
response standard deviations; the per-observation curvature contributions
of the response-perturbation scheme should single them out.  Writes the
three index plots as SVG next to this script.
"""

import os

import numpy as np

from geocens import (
    CovarianceSpec,
    CovParams,
    SaemConfig,
    SimConfig,
    TrendSpec,
    inject_outliers,
    local_influence,
    saem_fit,
    simulate_scl,
)
from geocens.svg import influence_index_chart

# jittered-lattice sites: the spacing floor keeps the range parameter well
# identified and avoids near-coincident pairs that would dominate the
# curvature diagnostics
rng = np.random.default_rng(23)
side, spacing = 13, 0.45
g = np.arange(side) * spacing
xx, yy = np.meshgrid(g, g)
pts = np.column_stack([xx.ravel(), yy.ravel()])
pts = pts[rng.choice(pts.shape[0], 150, replace=False)]
coords = pts + rng.uniform(-0.07, 0.07, pts.shape)

spec = CovarianceSpec("matern", kappa=0.3, nugget_fixed=True, fixed_nugget_value=0.0)
sim = simulate_scl(
    SimConfig(
        n_est=150,
        n_pred=0,
        beta=[5.0, 3.0, 1.0],
        cov=CovParams(sigma2=3.0, phi=0.3, tau2=0.0),
        spec=spec,
        cens_level=0.15,
        trend=TrendSpec("other"),
        covariate_ranges=[(0.0, 1.0), (2.0, 3.0)],
        coords=coords,
        seed=23,
    )
)
data = sim.data
targets = np.flatnonzero(data.cens == 0)[[40, 75, 110]]
data = inject_outliers(data, targets, 5.0)
print("injected +5 sd at observations:", targets.tolist())

fit = saem_fit(
    data,
    TrendSpec("other"),
    spec,
    SaemConfig(
        m=15, max_iter=20, init_sigma2=2.0, init_phi=0.2,
        lower=(0.05,), upper=(6.0,), seed=5,
    ),
)
report = local_influence(fit, c_star=3.0)

out_dir = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(out_dir, exist_ok=True)
for name in ("response", "scale", "explanatory"):
    diag = report.scheme(name)
    if diag is None:
        print(f"{name}: failed ({report.errors[name]})")
        continue
    print(f"{name:12s} benchmark {diag.benchmark:.4f} "
          f"atypical {diag.atypical.tolist()}")
    path = os.path.join(out_dir, f"influence_{name}.svg")
    with open(path, "w") as handle:
        handle.write(influence_index_chart(diag.m0, diag.benchmark,
                                           f"{name} perturbation"))
    print(f"             index plot -> {path}")

hit = set(targets.tolist()) <= set(report.response.atypical.tolist())
print("\nall injected observations flagged by the response scheme:", hit)
