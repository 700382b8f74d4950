"""Batch command line interface.

Subcommands: ``simulate``, ``fit``, ``predict``, ``crossval``, ``diagnose``,
``variogram``.  All file outputs are written atomically (temp file plus
rename) and all randomness is governed by ``--seed``, so a repeated
command produces byte-identical outputs.

Exit codes: 0 success, 2 validation or schema error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__, svg
from .covariance import CovarianceSpec, CovParams, correlation, distance_matrix
from .errors import (
    ConfigurationError,
    DataValidationError,
    DegenerateCurvatureError,
    GeocensError,
    ModelSpecificationError,
    NumericalError,
    SingularCovarianceError,
    UnsupportedMethodError,
)
from .influence import local_influence
from .model import ModelParams, SpatialDataset, TrendSpec, build_trend, param_count
from .predict import (
    SeminaiveConfig,
    cross_validate,
    empirical_variogram,
    predict_naive,
    predict_saem,
    predict_seminaive,
    wls_variofit,
)
from .saem import SaemConfig, SaemFit, saem_fit
from .simulate import SimConfig, inject_outliers, simulate_scl

_VALIDATION_ERRORS = (
    ConfigurationError,
    DataValidationError,
    ModelSpecificationError,
    UnsupportedMethodError,
)
_NUMERICAL_ERRORS = (SingularCovarianceError, NumericalError, DegenerateCurvatureError)


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------


def _atomic_write(path: str, content: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v: float) -> str:
    return repr(float(v))


def _bound_cell(v: float) -> str:
    return "" if np.isinf(v) else repr(float(v))


def write_dataset_csv(path: str, data: SpatialDataset):
    buf = io.StringIO()
    w = csv.writer(buf)
    q = 0 if data.x_extra is None else data.x_extra.shape[1]
    w.writerow(["x", "y", "value", "cens", "lower", "upper"] + [f"cov{i+1}" for i in range(q)])
    for i in range(data.n):
        row = [
            _cell(data.coords[i, 0]),
            _cell(data.coords[i, 1]),
            _cell(data.value[i]),
            str(int(data.cens[i])),
            _bound_cell(data.lower[i]),
            _bound_cell(data.upper[i]),
        ]
        if q:
            row += [_cell(v) for v in data.x_extra[i]]
        w.writerow(row)
    _atomic_write(path, buf.getvalue())


def read_dataset_csv(path: str) -> SpatialDataset:
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise DataValidationError(f"{path}: empty file")
    header = rows[0]
    base = ["x", "y", "value", "cens", "lower", "upper"]
    if header[: len(base)] != base:
        raise DataValidationError(
            f"{path}: expected columns {base}[,cov1..], got {header}"
        )
    extra_names = header[len(base) :]
    for j, name in enumerate(extra_names):
        if name != f"cov{j+1}":
            raise DataValidationError(f"{path}: unknown column {name!r}")
    coords, value, cens, lower, upper, covs = [], [], [], [], [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataValidationError(f"{path}:{r}: wrong field count")
        try:
            coords.append((float(row[0]), float(row[1])))
            value.append(float(row[2]))
            cens.append(int(row[3]))
            lower.append(float(row[4]) if row[4] != "" else -np.inf)
            upper.append(float(row[5]) if row[5] != "" else np.inf)
            covs.append([float(v) for v in row[6:]])
        except ValueError as exc:
            raise DataValidationError(f"{path}:{r}: {exc}") from exc
    cens = np.array(cens)
    lower = np.array(lower)
    upper = np.array(upper)
    is_c = cens == 1
    if not is_c.any():
        cens_type = "left"
    elif np.all(np.isneginf(lower[is_c])):
        cens_type = "left"
    elif np.all(np.isposinf(upper[is_c])):
        cens_type = "right"
    else:
        cens_type = "interval"
    return SpatialDataset(
        coords=np.array(coords),
        value=np.array(value),
        cens=cens,
        lower=lower,
        upper=upper,
        x_extra=np.array(covs) if extra_names else None,
        cens_type=cens_type,
    )


def read_targets_csv(path: str):
    """Targets file: ``x,y[,cov1..covq]``."""
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows or rows[0][:2] != ["x", "y"]:
        raise DataValidationError(f"{path}: expected columns x,y[,cov1..]")
    q = len(rows[0]) - 2
    coords, covs = [], []
    for r, row in enumerate(rows[1:], start=2):
        try:
            coords.append((float(row[0]), float(row[1])))
            covs.append([float(v) for v in row[2:]])
        except (ValueError, IndexError) as exc:
            raise DataValidationError(f"{path}:{r}: {exc}") from exc
    return np.array(coords), (np.array(covs) if q else None)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def _bounds_list(arr):
    return [None if np.isinf(v) else float(v) for v in arr]


def write_json(path: str, payload: dict):
    _atomic_write(path, json.dumps(payload, indent=1, default=_json_default) + "\n")


# ---------------------------------------------------------------------------
# shared option plumbing
# ---------------------------------------------------------------------------


def _add_model_options(p: argparse.ArgumentParser):
    p.add_argument("--trend", choices=["cte", "first", "other"], default="cte")
    p.add_argument(
        "--cov-model",
        choices=["exponential", "gaussian", "spherical", "matern", "powered-exponential"],
        default="exponential",
    )
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--fix-nugget", action="store_true")
    p.add_argument("--nugget", type=float, default=0.0,
                   help="fixed nugget value (with --fix-nugget) or initial nugget")


def _add_saem_options(p: argparse.ArgumentParser):
    p.add_argument("--init-sigma2", type=float, default=None)
    p.add_argument("--init-phi", type=float, default=None)
    p.add_argument("--lower", type=str, default="1e-4,1e-4",
                   help="search box lower bounds phi[,nu2]")
    p.add_argument("--upper", type=str, default="1e4,1e4",
                   help="search box upper bounds phi[,nu2]")
    p.add_argument("--m", type=int, default=15)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--pc", type=float, default=0.2)
    p.add_argument("--tol", type=float, default=1e-4)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigurationError(f"expected comma-separated numbers, got {text!r}") from exc


def _spec_from_args(args) -> CovarianceSpec:
    return CovarianceSpec(
        family=args.cov_model,
        kappa=args.kappa,
        nugget_fixed=args.fix_nugget,
        fixed_nugget_value=args.nugget if args.fix_nugget else 0.0,
    )


def _saem_config_from_args(args) -> SaemConfig:
    lower, upper = _floats(args.lower), _floats(args.upper)
    if args.fix_nugget:
        lower, upper = lower[:1], upper[:1]
    return SaemConfig(
        m=args.m,
        max_iter=args.max_iter,
        pc=args.pc,
        init_sigma2=args.init_sigma2,
        init_phi=args.init_phi,
        init_nugget=None if args.fix_nugget else args.nugget,
        lower=lower,
        upper=upper,
        tol=args.tol,
        seed=args.seed,
    )


def _out(args, name: str) -> str:
    return os.path.join(args.out_dir, name)


# ---------------------------------------------------------------------------
# fit serialization
# ---------------------------------------------------------------------------


def _dataset_payload(data: SpatialDataset) -> dict:
    return {
        "coords": data.coords,
        "value": data.value,
        "cens": data.cens,
        "lower": _bounds_list(data.lower),
        "upper": _bounds_list(data.upper),
        "x_extra": None if data.x_extra is None else data.x_extra,
        "cens_type": data.cens_type,
    }


def _dataset_from_payload(payload: dict) -> SpatialDataset:
    lower = np.array([-np.inf if v is None else v for v in payload["lower"]])
    upper = np.array([np.inf if v is None else v for v in payload["upper"]])
    return SpatialDataset(
        coords=np.array(payload["coords"]),
        value=np.array(payload["value"]),
        cens=np.array(payload["cens"]),
        lower=lower,
        upper=upper,
        x_extra=None if payload["x_extra"] is None else np.array(payload["x_extra"]),
        cens_type=payload["cens_type"],
    )


def fit_summary_text(fit: SaemFit) -> str:
    """Human-readable account of a completed fit."""
    trend_desc = {
        "cte": "constant (mu = b0)",
        "first": "linear in coordinates (mu = b0 + b1*x + b2*y)",
        "other": "intercept plus user covariates",
    }[fit.trend.kind]
    spec = fit.spec
    fam = spec.family + (f" (kappa = {spec.kappa:g})" if spec.family in ("matern", "powered-exponential") else "")
    lines = [
        "-" * 64,
        " Spatial censored linear model -- stochastic EM estimates",
        "-" * 64,
        f"Trend       : {trend_desc}",
        f"Covariance  : {fam}" + ("  [nugget fixed]" if spec.nugget_fixed else ""),
        "",
        "Estimates",
    ]
    for j, b in enumerate(fit.params.beta):
        lines.append(f"  beta{j:<6} {b:12.4f}")
    lines.append(f"  sigma2     {fit.params.cov.sigma2:12.4f}")
    lines.append(f"  phi        {fit.params.cov.phi:12.4f}")
    lines.append(f"  tau2       {fit.params.cov.tau2:12.4f}")
    aicc = "" if fit.aicc is None else f"  AICc {fit.aicc:.6g}"
    lines += [
        "",
        f"Loglik {fit.loglik.value:.6g}  AIC {fit.aic:.6g}  BIC {fit.bic:.6g}{aicc}",
        "",
        f"Censoring   : {fit.data.cens_type}, {fit.data.n_censored} of {fit.data.n} sites",
        f"Converged   : {fit.converged} ({fit.iterations_used}/{fit.config.max_iter} iterations)",
        f"MC sample   : {fit.config.m}   cut point: {fit.config.pc}",
        "-" * 64,
    ]
    return "\n".join(lines)


def fit_to_payload(fit: SaemFit) -> dict:
    cfg = fit.config
    return {
        "tool": "geocens",
        "version": __version__,
        "kind": "fit",
        "config": {
            "m": cfg.m,
            "max_iter": cfg.max_iter,
            "pc": cfg.pc,
            "perc": cfg.perc,
            "init_sigma2": cfg.init_sigma2,
            "init_phi": cfg.init_phi,
            "init_nugget": cfg.init_nugget,
            "lower": list(cfg.lower),
            "upper": list(cfg.upper),
            "tol": cfg.tol,
            "seed": cfg.seed,
            "trend": fit.trend.kind,
            "cov_model": fit.spec.family,
            "kappa": fit.spec.kappa,
            "fix_nugget": fit.spec.nugget_fixed,
            "nugget": fit.spec.fixed_nugget_value,
        },
        "dataset_fingerprint": fit.fingerprint,
        "params": {
            "beta": fit.params.beta,
            "sigma2": fit.params.cov.sigma2,
            "phi": fit.params.cov.phi,
            "tau2": fit.params.cov.tau2,
        },
        "loglik": fit.loglik.value,
        "loglik_se": fit.loglik.se,
        "aic": fit.aic,
        "bic": fit.bic,
        "aicc": fit.aicc,
        "converged": fit.converged,
        "iterations_used": fit.iterations_used,
        "trace_params": fit.trace_params,
        "trace_loglik": [None if not np.isfinite(v) else v for v in fit.trace_loglik],
        "zhat": fit.zhat,
        "zzhat": fit.zzhat,
        "dataset": _dataset_payload(fit.data),
        "summary": fit_summary_text(fit),
    }


def fit_from_payload(payload: dict) -> SaemFit:
    if payload.get("kind") != "fit":
        raise DataValidationError("not a fit file")
    cfg_d = payload["config"]
    data = _dataset_from_payload(payload["dataset"])
    spec = CovarianceSpec(
        family=cfg_d["cov_model"],
        kappa=cfg_d["kappa"],
        nugget_fixed=cfg_d["fix_nugget"],
        fixed_nugget_value=cfg_d["nugget"],
    )
    trend = TrendSpec(cfg_d["trend"])
    params = ModelParams(
        beta=np.array(payload["params"]["beta"]),
        cov=CovParams(
            sigma2=payload["params"]["sigma2"],
            phi=payload["params"]["phi"],
            tau2=payload["params"]["tau2"],
        ),
    )
    config = SaemConfig(
        m=cfg_d["m"],
        max_iter=cfg_d["max_iter"],
        pc=cfg_d["pc"],
        perc=cfg_d["perc"],
        init_sigma2=cfg_d["init_sigma2"],
        init_phi=cfg_d["init_phi"],
        init_nugget=cfg_d["init_nugget"],
        lower=tuple(cfg_d["lower"]),
        upper=tuple(cfg_d["upper"]),
        tol=cfg_d["tol"],
        seed=cfg_d["seed"],
    )
    from .model import LogLik, criteria

    x = build_trend(data.coords, data.x_extra, trend)
    ll = LogLik(value=payload["loglik"])
    crit = criteria(ll.value, param_count(x.shape[1], spec.nugget_fixed), data.n)
    trace_ll = np.array(
        [np.nan if v is None else v for v in payload["trace_loglik"]], dtype=float
    )
    return SaemFit(
        params=params,
        zhat=np.array(payload["zhat"]),
        zzhat=np.array(payload["zzhat"]),
        loglik=ll,
        criteria=crit,
        trace_params=np.array(payload["trace_params"]),
        trace_loglik=trace_ll,
        converged=payload["converged"],
        iterations_used=payload["iterations_used"],
        config=config,
        data=data,
        trend=trend,
        spec=spec,
        x=x,
        dist=distance_matrix(data.coords),
        fingerprint=payload["dataset_fingerprint"],
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    trend = TrendSpec(args.trend)
    ranges = None
    if args.covariate_ranges:
        ranges = []
        for pair in args.covariate_ranges.split(","):
            lo, _, hi = pair.partition(":")
            ranges.append((float(lo), float(hi)))
    box = _floats(args.box)
    if len(box) != 4:
        raise ConfigurationError("--box needs x0,x1,y0,y1")
    cfg = SimConfig(
        n_est=args.n_est,
        n_pred=args.n_pred,
        beta=_floats(args.beta),
        cov=CovParams(sigma2=args.sigma2, phi=args.phi, tau2=args.tau2),
        spec=spec,
        cens_level=args.cens_level,
        cens_type=args.cens_type,
        trend=trend,
        coord_box=((box[0], box[1]), (box[2], box[3])),
        covariate_ranges=ranges,
        seed=args.seed,
    )
    res = simulate_scl(cfg)
    data = res.data
    if args.outlier_indices:
        idx = [int(v) for v in args.outlier_indices.split(",")]
        data = inject_outliers(data, idx, args.outlier_sd)
    write_dataset_csv(_out(args, "data.csv"), data)

    buf = io.StringIO()
    w = csv.writer(buf)
    q = 0 if res.pred_x_extra is None else res.pred_x_extra.shape[1]
    w.writerow(["x", "y", "value"] + [f"cov{i+1}" for i in range(q)])
    for i in range(res.pred_coords.shape[0]):
        row = [
            _cell(res.pred_coords[i, 0]),
            _cell(res.pred_coords[i, 1]),
            _cell(res.pred_z[i]),
        ]
        if q:
            row += [_cell(v) for v in res.pred_x_extra[i]]
        w.writerow(row)
    _atomic_write(_out(args, "truth.csv"), buf.getvalue())

    write_json(
        _out(args, "manifest.json"),
        {
            "tool": "geocens",
            "version": __version__,
            "kind": "simulate",
            "config": {
                "n_est": args.n_est,
                "n_pred": args.n_pred,
                "beta": list(_floats(args.beta)),
                "sigma2": args.sigma2,
                "phi": args.phi,
                "tau2": args.tau2,
                "cov_model": args.cov_model,
                "kappa": args.kappa,
                "cens_level": args.cens_level,
                "cens_type": args.cens_type,
                "trend": args.trend,
                "box": list(box),
                "covariate_ranges": args.covariate_ranges,
                "outlier_indices": args.outlier_indices,
                "outlier_sd": args.outlier_sd,
                "seed": args.seed,
            },
            "lod": res.lod,
            "n_censored": int(data.n_censored),
            "dataset_fingerprint": data.fingerprint(),
            "files": ["data.csv", "truth.csv"],
        },
    )
    print(f"wrote data.csv ({data.n} rows, {data.n_censored} censored), truth.csv "
          f"({res.pred_coords.shape[0]} rows) to {args.out_dir}")
    return 0


def cmd_fit(args) -> int:
    data = read_dataset_csv(args.data)
    spec = _spec_from_args(args)
    trend = TrendSpec(args.trend)
    config = _saem_config_from_args(args)
    fit = saem_fit(data, trend, spec, config)
    write_json(_out(args, "fit.json"), fit_to_payload(fit))
    print(fit_summary_text(fit))
    print(f"wrote fit.json to {args.out_dir}")
    return 0


def _grid_axes(coords: np.ndarray):
    xs = np.unique(coords[:, 0])
    ys = np.unique(coords[:, 1])
    if xs.size * ys.size != coords.shape[0]:
        return None
    want = {(float(a), float(b)) for a in xs for b in ys}
    have = {(float(a), float(b)) for a, b in coords}
    return (xs, ys) if want == have else None


def cmd_predict(args) -> int:
    coords_pred, x_extra_pred = read_targets_csv(args.targets)
    if args.method == "saem":
        if not args.fit:
            raise ConfigurationError("method saem requires --fit")
        with open(args.fit) as handle:
            fit = fit_from_payload(json.load(handle))
        x_pred = build_trend(coords_pred, x_extra_pred, fit.trend)
        result = predict_saem(fit, x_pred, coords_pred)
    else:
        if not args.data:
            raise ConfigurationError(f"method {args.method} requires --data")
        data = read_dataset_csv(args.data)
        spec = _spec_from_args(args)
        trend = TrendSpec(args.trend)
        init = None
        if args.init_sigma2 is not None and args.init_phi is not None:
            init = CovParams(
                sigma2=args.init_sigma2, phi=args.init_phi,
                tau2=args.nugget if not args.fix_nugget else args.nugget,
            )
        if args.method in ("naive1", "naive2"):
            result = predict_naive(
                data, trend, spec, args.method, coords_pred, x_extra_pred, init
            )
        elif args.method == "seminaive":
            result = predict_seminaive(
                data, trend, spec, coords_pred, x_extra_pred,
                SeminaiveConfig(max_iter=args.semi_max_iter), init,
            )
        else:
            raise ConfigurationError(f"unknown method {args.method!r}")

    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["x", "y", "mean", "sd"])
    for i in range(coords_pred.shape[0]):
        w.writerow(
            [
                _cell(coords_pred[i, 0]),
                _cell(coords_pred[i, 1]),
                _cell(result.mean[i]),
                _cell(result.sd[i]),
            ]
        )
    _atomic_write(_out(args, "predictions.csv"), buf.getvalue())

    truth = None
    if args.truth:
        with open(args.truth, newline="") as handle:
            rows = list(csv.reader(handle))
        truth = np.array([float(r[2]) for r in rows[1:]])
    _atomic_write(
        _out(args, "predictions.svg"),
        svg.prediction_band_chart(
            result.mean, result.sd, truth=truth,
            title=f"{args.method} predictions with 95% bands",
        ),
    )
    grid = _grid_axes(coords_pred)
    if grid is not None:
        xs, ys = grid
        order = np.lexsort((coords_pred[:, 0], coords_pred[:, 1]))
        _atomic_write(
            _out(args, "prediction_mean_grid.svg"),
            svg.intensity_chart(xs, ys, result.mean[order], "predicted mean"),
        )
        _atomic_write(
            _out(args, "prediction_sd_grid.svg"),
            svg.intensity_chart(xs, ys, result.sd[order], "prediction sd"),
        )
    print(f"wrote predictions.csv and SVG plots to {args.out_dir}")
    return 0


def cmd_crossval(args) -> int:
    data = read_dataset_csv(args.data)
    spec = _spec_from_args(args)
    trend = TrendSpec(args.trend)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    saem_config = _saem_config_from_args(args) if "saem" in methods else None
    init = None
    if args.init_sigma2 is not None and args.init_phi is not None:
        init = CovParams(sigma2=args.init_sigma2, phi=args.init_phi, tau2=args.nugget)
    reports = cross_validate(
        data, trend, spec, args.n_est, methods,
        saem_config=saem_config,
        seminaive_config=SeminaiveConfig(max_iter=args.semi_max_iter),
        init=init,
        eval_seed=args.seed + 101,
    )
    buf = io.StringIO()
    w = csv.writer(buf)
    p = len(reports[0].params.beta)
    w.writerow(
        [f"beta{i}" for i in range(p)]
        + ["sigma2", "phi", "tau2", "loglik", "aic", "bic", "rmspe"]
        + ["method"]
    )
    for rep in reports:
        w.writerow(
            [_cell(b) for b in rep.params.beta]
            + [
                _cell(rep.params.cov.sigma2),
                _cell(rep.params.cov.phi),
                _cell(rep.params.cov.tau2),
                _cell(rep.loglik),
                _cell(rep.aic),
                _cell(rep.bic),
                _cell(rep.rmspe),
            ]
            + [rep.method]
        )
    _atomic_write(_out(args, "mspe_table.csv"), buf.getvalue())
    for rep in reports:
        print(f"{rep.method:10s} loglik {rep.loglik:12.3f}  AIC {rep.aic:10.3f}  "
              f"BIC {rep.bic:10.3f}  sqrt(MSPE) {rep.rmspe:8.3f}")
    print(f"wrote mspe_table.csv to {args.out_dir}")
    return 0


def cmd_diagnose(args) -> int:
    with open(args.fit) as handle:
        fit = fit_from_payload(json.load(handle))
    if args.data:
        data = read_dataset_csv(args.data)
        if data.fingerprint() != fit.fingerprint:
            raise DataValidationError("--data does not match the fit's dataset")
    report = local_influence(fit, c_star=args.c_star)
    payload = {
        "tool": "geocens",
        "version": __version__,
        "kind": "influence",
        "c_star": args.c_star,
        "dataset_fingerprint": fit.fingerprint,
        "schemes": {},
        "errors": report.errors,
    }
    for name in ("response", "scale", "explanatory"):
        diag = report.scheme(name)
        if diag is None:
            payload["schemes"][name] = None
            continue
        payload["schemes"][name] = {
            "m0": diag.m0,
            "benchmark": diag.benchmark,
            "flags": diag.flags.astype(int),
            "atypical": diag.atypical,
            "rank": diag.rank,
            "top_eigenvalues": diag.top_eigenvalues,
        }
        _atomic_write(
            _out(args, f"m0_{name}.svg"),
            svg.influence_index_chart(
                diag.m0, diag.benchmark, f"{name} perturbation"
            ),
        )
        flagged = ", ".join(str(i) for i in diag.atypical) or "none"
        print(f"{name:12s} benchmark {diag.benchmark:.5f}  atypical: {flagged}")
    write_json(_out(args, "influence.json"), payload)
    print(f"wrote influence.json and index plots to {args.out_dir}")
    return 0


def cmd_variogram(args) -> int:
    data = read_dataset_csv(args.data)
    vario = empirical_variogram(
        data.coords, data.value, n_bins=args.bins, max_dist=args.max_dist
    )
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["center", "semivariance", "count"])
    for c, g, n in zip(vario.centers, vario.gamma, vario.counts):
        w.writerow([_cell(c), _cell(g), str(int(n))])
    _atomic_write(_out(args, "variogram.csv"), buf.getvalue())

    curve_h = curve_g = None
    try:
        spec = _spec_from_args(args)
        fit = wls_variofit(vario, spec)
        curve_h = np.linspace(1e-6, vario.centers.max(), 120)
        curve_g = fit.tau2 + fit.sigma2 * (
            1.0 - correlation(spec.family, spec.kappa, curve_h, fit.phi)
        )
        print(f"fitted curve: sigma2 {fit.sigma2:.4f}  phi {fit.phi:.4f}  tau2 {fit.tau2:.4f}")
    except GeocensError as exc:
        print(f"variogram curve fit skipped: {exc}", file=sys.stderr)
    _atomic_write(
        _out(args, "variogram.svg"),
        svg.variogram_chart(vario.centers, vario.gamma, curve_h, curve_g),
    )
    print(f"wrote variogram.csv and variogram.svg to {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geocens",
        description="Estimation, prediction, and influence diagnostics for "
        "censored spatial data.",
    )
    parser.add_argument("--version", action="version", version=f"geocens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", type=str, default=".")

    p = sub.add_parser("simulate", help="generate a censored dataset plus hold-out truth")
    common(p)
    _add_model_options(p)
    p.add_argument("--n-est", type=int, required=True)
    p.add_argument("--n-pred", type=int, default=0)
    p.add_argument("--beta", type=str, required=True, help="comma-separated")
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--tau2", type=float, default=0.0)
    p.add_argument("--cens-level", type=float, default=0.0)
    p.add_argument("--cens-type", choices=["left", "right"], default="left")
    p.add_argument("--box", type=str, default="0,1,0,1", help="x0,x1,y0,y1")
    p.add_argument("--covariate-ranges", type=str, default=None, help="lo:hi,lo:hi")
    p.add_argument("--outlier-indices", type=str, default=None)
    p.add_argument("--outlier-sd", type=float, default=5.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="stochastic EM fit of the censored spatial model")
    common(p)
    _add_model_options(p)
    _add_saem_options(p)
    p.add_argument("--data", type=str, required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="spatial prediction at target locations")
    common(p)
    _add_model_options(p)
    p.add_argument("--method", choices=["naive1", "naive2", "seminaive", "saem"],
                   required=True)
    p.add_argument("--targets", type=str, required=True)
    p.add_argument("--fit", type=str, default=None, help="fit.json (saem method)")
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--truth", type=str, default=None,
                   help="optional truth CSV overlaid on the band plot")
    p.add_argument("--init-sigma2", type=float, default=None)
    p.add_argument("--init-phi", type=float, default=None)
    p.add_argument("--semi-max-iter", type=int, default=20)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("crossval", help="hold-out comparison of the four methods")
    common(p)
    _add_model_options(p)
    _add_saem_options(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--n-est", type=int, required=True,
                   help="first n rows estimate; the rest are scored")
    p.add_argument("--methods", type=str, default="naive1,naive2,seminaive,saem")
    p.add_argument("--semi-max-iter", type=int, default=20)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("diagnose", help="local influence diagnostics of a fit")
    common(p)
    p.add_argument("--fit", type=str, required=True)
    p.add_argument("--data", type=str, default=None,
                   help="optional dataset CSV checked against the fit fingerprint")
    p.add_argument("--c-star", type=float, default=3.0)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("variogram", help="empirical variogram with a fitted curve")
    common(p)
    _add_model_options(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--bins", type=int, default=13)
    p.add_argument("--max-dist", type=float, default=None)
    p.set_defaults(func=cmd_variogram)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (json.JSONDecodeError, KeyError) as exc:
        print(f"error: malformed input file ({exc})", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
