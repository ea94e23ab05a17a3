"""Command-line front end.

Subcommands: glasso, netglasso, spikeslab, simulate, cv, lincheck.  Inputs
are CSV files with headers; configuration comes from an optional flat
key=value file with command-line flags taking precedence.  All randomness
flows from the single required seed, and identical configurations produce
byte-identical outputs (floats are written with 10 significant digits).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

import argparse
import csv
import itertools
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    CovariateMatrix,
    DataMatrix,
    NetworkStack,
    NotPositiveDefiniteError,
    partial_corr_of,
    residualize,
    sample_cov,
)
from .golazo import EDGE_TOL, GolazoConvergenceError, PenaltyModel, count_edges, solve
from .hmc import McmcConfig, SamplerError
from .inference import (
    StageOneDiagnosticsError,
    TwoStageConfig,
    eta_intervals,
    two_stage_fit,
)
from .npn import apply_npn, fit_npn
from .selection import GridSpec, bayes_opt, cv_loglik, grid_search
from .simulate import SimDesign, run_benchmark, write_benchmark_csv, write_manifest
from .spikeslab import slab_terms

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

FLOAT_FMT = "%.10g"


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_matrix_csv(path, kind):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{kind} file {path} is empty")
            rows = list(reader)
    except OSError as err:
        raise ConfigError(f"cannot read {kind} file {path}: {err}")
    header = [h.strip() for h in header]
    data = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(
                f"{kind} file {path}: row {i + 1} has {len(row)} cells, "
                f"expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{kind} file {path}: non-numeric cell at row {i + 1}, "
                    f"column {header[j]!r}")
            if not np.isfinite(v):
                raise DataError(
                    f"{kind} file {path}: non-finite cell at row {i + 1}, "
                    f"column {header[j]!r}")
            data[i, j] = v
    return header, data


# ---------------------------------------------------------------------------
# configuration

CONFIG_KEYS = {
    "data", "covariates", "networks", "out", "seed", "criterion", "ebic_gamma",
    "optimizer", "grid_beta0", "grid_betaq", "beta0_span", "betaq_min",
    "betaq_max", "budget", "folds", "alpha", "threshold", "nonparanormal",
    "threads", "warmup", "samples", "thin", "chains", "leapfrog", "target_accept",
    "stage2_warmup", "stage2_samples", "design", "p", "n", "replicates",
    "methods", "beta", "timings", "full_bench", "bins",
}


def load_config_file(path):
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}")
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def build_parser():
    parser = argparse.ArgumentParser(
        prog="netggm",
        description="Gaussian graphical models regressed on external networks")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, data_required=True):
        p.add_argument("--config", help="flat key=value config file; flags win")
        p.add_argument("--data", help="n x p data CSV with headers")
        p.add_argument("--covariates", help="n x d covariate CSV (optional)")
        p.add_argument("--networks", help="comma-separated p x p network CSVs")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed (required)")
        p.add_argument("--nonparanormal", action="store_true", default=None,
                       help="apply the Gaussianizing transform after residualization")
        p.add_argument("--threads", type=int,
                       help="worker threads for folds/replicates "
                            "(NETGGM_THREADS overrides the default)")

    def add_select(p):
        p.add_argument("--criterion", choices=["bic", "ebic"])
        p.add_argument("--ebic-gamma", dest="ebic_gamma", type=float)
        p.add_argument("--optimizer", choices=["grid", "bayesopt"])
        p.add_argument("--grid-beta0", dest="grid_beta0", type=int)
        p.add_argument("--grid-betaq", dest="grid_betaq", type=int)
        p.add_argument("--beta0-span", dest="beta0_span", type=float)
        p.add_argument("--betaq-min", dest="betaq_min", type=float)
        p.add_argument("--betaq-max", dest="betaq_max", type=float)
        p.add_argument("--budget", type=int, help="bayesopt evaluation budget")
        p.add_argument("--folds", type=int, help="CV folds for the comparison table")

    p = sub.add_parser("glasso", help="single-penalty graphical LASSO")
    add_common(p)
    add_select(p)

    p = sub.add_parser("netglasso", help="network graphical LASSO over the "
                                         "network-inclusion lattice")
    add_common(p)
    add_select(p)

    p = sub.add_parser("spikeslab", help="network spike-and-slab via MCMC")
    add_common(p)
    p.add_argument("--warmup", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--leapfrog", type=int)
    p.add_argument("--target-accept", dest="target_accept", type=float)
    p.add_argument("--stage2-warmup", dest="stage2_warmup", type=int)
    p.add_argument("--stage2-samples", dest="stage2_samples", type=int)
    p.add_argument("--threshold", type=float, help="edge inclusion threshold")
    p.add_argument("--alpha", type=float,
                   help="expected-FDR level (overrides the fixed threshold)")

    p = sub.add_parser("simulate", help="benchmark harness")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--design", choices=["independent", "mild", "strong"])
    p.add_argument("--p", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--methods", help="comma list: glasso,netglasso,spikeslab")
    p.add_argument("--timings", action="store_true", default=None,
                   help="record wall times in the manifest (breaks "
                        "byte-identical reruns)")
    p.add_argument("--full-bench", dest="full_bench", action="store_true",
                   default=None, help="include the p=50 rows")
    p.add_argument("--threads", type=int)

    p = sub.add_parser("cv", help="10-fold CV log-likelihood at a given beta")
    add_common(p)
    p.add_argument("--beta", help="comma-separated beta values (b0[,b1,...])")
    p.add_argument("--folds", type=int)

    p = sub.add_parser("lincheck", help="log-variance linearity diagnostic")
    add_common(p)
    add_select(p)
    p.add_argument("--bins", type=int, help="equispaced network-value bins")
    return parser


def resolve_options(args):
    """Merge the config file under the flags (flags win) and validate."""
    opts = {}
    if getattr(args, "config", None):
        opts.update(load_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("config", "subcommand"):
            continue
        if value is not None:
            opts[key] = value
    # normalize types for values arriving via the config file
    ints = ("seed", "grid_beta0", "grid_betaq", "budget", "folds", "warmup",
            "samples", "thin", "chains", "leapfrog", "stage2_warmup",
            "stage2_samples", "p", "n", "replicates", "threads", "bins")
    floats = ("ebic_gamma", "beta0_span", "betaq_min", "betaq_max", "alpha",
              "threshold", "target_accept")
    for key in ints:
        if key in opts and opts[key] is not None:
            opts[key] = int(opts[key])
    for key in floats:
        if key in opts and opts[key] is not None:
            opts[key] = float(opts[key])
    for key in ("nonparanormal", "timings", "full_bench"):
        if key in opts and isinstance(opts[key], str):
            opts[key] = opts[key].lower() in ("1", "true", "yes", "on")
    if "threads" not in opts or opts["threads"] is None:
        opts["threads"] = int(os.environ.get("NETGGM_THREADS", "1"))
    if opts.get("seed") is None:
        raise ConfigError("a seed is required for reproducibility (--seed)")
    if not opts.get("out"):
        raise ConfigError("an output directory is required (--out)")
    return opts


def ingest(opts):
    """Load, validate and prepare the inputs.

    Residualization happens first when covariates are given; the
    nonparanormal transform applies afterwards when requested.
    """
    if not opts.get("data"):
        raise ConfigError("a data CSV is required (--data)")
    header, values = read_matrix_csv(opts["data"], "data")
    try:
        y = DataMatrix(values=values, column_names=header)
    except ValueError as err:
        raise DataError(f"data file {opts['data']}: {err}")

    covariates = None
    if opts.get("covariates"):
        _, xv = read_matrix_csv(opts["covariates"], "covariates")
        if xv.shape[0] != y.n:
            raise DataError(
                f"covariates have {xv.shape[0]} rows, data has {y.n}")
        try:
            covariates = CovariateMatrix(values=xv, intercept=True)
            y = residualize(y, covariates)
        except ValueError as err:
            raise DataError(f"covariates: {err}")

    networks = None
    paths = [s for s in (opts.get("networks") or "").split(",") if s]
    if len(set(paths)) != len(paths):
        raise ConfigError("network paths must be distinct")
    if paths:
        mats, names = [], []
        for path in paths:
            net_header, nv = read_matrix_csv(path, "network")
            if nv.shape[0] != y.p or nv.shape[1] != y.p:
                raise DataError(
                    f"network {path} is {nv.shape[0]}x{nv.shape[1]}, "
                    f"data has p={y.p}")
            if net_header != list(y.column_names):
                raise DataError(f"network {path}: column order mismatch")
            asym = np.max(np.abs(nv - nv.T))
            if asym > 1e-8:
                i, j = np.unravel_index(np.argmax(np.abs(nv - nv.T)), nv.shape)
                raise DataError(
                    f"network {path} is not symmetric at ({y.column_names[i]}, "
                    f"{y.column_names[j]}): |a_ij - a_ji| = {asym:.3g}")
            mats.append(nv)
            names.append(Path(path).stem)
        try:
            networks = NetworkStack(raw=tuple(mats), names=tuple(names))
        except ValueError as err:
            raise DataError(str(err))

    if opts.get("nonparanormal"):
        y = apply_npn(fit_npn(y), y)
    return y, covariates, networks


# ---------------------------------------------------------------------------
# output writers


def write_edge_list(path, column_names, rho, report=None, edge_tol=EDGE_TOL):
    p = rho.shape[0]
    iu = np.triu_indices(p, 1)
    header = ["node_i", "node_j", "partial_corr", "posterior_slab_prob",
              "selected_0.5", "selected_0.95"]
    rows = []
    if report is None:
        for j, k in zip(*iu):
            nz = abs(rho[j, k]) >= edge_tol
            rows.append([column_names[j], column_names[k], rho[j, k], "",
                         nz, nz])
    else:
        probs = report.posterior_slab_prob
        for e, (j, k) in enumerate(zip(*iu)):
            rows.append([column_names[j], column_names[k], rho[j, k],
                         probs[e], probs[e] >= 0.5, probs[e] >= 0.95])
    write_csv(path, header, rows)


def _subset_label(names, subset):
    return "none" if not subset else "&".join(names[q] for q in subset)


def run_lattice(y, networks, opts, outdir):
    """Fit every network subset, write the Tables-2/4-shaped comparison CSV."""
    S = sample_cov(y)
    n = y.n
    criterion = opts.get("criterion", "bic")
    gamma = opts.get("ebic_gamma", 0.5)
    folds = opts.get("folds", 10)
    seed = opts["seed"]
    names = networks.names if networks is not None else ()
    q = len(names)
    subsets = [tuple(c) for r in range(q + 1)
               for c in itertools.combinations(range(q), r)]
    spec = GridSpec(
        n_beta0=opts.get("grid_beta0", 50),
        beta0_span=opts.get("beta0_span", 6.0),
        n_betaq=opts.get("grid_betaq", 50),
        betaq_range=(opts.get("betaq_min", -3.0), opts.get("betaq_max", 3.0)))

    def fit_subset(subset):
        sub_nets = None
        if subset:
            sub_nets = NetworkStack(
                raw=tuple(networks.raw[i] for i in subset),
                names=tuple(names[i] for i in subset))
        optimizer = opts.get("optimizer") or ("grid" if len(subset) <= 1 else "bayesopt")
        if optimizer == "grid":
            res = grid_search(S, sub_nets, n, criterion=criterion,
                              grid_spec=spec, ebic_gamma=gamma)
        else:
            res = bayes_opt(S, sub_nets, n, criterion=criterion,
                            budget=opts.get("budget"), ebic_gamma=gamma,
                            seed=seed, beta0_span=opts.get("beta0_span", 6.0),
                            betaq_range=(opts.get("betaq_min", -3.0),
                                         opts.get("betaq_max", 3.0)))
        cv = cv_loglik(y, sub_nets, res.beta_hat, folds=folds, seed=seed)
        return subset, res, cv

    with ThreadPoolExecutor(max_workers=max(1, opts["threads"])) as pool:
        results = list(pool.map(fit_subset, subsets))

    rows = []
    best = None
    for subset, res, cv in results:
        beta_cols = [""] * (q + 1)
        beta_cols[0] = res.beta_hat[0]
        for i, qi in enumerate(subset):
            beta_cols[qi + 1] = res.beta_hat[i + 1]
        rows.append([_subset_label(names, subset), res.criterion_kind,
                     res.criterion_value] + beta_cols
                    + [count_edges(res.solution), cv])
        if best is None or res.criterion_value < best[1].criterion_value:
            best = (subset, res, cv)
    header = (["model", "criterion", "criterion_value", "beta0"]
              + [f"beta_{name}" for name in names] + ["edges", "cv_loglik"])
    write_csv(outdir / "model_comparison.csv", header, rows)

    subset, res, cv = best
    rho = partial_corr_of(res.solution.theta_hat)
    write_edge_list(outdir / "edges.csv", y.column_names, rho)
    brow = ["beta_hat", res.beta_hat[0]] + [""] * q
    for i, qi in enumerate(subset):
        brow[2 + qi] = res.beta_hat[i + 1]
    write_csv(outdir / "hyperparameters.csv",
              ["parameter", "intercept"] + list(names), [brow])
    write_csv(outdir / "diagnostics.csv", ["key", "value"], [
        ["solver_iterations", res.solution.iterations],
        ["dual_gap", res.solution.dual_gap],
        ["criterion", res.criterion_kind],
        ["criterion_value", res.criterion_value],
        ["edges", count_edges(res.solution)],
        ["cv_loglik", cv],
        ["evaluations", len(res.trace)],
    ])
    return best


def run_spikeslab(y, networks, opts, outdir):
    seed = opts["seed"]
    stage1 = McmcConfig(
        n_warmup=opts.get("warmup", 500),
        n_samples=opts.get("samples", 1000),
        thin=opts.get("thin", 1),
        n_chains=opts.get("chains", 1),
        leapfrog_steps=opts.get("leapfrog", 50),
        target_accept=opts.get("target_accept", 0.87),
        seed=seed)
    stage2 = McmcConfig(
        n_warmup=opts.get("stage2_warmup", 300),
        n_samples=opts.get("stage2_samples", 600),
        thin=opts.get("thin", 1),
        n_chains=opts.get("chains", 1),
        leapfrog_steps=opts.get("leapfrog", 20),
        seed=seed + 1)
    config = TwoStageConfig(stage1=stage1, stage2=stage2,
                            threshold=opts.get("threshold", 0.95),
                            fdr_alpha=opts.get("alpha"))
    result = two_stage_fit(y, networks, config=config)
    report = result.report

    rho_mean = np.zeros((y.p, y.p))
    iu = np.triu_indices(y.p, 1)
    rho_mean[iu] = report.post_mean_rho
    rho_mean = rho_mean + rho_mean.T
    write_edge_list(outdir / "edges.csv", y.column_names, rho_mean, report=report)

    names = networks.names if networks is not None else ()
    channels = ["intercept"] + list(names)
    k = len(channels)
    lo, hi = eta_intervals(result.stage1)
    hrows = []
    labels = [("eta0", "slab location"), ("eta1", "slab dispersion"),
              ("eta2", "slab probability")]
    for i, (key, _) in enumerate(labels):
        hrows.append([key] + list(result.eta_hat[i]))
        hrows.append([f"{key}_lo95"] + list(lo[i * k:(i + 1) * k]))
        hrows.append([f"{key}_hi95"] + list(hi[i * k:(i + 1) * k]))
    write_csv(outdir / "hyperparameters.csv", ["parameter"] + channels, hrows)

    diag_rows = [
        ["stage1_accept_rate", result.stage1.accept_rate],
        ["stage1_divergences", result.stage1.divergences],
        ["stage1_ess_eta_mean", float(np.mean(result.stage1.ess[-3 * k:]))],
        ["stage1_rhat_eta_mean", float(np.mean(result.stage1.rhat[-3 * k:]))],
        ["stage2_accept_rate", result.stage2.accept_rate],
        ["stage2_divergences", result.stage2.divergences],
        ["stage2_ess_mean", float(np.mean(result.stage2.ess))],
        ["stage2_rhat_mean", float(np.mean(result.stage2.rhat))],
        ["threshold_used", report.threshold_used],
        ["edges_selected_0.95", int(np.sum(report.posterior_slab_prob >= 0.95))],
        ["edges_selected_0.5", int(np.sum(report.selected_05))],
    ]
    write_csv(outdir / "diagnostics.csv", ["key", "value"], diag_rows)

    # plot-ready slab curves per network over its standardized value range
    rows = []
    if networks is not None and networks.q:
        for qi, name in enumerate(names):
            vals = networks.standardized[qi][iu]
            grid = np.linspace(vals.min(), vals.max(), 50)
            for v in grid:
                a = np.zeros(k)
                a[0] = 1.0
                a[1 + qi] = v
                w, mean, s = slab_terms(a, result.hyper)
                rows.append([name, v, w, mean, s])
    else:
        for v in np.linspace(-2.0, 2.0, 50):
            w, mean, s = slab_terms(np.array([1.0]), result.hyper)
            rows.append(["intercept", v, w, mean, s])
    write_csv(outdir / "slab_curves.csv",
              ["network", "value", "slab_prob", "slab_mean", "slab_scale"], rows)
    return result


def run_lincheck(y, networks, opts, outdir):
    if networks is None or not networks.q:
        raise ConfigError("lincheck requires at least one network")
    S = sample_cov(y)
    spec = GridSpec(n_beta0=opts.get("grid_beta0", 50),
                    beta0_span=opts.get("beta0_span", 6.0))
    res = grid_search(S, None, y.n, criterion=opts.get("criterion", "bic"),
                      grid_spec=spec, ebic_gamma=opts.get("ebic_gamma", 0.5))
    rho = partial_corr_of(res.solution.theta_hat)
    iu = np.triu_indices(y.p, 1)
    rho_sq = rho[iu] ** 2
    n_bins = opts.get("bins", 10)
    rows = []
    for qi, name in enumerate(networks.names):
        vals = networks.standardized[qi][iu]
        edges = np.linspace(vals.min(), vals.max(), n_bins + 1)
        which = np.clip(np.digitize(vals, edges) - 1, 0, n_bins - 1)
        for b in range(n_bins):
            mask = which == b
            center = 0.5 * (edges[b] + edges[b + 1])
            mean_sq = float(rho_sq[mask].mean()) if np.any(mask) else np.nan
            log_mean = np.log(mean_sq) if mean_sq and mean_sq > 0 else np.nan
            rows.append([name, center, int(mask.sum()),
                         "" if np.isnan(log_mean) else log_mean])
    write_csv(outdir / "lincheck.csv",
              ["network", "bin_center", "n_pairs", "log_mean_rho_sq"], rows)


def _sim_methods(opts):
    from .inference import posterior_mean_precision
    from .spikeslab import elicit_priors

    spec1 = GridSpec(n_beta0=opts.get("grid_beta0", 30),
                     beta0_span=opts.get("beta0_span", 5.0))
    spec2 = GridSpec(n_beta0=opts.get("grid_beta0", 15),
                     beta0_span=opts.get("beta0_span", 5.0),
                     n_betaq=opts.get("grid_betaq", 11))
    hyper_cache = {}

    def glasso(y, a, seed):
        S = sample_cov(DataMatrix(y))
        res = grid_search(S, None, y.shape[0], grid_spec=spec1)
        return res.solution.theta_hat, set(res.solution.edge_set)

    def netglasso(y, a, seed):
        S = sample_cov(DataMatrix(y))
        nets = NetworkStack(raw=(a,))
        res = grid_search(S, nets, y.shape[0], grid_spec=spec2)
        return res.solution.theta_hat, set(res.solution.edge_set)

    def spikeslab(y, a, seed):
        n, p = y.shape
        if (p, n) not in hyper_cache:
            hyper_cache[(p, n)] = elicit_priors(p, n, q=1, seed=opts["seed"])
        nets = NetworkStack(raw=(a,))
        config = TwoStageConfig(
            stage1=McmcConfig(n_warmup=opts.get("warmup", 400),
                              n_samples=opts.get("samples", 900),
                              n_chains=1, seed=seed, leapfrog_steps=50,
                              target_accept=0.87),
            stage2=McmcConfig(n_warmup=200, n_samples=600, n_chains=1,
                              seed=seed + 1, leapfrog_steps=20))
        result = two_stage_fit(DataMatrix(y), nets, config=config,
                               hyper=hyper_cache[(p, n)])
        selected = {result.report.pairs[i]
                    for i in np.nonzero(result.report.selected)[0]}
        return posterior_mean_precision(result.stage2), selected

    return {"glasso": glasso, "netglasso": netglasso, "spikeslab": spikeslab}


def cmd_simulate(opts, outdir):
    p_values = [opts.get("p", 10)]
    if opts.get("full_bench"):
        p_values = sorted(set(p_values + [50]))
    design_names = ([opts["design"]] if opts.get("design")
                    else ["independent", "mild", "strong"])
    designs = [SimDesign(p=p, n=opts.get("n", 100), informativeness=d,
                         seed=opts["seed"])
               for p in p_values for d in design_names]
    available = _sim_methods(opts)
    wanted = [m for m in (opts.get("methods") or "glasso,netglasso").split(",") if m]
    unknown = set(wanted) - set(available)
    if unknown:
        raise ConfigError(f"unknown methods: {', '.join(sorted(unknown))}")
    methods = {name: available[name] for name in wanted}
    rows, detail, manifest = run_benchmark(
        designs, methods, opts.get("replicates", 5), base_seed=opts["seed"],
        collect_timings=bool(opts.get("timings")))
    manifest["cli_version"] = __version__
    write_benchmark_csv(rows, outdir / "benchmark.csv")
    write_manifest(manifest, outdir / "manifest.json")


def cmd_cv(y, networks, opts, outdir):
    if not opts.get("beta"):
        raise ConfigError("cv requires --beta b0[,b1,...]")
    try:
        beta = [float(v) for v in str(opts["beta"]).split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse --beta {opts['beta']!r}")
    expected = 1 + (networks.q if networks is not None else 0)
    if len(beta) != expected:
        raise ConfigError(f"--beta needs {expected} values, got {len(beta)}")
    score = cv_loglik(y, networks, beta, folds=opts.get("folds", 10),
                      seed=opts["seed"])
    write_csv(outdir / "cv_score.csv",
              ["beta", "folds", "cv_loglik"],
              [[";".join(FLOAT_FMT % b for b in beta),
                opts.get("folds", 10), score]])


def _echo_config(opts, outdir, subcommand):
    lines = [f"subcommand={subcommand}"]
    for key in sorted(opts):
        value = opts[key]
        if value is None:
            continue
        lines.append(f"{key}={_fmt(value)}")
    (outdir / "run_config.txt").write_text("\n".join(lines) + "\n")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    outdir = Path(opts["out"])
    outdir.mkdir(parents=True, exist_ok=True)

    def fail(code, stage, err):
        print(f"{stage} error: {err}", file=sys.stderr)
        payload = {"stage": stage, "error": str(err),
                   "subcommand": args.subcommand, "exit_code": code}
        with open(outdir / "error.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return code

    try:
        if args.subcommand == "simulate":
            cmd_simulate(opts, outdir)
            _echo_config(opts, outdir, args.subcommand)
            return EXIT_OK
        y, covariates, networks = ingest(opts)
        if args.subcommand in ("glasso", "netglasso"):
            if args.subcommand == "glasso":
                networks = None
            run_lattice(y, networks, opts, outdir)
        elif args.subcommand == "spikeslab":
            run_spikeslab(y, networks, opts, outdir)
        elif args.subcommand == "cv":
            cmd_cv(y, networks, opts, outdir)
        elif args.subcommand == "lincheck":
            run_lincheck(y, networks, opts, outdir)
        _echo_config(opts, outdir, args.subcommand)
        return EXIT_OK
    except ConfigError as err:
        return fail(EXIT_CONFIG, "config", err)
    except DataError as err:
        return fail(EXIT_DATA, "data", err)
    except (GolazoConvergenceError, NotPositiveDefiniteError, SamplerError,
            StageOneDiagnosticsError, np.linalg.LinAlgError) as err:
        return fail(EXIT_NUMERICAL, "numerical", err)


if __name__ == "__main__":
    sys.exit(main())
