"""Shared fixtures: the desk-scale Table-1-style benchmark is expensive, so it
runs once per session and both the module tests and the acceptance suite read
from it."""

import numpy as np
import pytest

from netggm.core import DataMatrix, NetworkStack, sample_cov
from netggm.golazo import count_edges
from netggm.hmc import McmcConfig
from netggm.inference import TwoStageConfig, posterior_mean_precision, two_stage_fit
from netggm.selection import GridSpec, grid_search
from netggm.simulate import SimDesign, run_benchmark
from netggm.spikeslab import elicit_priors

BENCH_P = 10
BENCH_N = 100
BENCH_REPLICATES = 20

_GRID_1D = GridSpec(n_beta0=30, beta0_span=5.0)
_GRID_2D = GridSpec(n_beta0=15, beta0_span=5.0, n_betaq=11, betaq_range=(-3.0, 3.0))


def _edges_of(sol):
    return set(sol.edge_set)


def fit_glasso(y, a, seed):
    S = sample_cov(DataMatrix(y))
    res = grid_search(S, None, y.shape[0], grid_spec=_GRID_1D)
    return res.solution.theta_hat, _edges_of(res.solution)


def fit_netglasso(y, a, seed):
    S = sample_cov(DataMatrix(y))
    nets = NetworkStack(raw=(a,))
    res = grid_search(S, nets, y.shape[0], grid_spec=_GRID_2D)
    return res.solution.theta_hat, _edges_of(res.solution)


_SS_HYPER_CACHE = {}


def fit_netss(y, a, seed):
    n, p = y.shape
    key = (p, n)
    if key not in _SS_HYPER_CACHE:
        _SS_HYPER_CACHE[key] = elicit_priors(p, n, q=1, seed=0)
    nets = NetworkStack(raw=(a,))
    config = TwoStageConfig(
        stage1=McmcConfig(n_warmup=400, n_samples=900, n_chains=1, seed=seed,
                          leapfrog_steps=50, target_accept=0.87),
        stage2=McmcConfig(n_warmup=200, n_samples=600, n_chains=1, seed=seed + 1,
                          leapfrog_steps=20),
    )
    result = two_stage_fit(DataMatrix(y), nets, config=config,
                           hyper=_SS_HYPER_CACHE[key])
    theta_hat = posterior_mean_precision(result.stage2)
    selected = {result.report.pairs[i]
                for i in np.nonzero(result.report.selected)[0]}
    return theta_hat, selected


@pytest.fixture(scope="session")
def table1_benchmark():
    designs = [
        SimDesign(p=BENCH_P, n=BENCH_N, informativeness="strong", seed=7),
        SimDesign(p=BENCH_P, n=BENCH_N, informativeness="independent", seed=7),
    ]
    methods_by_design = {
        "strong": {"glasso": fit_glasso, "netglasso": fit_netglasso,
                   "netss": fit_netss},
        "independent": {"glasso": fit_glasso, "netglasso": fit_netglasso},
    }
    rows, detail, manifest = {}, {}, {}
    for design in designs:
        r, d, m = run_benchmark([design], methods_by_design[design.informativeness],
                                BENCH_REPLICATES)
        label = design.informativeness
        for lab, row in r:
            rows[(label, row.method)] = row
        for (lab, name), arrs in d.items():
            detail[(label, name)] = arrs
        manifest[label] = m
    return {"rows": rows, "detail": detail, "manifest": manifest}
