"""Empirical Bayes, edge posterior probabilities and FDR-controlled selection.

The two-stage pipeline samples (diag Theta, rho, eta) jointly, sets eta at
the marginal posterior KDE mode, resamples the graphical parameters with eta
fixed, and turns the second-stage draws into per-edge slab probabilities and
selection decisions.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import expit

from .core import DataMatrix, sample_cov
from .hmc import McmcConfig, McmcRun, rhat as split_rhat, sample
from .spikeslab import SpikeSlabModel, elicit_priors, slab_terms


class StageOneDiagnosticsError(RuntimeError):
    """Stage-1 chains failed the R-hat gate; carries the offending run."""

    def __init__(self, message, run=None, rhat_values=None):
        super().__init__(message)
        self.run = run
        self.rhat_values = rhat_values


@dataclass(frozen=True)
class EdgeReport:
    pairs: tuple  # (j, k) with j < k, row-major
    posterior_slab_prob: np.ndarray
    post_mean_rho: np.ndarray
    post_sd_rho: np.ndarray
    selected: np.ndarray
    selected_05: np.ndarray
    threshold_used: float

    def __post_init__(self):
        probs = np.asarray(self.posterior_slab_prob, dtype=float)
        if np.any((probs < 0) | (probs > 1)):
            raise ValueError("posterior probabilities must lie in [0, 1]")
        sel = np.asarray(self.selected, dtype=bool)
        if not np.array_equal(sel, probs >= self.threshold_used):
            raise ValueError("selected flags must equal prob >= threshold")

    @property
    def n_selected(self):
        return int(np.sum(self.selected))


def _kde_mode(draws):
    """Mode of a Gaussian KDE (Silverman bandwidth) over 1-d or 2-d draws.

    Evaluation points are the draws themselves plus a 256-point grid over the
    draw range, so the search is deterministic.
    """
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, dim = x.shape
    spread = x.max(axis=0) - x.min(axis=0)
    if np.all(spread == 0):
        return x[0].copy()
    kde = stats.gaussian_kde(x.T, bw_method="silverman")
    if dim == 1:
        grid = np.linspace(x.min(), x.max(), 256)[None, :]
        cand = np.concatenate([x.T, grid], axis=1)
    else:
        side = int(np.ceil(256 ** (1.0 / dim)))
        axes = [np.linspace(x[:, k].min(), x[:, k].max(), side) for k in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([m.ravel() for m in mesh])
        cand = np.concatenate([x.T, grid], axis=1)
    dens = kde(cand)
    return cand[:, int(np.argmax(dens))].copy()


def empirical_bayes(run_or_draws, min_draws=100):
    """Posterior-mode hyperparameter estimate from retained draws.

    Joint KDE mode when the hyperparameter dimension is at most 2, otherwise
    per-coordinate marginal KDE modes.  Accepts an (N, dim) array or an
    :class:`~netggm.hmc.McmcRun` whose decoded draws carry the eta triple.
    """
    draws = _eta_draw_matrix(run_or_draws)
    if draws.shape[0] < min_draws:
        raise ValueError(
            f"need at least {min_draws} retained draws, got {draws.shape[0]}")
    if draws.shape[1] <= 2:
        return _kde_mode(draws)
    return np.array([_kde_mode(draws[:, k])[0] for k in range(draws.shape[1])])


def _eta_draw_matrix(run_or_draws):
    if isinstance(run_or_draws, McmcRun):
        if run_or_draws.draws is None:
            raise ValueError("run has no decoded draws with hyperparameters")
        rows = []
        for chain in run_or_draws.draws:
            for _, eta in chain:
                rows.append(np.concatenate([np.atleast_1d(e) for e in eta]))
        return np.asarray(rows)
    draws = np.asarray(run_or_draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    return draws


def _log_de(x, loc, scale):
    return -np.abs(x - loc) / scale - np.log(2.0 * scale)


def edge_prob(rho_draw, eta, a_jk, s0):
    """Posterior slab probability of one partial-correlation draw.

    ``eta`` is the (eta0, eta1, eta2) triple; spike density DE(0, s0), slab
    density DE(eta0'a, s_jk), weight w from the logistic regression.
    Degenerate weights return exactly 0 or 1.
    """
    eta0, eta1, eta2 = (np.atleast_1d(np.asarray(e, dtype=float)) for e in eta)
    a = np.atleast_1d(np.asarray(a_jk, dtype=float))
    t2 = float(a @ eta2)
    w = expit(t2)
    if w == 0.0:
        return 0.0
    if w == 1.0:
        return 1.0
    mean = float(a @ eta0)
    s_jk = s0 * (1.0 + np.exp(min(float(a @ eta1), 700.0)))
    l1 = np.log(w) + _log_de(rho_draw, mean, s_jk)
    l0 = np.log1p(-w) + _log_de(rho_draw, 0.0, s0)
    return float(expit(l1 - l0))


def edge_prob_mc(rho_draws, eta, a_jk, s0):
    """Monte Carlo average of :func:`edge_prob` over retained draws."""
    rho_draws = np.atleast_1d(np.asarray(rho_draws, dtype=float))
    if rho_draws.shape[0] == 0:
        raise ValueError("need at least one draw")
    return float(np.mean([edge_prob(r, eta, a_jk, s0) for r in rho_draws]))


def fdr_threshold(probs, alpha):
    """Largest-prefix rule controlling posterior expected false discovery.

    Sorts probabilities descending and keeps the longest prefix whose mean
    (1 - prob) stays at or below alpha; returns the implied threshold (the
    probability of the last included edge) and the selected index set.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    probs = np.asarray(probs, dtype=float)
    if probs.size == 0:
        return 1.0, set()
    order = np.argsort(-probs, kind="stable")
    sorted_p = probs[order]
    cum_fdp = np.cumsum(1.0 - sorted_p) / np.arange(1, probs.size + 1)
    # only prefixes that are threshold sets (cut at distinct-value boundaries)
    boundary = np.r_[sorted_p[1:] != sorted_p[:-1], True]
    ok = np.nonzero((cum_fdp <= alpha) & boundary)[0]
    if ok.size == 0:
        return 1.0, set()
    last = int(ok.max())
    selected = set(order[: last + 1].tolist())
    return float(sorted_p[last]), selected


def select_at_threshold(probs, t):
    """Fixed-threshold variant: indices with prob >= t (t = 1 - alpha)."""
    probs = np.asarray(probs, dtype=float)
    return set(np.nonzero(probs >= t)[0].tolist())


@dataclass(frozen=True)
class TwoStageConfig:
    stage1: McmcConfig = field(default_factory=lambda: McmcConfig())
    stage2: McmcConfig = field(default_factory=lambda: McmcConfig(n_warmup=500, n_samples=1000))
    threshold: float = 0.95
    fdr_alpha: float = None  # when set, the Mueller rule picks the threshold
    rhat_gate: float = 1.1
    elicit_mc: int = 10_000


@dataclass(frozen=True)
class TwoStageResult:
    eta_hat: tuple  # (eta0, eta1, eta2)
    stage1: McmcRun
    stage2: McmcRun
    report: EdgeReport
    hyper: object

    def __iter__(self):  # (eta_hat, stage-2 run, report) unpacking
        return iter((self.eta_hat, self.stage2, self.report))


def two_stage_fit(y, networks, config=None, hyper=None, seed=None):
    """Joint sampling, empirical Bayes for eta, then conditional resampling.

    Stage 1 samples (diag Theta, rho, eta); the eta chains must pass the
    split R-hat gate (mean over eta coordinates <= 1.1) or the run aborts
    with diagnostics attached.  Stage 2 fixes eta at the marginal KDE modes
    and resamples the graphical parameters; the edge report averages the
    conditional slab probability over stage-2 draws and applies either the
    fixed 0.95 threshold or the expected-FDR prefix rule.
    """
    config = config or TwoStageConfig()
    dm = y if isinstance(y, DataMatrix) else DataMatrix(y)
    n, p = dm.n, dm.p
    S = sample_cov(dm)
    if hyper is None:
        hyper = elicit_priors(p, n, networks=networks,
                              seed=config.stage1.seed if seed is None else seed,
                              n_mc=config.elicit_mc)

    model1 = SpikeSlabModel(S, n, networks, hyper, fix_eta=False)
    inits = [model1.pack(model1.init_state_informed(seed=config.stage1.seed + 101 + c))
             for c in range(config.stage1.n_chains)]
    run1 = sample(inits, model1.logp_grad, config.stage1, decode=model1.decode_draw)

    k = hyper.n_channels
    eta_slice = slice(model1.dim - 3 * k, model1.dim)
    eta_rhat = run1.rhat[eta_slice]
    if float(np.mean(eta_rhat)) > config.rhat_gate:
        raise StageOneDiagnosticsError(
            f"mean R-hat of eta chains {np.mean(eta_rhat):.3f} exceeds "
            f"{config.rhat_gate}; run longer chains",
            run=run1, rhat_values=eta_rhat)

    eta_flat = empirical_bayes(run1)
    eta_hat = (eta_flat[:k], eta_flat[k:2 * k], eta_flat[2 * k:])
    hyper_hat = hyper.with_eta(*eta_hat)

    model2 = SpikeSlabModel(S, n, networks, hyper_hat, fix_eta=True)
    inits2 = [model2.pack(model2.init_state_informed(seed=config.stage2.seed + 211 + c))
              for c in range(config.stage2.n_chains)]
    run2 = sample(inits2, model2.logp_grad, config.stage2, decode=model2.decode_draw)

    report = build_edge_report(run2, networks, hyper_hat, eta_hat,
                               threshold=config.threshold, fdr_alpha=config.fdr_alpha)
    return TwoStageResult(eta_hat=eta_hat, stage1=run1, stage2=run2,
                          report=report, hyper=hyper_hat)


def build_edge_report(run, networks, hyper, eta_hat, threshold=0.95, fdr_alpha=None):
    """Assemble per-edge posterior summaries from decoded draws."""
    params = [param for chain in run.draws for param, _ in chain]
    p = params[0].p
    iu = np.triu_indices(p, 1)
    rho = np.asarray([param.partial_corr[iu] for param in params])  # (N, E)
    from .spikeslab import edge_design

    A = edge_design(networks, p)
    n_edges = rho.shape[1]
    probs = np.empty(n_edges)
    for e in range(n_edges):
        probs[e] = edge_prob_mc(rho[:, e], eta_hat, A[e], hyper.s0)
    if fdr_alpha is not None:
        t, selected_idx = fdr_threshold(probs, fdr_alpha)
    else:
        t = threshold
        selected_idx = select_at_threshold(probs, t)
    selected = np.zeros(n_edges, dtype=bool)
    selected[sorted(selected_idx)] = True
    return EdgeReport(
        pairs=tuple(zip(iu[0].tolist(), iu[1].tolist())),
        posterior_slab_prob=probs,
        post_mean_rho=rho.mean(axis=0),
        post_sd_rho=rho.std(axis=0, ddof=1) if rho.shape[0] > 1 else np.zeros(n_edges),
        selected=selected,
        selected_05=probs >= 0.5,
        threshold_used=float(t),
    )


def posterior_mean_precision(run):
    """Average assembled precision matrix over decoded draws."""
    from .core import assemble_precision

    mats = [assemble_precision(param) for chain in run.draws for param, _ in chain]
    return np.mean(mats, axis=0)


def eta_intervals(run, level=0.95):
    """Equal-tailed posterior intervals for the hyperparameters (stage 1)."""
    draws = _eta_draw_matrix(run)
    lo = np.quantile(draws, (1 - level) / 2, axis=0)
    hi = np.quantile(draws, 1 - (1 - level) / 2, axis=0)
    return lo, hi
