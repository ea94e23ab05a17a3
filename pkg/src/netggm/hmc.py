"""Hamiltonian Monte Carlo with dual-averaging step-size adaptation.

The engine works on an unconstrained vector and a (log density, gradient)
callable; model-specific packing lives next to the model.  Identity mass
matrix, jittered leapfrog length, split-chain diagnostics.
"""

from dataclasses import dataclass, field

import numpy as np

ESS_CAP_FACTOR = 10.0
DIVERGENCE_ENERGY = 1000.0


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class McmcConfig:
    n_warmup: int = 1000
    n_samples: int = 2000
    thin: int = 1
    n_chains: int = 2
    leapfrog_steps: int = 20
    jitter_steps: bool = True
    target_accept: float = 0.8
    seed: int = 0
    step_size: float = None
    max_divergence_rate: float = 0.5

    def __post_init__(self):
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0.5 < self.target_accept < 0.99:
            raise ValueError("target_accept must lie in (0.5, 0.99)")
        if self.n_samples < self.thin:
            raise ValueError("n_samples must be at least thin")
        if self.n_chains < 1:
            raise ValueError("need at least one chain")


@dataclass
class McmcRun:
    samples: np.ndarray  # (n_chains, n_retained, dim), unconstrained scale
    accept_rate: float
    divergences: int
    ess: np.ndarray
    rhat: np.ndarray
    step_sizes: tuple
    draws: list = None  # per chain: list of decoded draws, when a decoder ran

    @property
    def n_chains(self):
        return self.samples.shape[0]

    @property
    def n_retained(self):
        return self.samples.shape[1]

    def pooled(self):
        return self.samples.reshape(-1, self.samples.shape[-1])


def _leapfrog(x, mom, eps, n_steps, logp_grad):
    lp, grad = logp_grad(x)
    for _ in range(n_steps):
        mom = mom + 0.5 * eps * grad
        x = x + eps * mom
        lp, grad = logp_grad(x)
        if not np.isfinite(lp):
            return x, mom, -np.inf, grad
        mom = mom + 0.5 * eps * grad
    return x, mom, lp, grad


def find_reasonable_step_size(x, logp_grad, rng, init=1.0):
    """Double/halve until a single step lands near acceptance 0.5."""
    eps = init
    lp0, _ = logp_grad(x)
    mom = rng.standard_normal(x.shape[0])
    h0 = lp0 - 0.5 * mom @ mom
    x1, mom1, lp1, _ = _leapfrog(x, mom, eps, 1, logp_grad)
    h1 = lp1 - 0.5 * mom1 @ mom1
    ratio = np.exp(min(h1 - h0, 0.0)) if np.isfinite(h1) else 0.0
    direction = 1.0 if ratio > 0.5 else -1.0
    for _ in range(60):
        eps = eps * (2.0 ** direction)
        x1, mom1, lp1, _ = _leapfrog(x, mom, eps, 1, logp_grad)
        h1 = lp1 - 0.5 * mom1 @ mom1
        ratio = np.exp(h1 - h0) if np.isfinite(h1) else 0.0
        if (direction == 1.0 and ratio <= 0.5) or (direction == -1.0 and ratio >= 0.5):
            break
    return eps


def _run_chain(x0, logp_grad, config, rng):
    lp0, _ = logp_grad(np.asarray(x0, dtype=float))
    if not np.isfinite(lp0):
        raise SamplerError("initial state has non-finite log density")
    x = np.asarray(x0, dtype=float).copy()

    eps = config.step_size or find_reasonable_step_size(x, logp_grad, rng)
    mu = np.log(10.0 * eps)
    log_eps_bar, h_bar = 0.0, 0.0
    gamma, t0, kappa = 0.05, 10.0, 0.75

    L = config.leapfrog_steps
    lo = max(1, int(np.ceil(L / 2)))
    hi = max(lo, int(np.floor(1.5 * L)))

    kept = []
    n_accept = 0
    n_post = 0
    divergences = 0
    total = config.n_warmup + config.n_samples
    for it in range(total):
        warming = it < config.n_warmup
        steps = int(rng.integers(lo, hi + 1)) if config.jitter_steps else L
        mom = rng.standard_normal(x.shape[0])
        lp, _ = logp_grad(x)
        h0 = lp - 0.5 * mom @ mom
        x_new, mom_new, lp_new, _ = _leapfrog(x, mom, eps, steps, logp_grad)
        h1 = lp_new - 0.5 * mom_new @ mom_new
        delta = h1 - h0
        divergent = (not np.isfinite(h1)) or (-delta > DIVERGENCE_ENERGY)
        alpha = 0.0 if divergent else min(1.0, np.exp(min(delta, 0.0)))
        accept = (not divergent) and (rng.random() < alpha)
        if accept:
            x = x_new
        if warming:
            t = it + 1
            h_bar = (1.0 - 1.0 / (t + t0)) * h_bar + (config.target_accept - alpha) / (t + t0)
            log_eps = mu - np.sqrt(t) / gamma * h_bar
            w = t ** (-kappa)
            log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar
            eps = np.exp(log_eps)
            if it == config.n_warmup - 1:
                eps = np.exp(log_eps_bar)
        else:
            n_post += 1
            n_accept += accept
            divergences += divergent
            if n_post % config.thin == 0:
                kept.append(x.copy())
    if n_post and divergences / n_post > config.max_divergence_rate:
        raise SamplerError(
            f"{divergences}/{n_post} post-warmup trajectories diverged; "
            "use a smaller step size or a smaller target_accept")
    return np.asarray(kept), n_accept / max(n_post, 1), divergences, eps


def sample(init, logp_grad, config, decode=None):
    """Run HMC chains and assemble diagnostics.

    Parameters
    ----------
    init : 1-d array or list of per-chain arrays
        Unconstrained starting point(s); must have finite log density.
    logp_grad : callable x -> (float, ndarray)
    config : McmcConfig
    decode : callable x -> object, optional
        Applied to every retained draw (per chain) when given.

    Returns
    -------
    McmcRun
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    inits = init if isinstance(init, (list, tuple)) else [init] * config.n_chains
    if len(inits) != config.n_chains:
        raise ValueError("one init per chain required")
    chains, rates, divs, epss = [], [], [], []
    for c in range(config.n_chains):
        rng = np.random.default_rng(seeds[c])
        kept, rate, div, eps = _run_chain(inits[c], logp_grad, config, rng)
        chains.append(kept)
        rates.append(rate)
        divs.append(div)
        epss.append(eps)
    samples = np.asarray(chains)
    dim = samples.shape[-1]
    ess_vals = np.array([ess([samples[c, :, k] for c in range(config.n_chains)])
                         for k in range(dim)])
    rhat_vals = np.array([rhat([samples[c, :, k] for c in range(config.n_chains)])
                          for k in range(dim)])
    draws = None
    if decode is not None:
        draws = [[decode(x) for x in samples[c]] for c in range(config.n_chains)]
    return McmcRun(samples=samples, accept_rate=float(np.mean(rates)),
                   divergences=int(np.sum(divs)), ess=ess_vals, rhat=rhat_vals,
                   step_sizes=tuple(epss), draws=draws)


def _autocorr(x):
    n = x.shape[0]
    x = x - x.mean()
    size = 1
    while size < 2 * n:
        size <<= 1
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real / n
    if acov[0] <= 0:
        return None
    return acov / acov[0]


def ess(chain_values):
    """Effective sample size, summed across chains.

    Per chain the autocorrelation sum is truncated at the first non-positive
    even-lag pair (initial positive sequence); a constant chain yields the 0
    sentinel and anti-correlated chains are capped at 10x the draw count.
    """
    if isinstance(chain_values, np.ndarray) and chain_values.ndim == 1:
        chain_values = [chain_values]
    total = 0.0
    for x in chain_values:
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        if n < 10:
            raise ValueError("need at least 10 draws per chain")
        rho = _autocorr(x)
        if rho is None:
            continue  # constant chain contributes 0
        tau = -1.0
        k = 0
        while 2 * k + 1 < n:
            gamma = rho[2 * k] + rho[2 * k + 1]
            if gamma <= 0:
                break
            tau += 2.0 * gamma
            k += 1
        tau = max(tau, 1.0 / ESS_CAP_FACTOR)
        total += min(n / tau, ESS_CAP_FACTOR * n)
    return float(total)


def rhat(chains):
    """Split-chain potential scale reduction factor.

    A single chain is split in two; zero within-chain variance returns the
    +inf sentinel.
    """
    if isinstance(chains, np.ndarray) and chains.ndim == 1:
        chains = [chains]
    halves = []
    for x in chains:
        x = np.asarray(x, dtype=float)
        if x.shape[0] < 4:
            raise ValueError("need at least 4 draws per chain")
        mid = x.shape[0] // 2
        halves.append(x[:mid])
        halves.append(x[mid: 2 * mid])
    m = len(halves)
    n = min(h.shape[0] for h in halves)
    halves = np.asarray([h[:n] for h in halves])
    means = halves.mean(axis=1)
    within = halves.var(axis=1, ddof=1).mean()
    if within == 0:
        return np.inf
    between_over_n = means.var(ddof=1)
    var_plus = (n - 1) / n * within + between_over_n
    return float(np.sqrt(var_plus / within))
