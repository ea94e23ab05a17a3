"""Network graphical spike-and-slab model.

Each partial correlation follows a two-component double-exponential mixture
whose slab probability, location and scale are regressed on external network
data.  Sampling works on rescaled latents: unit double-exponential variables
for both components, a uniform component selector smoothed by a steep sigmoid,
and hyperparameters standardized so an identity-mass HMC mixes well.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, optimize
from scipy.special import expit, gammaln, log_expit, ndtri, roots_hermitenorm

from .core import PrecisionParam

SIGMOID_SLOPE = 100.0
EXP_CAP = 700.0
_GH_NODES, _GH_WEIGHTS = roots_hermitenorm(201)
_GH_WEIGHTS = _GH_WEIGHTS / np.sqrt(2.0 * np.pi)


class ElicitationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpikeSlabHyper:
    """Current hyperparameter values plus their Gaussian prior parameters.

    ``eta0``/``eta1``/``eta2`` hold the slab location, dispersion and
    probability coefficients (intercept first).  ``p`` and ``n`` are carried
    for the standardizing reparameterization of the eta priors.
    """

    eta0: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    s0: float
    g0: float
    m1: float
    g1: float
    m2: float
    g2: float
    ig_a: float
    ig_b: float
    p: int
    n: int

    def __post_init__(self):
        for name in ("eta0", "eta1", "eta2"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")
        for name in ("g0", "g1", "g2", "ig_a", "ig_b"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_channels(self):
        return self.eta0.shape[0]

    @property
    def repar_scale(self):
        """Std dev of the standardized eta latents, sqrt(p(p-1)/(2n))."""
        return float(np.sqrt(self.p * (self.p - 1) / (2.0 * self.n)))

    def prior_means(self):
        m = np.zeros(3 * self.n_channels)
        m[self.n_channels] = self.m1
        m[2 * self.n_channels] = self.m2
        return m

    def prior_sds(self):
        k = self.n_channels
        return np.concatenate([np.full(k, self.g0), np.full(k, self.g1), np.full(k, self.g2)])

    def with_eta(self, eta0, eta1, eta2):
        return replace(self, eta0=np.asarray(eta0, float),
                       eta1=np.asarray(eta1, float), eta2=np.asarray(eta2, float))


@dataclass(frozen=True)
class LatentState:
    """MCMC state: sqrt-diagonal scales, component latents and selector.

    ``eta_tilde`` is the standardized hyperparameter block; ``None`` when the
    hyperparameters are held fixed (second-stage sampling).
    """

    sqrt_diag: np.ndarray
    rho_spike_raw: np.ndarray
    rho_slab_raw: np.ndarray
    u: np.ndarray
    eta_tilde: np.ndarray = None

    def __post_init__(self):
        for name in ("sqrt_diag", "rho_spike_raw", "rho_slab_raw", "u"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} has non-finite entries")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if np.any(self.sqrt_diag <= 0):
            raise ValueError("sqrt_diag must be strictly positive")
        if np.any((self.u <= 0) | (self.u >= 1)):
            raise ValueError("u must be strictly inside (0, 1)")
        if self.eta_tilde is not None:
            v = np.asarray(self.eta_tilde, dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError("eta_tilde has non-finite entries")
            v.setflags(write=False)
            object.__setattr__(self, "eta_tilde", v)

    @property
    def p(self):
        return self.sqrt_diag.shape[0]

    @property
    def n_edges(self):
        return self.rho_spike_raw.shape[0]


@dataclass
class LatentGrad:
    """Gradient container mirroring LatentState fields."""

    sqrt_diag: np.ndarray
    rho_spike_raw: np.ndarray
    rho_slab_raw: np.ndarray
    u: np.ndarray
    eta_tilde: np.ndarray = None


def edge_design(networks, p):
    """(n_pairs, Q+1) per-edge design with intercept, in j<k row-major order."""
    if networks is not None and networks.q:
        return networks.edge_design()
    n_pairs = p * (p - 1) // 2
    return np.ones((n_pairs, 1))


def slab_terms(a_jk, hyper):
    """Slab probability, location and scale at network values ``a_jk``.

    ``a_jk`` includes the intercept channel; accepts a single (Q+1,) vector or
    an (E, Q+1) stack.  Exponents are capped, never raising on overflow.
    """
    a = np.atleast_2d(np.asarray(a_jk, dtype=float))
    t2 = a @ hyper.eta2
    t1 = a @ hyper.eta1
    w = expit(t2)
    s = hyper.s0 * (1.0 + np.exp(np.minimum(t1, EXP_CAP)))
    mean = a @ hyper.eta0
    if np.asarray(a_jk).ndim == 1:
        return float(w[0]), float(mean[0]), float(s[0])
    return w, mean, s


def eta_from_tilde(eta_tilde, hyper):
    """Invert the standardizing reparameterization of the hyperparameters."""
    k = hyper.n_channels
    scale = hyper.prior_sds() / hyper.repar_scale
    eta = hyper.prior_means() + np.asarray(eta_tilde, dtype=float) * scale
    return eta[:k], eta[k:2 * k], eta[2 * k:]


def _current_eta(state, hyper):
    if state.eta_tilde is None:
        return hyper.eta0, hyper.eta1, hyper.eta2
    return eta_from_tilde(state.eta_tilde, hyper)


def _rho_vector(state, A, hyper):
    eta0, eta1, eta2 = _current_eta(state, hyper)
    h = hyper.with_eta(eta0, eta1, eta2)
    w, mean, s = slab_terms(A, h)
    g_spike = expit(SIGMOID_SLOPE * (state.u - w))
    spike_val = hyper.s0 * state.rho_spike_raw
    slab_val = mean + s * state.rho_slab_raw
    return g_spike * spike_val + (1.0 - g_spike) * slab_val


def decode(state, networks, hyper):
    """Map latents to a PrecisionParam via the smoothed component selector."""
    p = state.p
    rho = _rho_vector(state, edge_design(networks, p), hyper)
    mat = np.zeros((p, p))
    iu = np.triu_indices(p, 1)
    mat[iu] = rho
    mat = mat + mat.T
    return PrecisionParam(sqrt_diag=state.sqrt_diag, partial_corr=mat)


def _corr_factor(rho_vec, p):
    """C with unit diagonal and C_jk = -rho_jk; Theta = D C D."""
    c = np.eye(p)
    iu = np.triu_indices(p, 1)
    c[iu] = -rho_vec
    c[(iu[1], iu[0])] = -rho_vec
    return c


def log_posterior(state, S, n, networks, hyper):
    """Unnormalized log posterior of the latent state; -inf off the PD cone.

    Terms: Gaussian likelihood of the assembled precision, unit
    double-exponential priors on both rho latents, uniform selector (zero),
    standardized Gaussian priors on eta_tilde, inverse-gamma priors on the
    sqrt-diagonal.  The eta-prior normalization constant C_eta cancels by
    construction and is omitted.
    """
    Smat = S.S if hasattr(S, "S") else np.asarray(S, dtype=float)
    p = state.p
    A = edge_design(networks, p)
    rho = _rho_vector(state, A, hyper)
    if np.any(np.abs(rho) >= 1.0):
        return -np.inf
    C = _corr_factor(rho, p)
    try:
        chol = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        return -np.inf
    d = state.sqrt_diag
    logdet = 2.0 * np.sum(np.log(d)) + 2.0 * np.sum(np.log(np.diag(chol)))
    dsd = Smat * np.outer(d, d)
    loglik = 0.5 * n * (logdet - np.sum(dsd * C)) - 0.5 * n * p * np.log(2.0 * np.pi)

    de = -np.sum(np.abs(state.rho_spike_raw)) - np.sum(np.abs(state.rho_slab_raw)) \
        - 2.0 * state.n_edges * np.log(2.0)
    out = loglik + de
    if state.eta_tilde is not None:
        r2 = hyper.repar_scale ** 2
        k = state.eta_tilde.shape[0]
        out += -0.5 * np.sum(state.eta_tilde ** 2) / r2 \
            - 0.5 * k * np.log(2.0 * np.pi * r2)
    a, b = hyper.ig_a, hyper.ig_b
    out += np.sum(a * np.log(b) - gammaln(a) - (a + 1.0) * np.log(d) - b / d)
    return float(out)


def grad_log_posterior(state, S, n, networks, hyper):
    """Analytic gradient of :func:`log_posterior` in state coordinates.

    The double-exponential kink takes subgradient 0 at exactly zero.  Raises
    when the assembled precision is not positive definite (callers treat that
    as a divergence).
    """
    Smat = S.S if hasattr(S, "S") else np.asarray(S, dtype=float)
    p = state.p
    A = edge_design(networks, p)
    eta0, eta1, eta2 = _current_eta(state, hyper)
    h = hyper.with_eta(eta0, eta1, eta2)
    w, mean, s = slab_terms(A, h)
    t1 = A @ eta1
    g_spike = expit(SIGMOID_SLOPE * (state.u - w))
    spike_val = hyper.s0 * state.rho_spike_raw
    slab_val = mean + s * state.rho_slab_raw
    rho = g_spike * spike_val + (1.0 - g_spike) * slab_val
    if np.any(np.abs(rho) >= 1.0):
        raise np.linalg.LinAlgError("decoded state leaves the PD cone")
    C = _corr_factor(rho, p)
    chol, low = linalg.cho_factor(C, lower=True, check_finite=False)
    Cinv = linalg.cho_solve((chol, low), np.eye(p), check_finite=False)

    d = state.sqrt_diag
    iu = np.triu_indices(p, 1)
    # likelihood derivative wrt each unique rho entry
    dl_drho = n * ((np.outer(d, d) * Smat)[iu] - Cinv[iu])
    # and wrt the sqrt-diagonal scales, plus the inverse-gamma prior
    sc = Smat * C
    a, b = hyper.ig_a, hyper.ig_b
    g_diag = n * (1.0 / d - sc @ d) - (a + 1.0) / d + b / d ** 2

    branch_gap = spike_val - slab_val
    dg = SIGMOID_SLOPE * g_spike * (1.0 - g_spike)
    g_rs = dl_drho * (g_spike * hyper.s0) - np.sign(state.rho_spike_raw)
    g_rl = dl_drho * ((1.0 - g_spike) * s) - np.sign(state.rho_slab_raw)
    g_u = dl_drho * (dg * branch_gap)

    grad = LatentGrad(sqrt_diag=g_diag, rho_spike_raw=g_rs, rho_slab_raw=g_rl, u=g_u)
    if state.eta_tilde is not None:
        drho_dt0 = dl_drho * (1.0 - g_spike)
        ds_dt1 = hyper.s0 * np.exp(np.minimum(t1, EXP_CAP)) * (t1 < EXP_CAP)
        drho_dt1 = dl_drho * (1.0 - g_spike) * state.rho_slab_raw * ds_dt1
        drho_dt2 = dl_drho * (-dg * branch_gap) * (w * (1.0 - w))
        g_eta = np.concatenate([A.T @ drho_dt0, A.T @ drho_dt1, A.T @ drho_dt2])
        scale = hyper.prior_sds() / hyper.repar_scale
        grad.eta_tilde = g_eta * scale - state.eta_tilde / (hyper.repar_scale ** 2)
    return grad


# ---------------------------------------------------------------------------
# prior elicitation


def _sigmoid_normal_moments(m, g):
    s = expit(m + g * _GH_NODES)
    m1 = float(np.sum(_GH_WEIGHTS * s))
    m2 = float(np.sum(_GH_WEIGHTS * s * s))
    return m1, m2 - m1 * m1


def _match_slab_probability(p):
    """(m2, g2) so sigmoid(N(m2, g2^2)) matches Beta(m_w, 1-m_w) moments.

    m_w = 2/(p-1) targets a prior expected edge count of p; capped below 0.8
    so the Beta stays proper for tiny p.
    """
    m_w = min(2.0 / (p - 1), 0.8)
    var_target = m_w * (1.0 - m_w) / 2.0

    def mean_root(g):
        return optimize.brentq(
            lambda m: _sigmoid_normal_moments(m, g)[0] - m_w, -200.0, 200.0, xtol=1e-12)

    def var_gap(g):
        return _sigmoid_normal_moments(mean_root(g), g)[1] - var_target

    g2 = optimize.brentq(var_gap, 0.05, 60.0, xtol=1e-10)
    return mean_root(g2), g2


def _pd_frequency(g0, p, draws):
    """Share of PD matrices among seeded draws from the unconstrained prior."""
    z_loc, eta10, eta20, unif, lap = draws
    s0 = 0.003
    w = expit(eta20)
    s1 = s0 * (1.0 + np.exp(np.minimum(eta10, EXP_CAP)))
    loc = g0 * z_loc
    in_slab = unif < w[:, None]
    rho = np.where(in_slab, loc[:, None] + s1[:, None] * lap, s0 * lap)
    n_mc = rho.shape[0]
    iu = np.triu_indices(p, 1)
    ok = 0
    mat = np.empty((p, p))
    for i in range(n_mc):
        mat[:] = 0.0
        mat[iu] = rho[i]
        mat += mat.T
        mat[np.diag_indices(p)] = 1.0
        try:
            np.linalg.cholesky(mat)
            ok += 1
        except np.linalg.LinAlgError:
            continue
    return ok / n_mc


def elicit_priors(p, n, q=0, networks=None, seed=0, n_mc=10_000, g0_floor=1e-4,
                  g0_ceiling=2.0, bisection_steps=14):
    """Default prior parameters for the spike-and-slab model.

    The spike scale puts 95% of its mass within +-0.01; the dispersion prior
    places the slab-scale mode at 10 s0 with the 0.99 quantile above 3 s0; the
    probability prior moment-matches a minimally informative Beta; and g0 is
    the largest location-prior scale keeping independently sampled partial
    correlation matrices positive definite with frequency at least 0.95
    (seeded Monte Carlo on a bisection grid, common random numbers).

    Elicitation happens at the average network value, so the networks
    themselves only fix the coefficient count.
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    if networks is not None and networks.q:
        q = networks.q
    tau = 0.01
    s0 = round(tau / np.log(20.0), 3)
    m1 = float(np.log(9.0))
    g1 = float((m1 - np.log(2.0)) / ndtri(0.99))
    m2, g2 = _match_slab_probability(p)

    rng = np.random.default_rng(seed)
    n_pairs = p * (p - 1) // 2
    draws = (
        rng.standard_normal(n_mc),
        m1 + g1 * rng.standard_normal(n_mc),
        m2 + g2 * rng.standard_normal(n_mc),
        rng.random((n_mc, n_pairs)),
        rng.laplace(0.0, 1.0, (n_mc, n_pairs)),
    )
    if _pd_frequency(g0_floor, p, draws) < 0.95:
        raise ElicitationError(
            f"PD frequency below 0.95 even at the g0 floor {g0_floor}")
    lo, hi = g0_floor, g0_ceiling
    for _ in range(bisection_steps):
        mid = 0.5 * (lo + hi)
        if _pd_frequency(mid, p, draws) >= 0.95:
            lo = mid
        else:
            hi = mid
    g0 = lo

    k = q + 1
    eta0 = np.zeros(k)
    eta1 = np.zeros(k)
    eta1[0] = m1
    eta2 = np.zeros(k)
    eta2[0] = m2
    return SpikeSlabHyper(eta0=eta0, eta1=eta1, eta2=eta2, s0=s0, g0=g0,
                          m1=m1, g1=g1, m2=m2, g2=g2, ig_a=0.01, ig_b=0.01,
                          p=p, n=n)


# ---------------------------------------------------------------------------
# unconstrained view for HMC


class SpikeSlabModel:
    """Bijection between LatentState and an unconstrained vector plus target.

    sqrt_diag passes through log, the selector u through logit; both Jacobian
    corrections are folded into the returned log density so plain leapfrog
    dynamics never leave the support.  The log-scale block is divided by its
    asymptotic posterior scale 1/sqrt(2n) and eta_tilde by its prior scale,
    so identity-mass leapfrog dynamics see comparable curvatures.  With
    ``fix_eta`` the hyperparameter block is dropped from the vector and taken
    from ``hyper``.
    """

    U_SCALE = 1.0

    def __init__(self, S, n, networks, hyper, fix_eta=False):
        self.S = S.S if hasattr(S, "S") else np.asarray(S, dtype=float)
        self.n = n
        self.networks = networks
        self.hyper = hyper
        self.fix_eta = fix_eta
        self.p = self.S.shape[0]
        self.n_edges = self.p * (self.p - 1) // 2
        self.n_eta = 0 if fix_eta else 3 * hyper.n_channels
        self.dim = self.p + 3 * self.n_edges + self.n_eta
        scales = [np.full(self.p, 1.0 / np.sqrt(2.0 * n)),
                  np.ones(self.n_edges), np.ones(self.n_edges),
                  np.full(self.n_edges, self.U_SCALE)]
        if not fix_eta:
            scales.append(np.full(self.n_eta, hyper.repar_scale))
        self.scales = np.concatenate(scales)
        # cached pieces for the fused density+gradient evaluation
        self._A = edge_design(networks, self.p)
        self._iu = np.triu_indices(self.p, 1)
        self._eye = np.eye(self.p)
        self._prior_means = hyper.prior_means()
        self._prior_scale = hyper.prior_sds() / hyper.repar_scale
        self._k = hyper.n_channels
        self._de_const = 2.0 * self.n_edges * np.log(2.0)
        self._ig_const = self.p * (hyper.ig_a * np.log(hyper.ig_b) - gammaln(hyper.ig_a))
        self._lik_const = 0.5 * n * self.p * np.log(2.0 * np.pi)
        r2 = hyper.repar_scale ** 2
        self._eta_const = 0.5 * self.n_eta * np.log(2.0 * np.pi * r2)
        self._eta_prec = 1.0 / r2

    def pack(self, state):
        parts = [np.log(state.sqrt_diag), state.rho_spike_raw,
                 state.rho_slab_raw, np.log(state.u) - np.log1p(-state.u)]
        if not self.fix_eta:
            parts.append(state.eta_tilde)
        return np.concatenate(parts) / self.scales

    def unpack(self, x):
        raw = x * self.scales
        p, e = self.p, self.n_edges
        u = expit(raw[p + 2 * e: p + 3 * e])
        eps = np.finfo(float).tiny
        u = np.clip(u, eps, 1.0 - 1e-16)
        return LatentState(
            sqrt_diag=np.exp(np.clip(raw[:p], -EXP_CAP, EXP_CAP)),
            rho_spike_raw=raw[p: p + e],
            rho_slab_raw=raw[p + e: p + 2 * e],
            u=u,
            eta_tilde=None if self.fix_eta else raw[p + 3 * e:],
        )

    def init_state(self, seed=0):
        rng = np.random.default_rng(seed)
        state = LatentState(
            sqrt_diag=np.exp(0.05 * rng.standard_normal(self.p)),
            rho_spike_raw=0.1 * rng.laplace(size=self.n_edges),
            rho_slab_raw=0.1 * rng.laplace(size=self.n_edges),
            u=rng.uniform(0.2, 0.8, self.n_edges),
            eta_tilde=None if self.fix_eta else 0.1 * rng.standard_normal(self.n_eta),
        )
        return state

    def init_state_informed(self, seed=0, edge_z=2.33):
        """Warm start from a ridge-regularized sample precision.

        The steep component-selector sigmoid makes u rarely cross between the
        spike and slab sides when the two branch values differ a lot, so
        decisively nonzero edges (|rho_hat| above edge_z / sqrt(n)) start on
        the slab side.  Ambiguous edges start in the spike and cross on their
        own: their barrier is low because both branch values sit near zero.
        Initialization does not change the target; it only spares the chain
        near-impossible wall crossings.
        """
        from .core import partial_corr_of

        rng = np.random.default_rng(seed)
        ridge = 0.1 * float(np.mean(np.diag(self.S)))
        sigma0 = self.S + ridge * np.eye(self.p)
        theta0 = np.linalg.inv(sigma0)
        rho_hat = partial_corr_of(theta0)[self._iu]
        hyper = self.hyper
        w, mean, s = slab_terms(self._A, hyper.with_eta(hyper.eta0, hyper.eta1,
                                                        hyper.eta2))
        w = np.clip(np.broadcast_to(w, (self.n_edges,)), 1e-4, 1.0 - 1e-4)
        mean = np.broadcast_to(mean, (self.n_edges,))
        s = np.broadcast_to(s, (self.n_edges,))
        in_slab = np.abs(rho_hat) > edge_z / np.sqrt(self.n)
        u = np.where(in_slab, 0.5 * w, w + 0.6 * (1.0 - w))
        jitter = 0.05 * rng.uniform(-1.0, 1.0, self.n_edges)
        u = np.clip(u * (1.0 + jitter), 1e-5, 1.0 - 1e-5)
        rho_slab = np.where(in_slab, np.clip((rho_hat - mean) / s, -6.0, 6.0),
                            0.1 * rng.laplace(size=self.n_edges))
        rho_spike = np.where(in_slab, 0.1 * rng.laplace(size=self.n_edges),
                             np.clip(rho_hat / hyper.s0, -3.0, 3.0))
        state = LatentState(
            sqrt_diag=np.sqrt(np.diag(theta0)) * np.exp(0.02 * rng.standard_normal(self.p)),
            rho_spike_raw=rho_spike,
            rho_slab_raw=rho_slab,
            u=u,
            eta_tilde=None if self.fix_eta else 0.05 * rng.standard_normal(self.n_eta),
        )
        if np.isfinite(self.logp(self.pack(state))):
            return state
        return self.init_state(seed)

    def logp(self, x):
        return self.logp_grad(x, want_grad=False)[0]

    def logp_grad(self, x, want_grad=True):
        """Fused unconstrained log density and gradient.

        Operates on raw arrays (no LatentState construction) since this runs
        once per leapfrog step; equality with the public log_posterior /
        grad_log_posterior pair is pinned by tests.
        """
        hyper = self.hyper
        raw = x * self.scales
        p, e = self.p, self.n_edges
        log_d = np.clip(raw[:p], -EXP_CAP, EXP_CAP)
        d = np.exp(log_d)
        rs = raw[p: p + e]
        rl = raw[p + e: p + 2 * e]
        v = raw[p + 2 * e: p + 3 * e]
        u = expit(v)
        u = np.clip(u, np.finfo(float).tiny, 1.0 - 1e-16)
        bad = (-np.inf, np.zeros_like(x)) if want_grad else (-np.inf, None)

        if self.fix_eta:
            eta0, eta1, eta2 = hyper.eta0, hyper.eta1, hyper.eta2
        else:
            eta = self._prior_means + raw[p + 3 * e:] * self._prior_scale
            k = self._k
            eta0, eta1, eta2 = eta[:k], eta[k:2 * k], eta[2 * k:]
        A = self._A
        t1 = A @ eta1
        w = expit(A @ eta2)
        mean = A @ eta0
        s = hyper.s0 * (1.0 + np.exp(np.minimum(t1, EXP_CAP)))
        g_spike = expit(SIGMOID_SLOPE * (u - w))
        spike_val = hyper.s0 * rs
        slab_val = mean + s * rl
        rho = g_spike * spike_val + (1.0 - g_spike) * slab_val
        if np.any(np.abs(rho) >= 1.0):
            return bad
        C = self._eye.copy()
        C[self._iu] = -rho
        C[(self._iu[1], self._iu[0])] = -rho
        try:
            chol = np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            return bad

        n = self.n
        logdet = 2.0 * np.sum(log_d) + 2.0 * np.sum(np.log(np.diag(chol)))
        dsd = self.S * np.outer(d, d)
        base = 0.5 * n * (logdet - np.sum(dsd * C)) - self._lik_const
        base += -np.sum(np.abs(rs)) - np.sum(np.abs(rl)) - self._de_const
        a, b = hyper.ig_a, hyper.ig_b
        base += self._ig_const - (a + 1.0) * np.sum(log_d) - b * np.sum(1.0 / d)
        if not self.fix_eta:
            et = raw[p + 3 * e:]
            base += -0.5 * self._eta_prec * np.sum(et ** 2) - self._eta_const
        jac = np.sum(log_d) + np.sum(log_expit(v) + log_expit(-v))
        lp = base + jac
        if not want_grad:
            return lp, None

        Cinv = linalg.cho_solve((chol, True), self._eye, check_finite=False)
        dl_drho = n * (dsd[self._iu] - Cinv[self._iu])
        sc = self.S * C
        g_diag = n * (1.0 / d - sc @ d) - (a + 1.0) / d + b / d ** 2

        branch_gap = spike_val - slab_val
        dg = SIGMOID_SLOPE * g_spike * (1.0 - g_spike)
        out = np.empty_like(x)
        out[:p] = (g_diag * d + 1.0)
        out[p: p + e] = dl_drho * (g_spike * hyper.s0) - np.sign(rs)
        out[p + e: p + 2 * e] = dl_drho * ((1.0 - g_spike) * s) - np.sign(rl)
        uu = u * (1.0 - u)
        out[p + 2 * e: p + 3 * e] = dl_drho * (dg * branch_gap) * uu + (1.0 - 2.0 * u)
        if not self.fix_eta:
            one_m = 1.0 - g_spike
            drho_dt0 = dl_drho * one_m
            ds_dt1 = hyper.s0 * np.exp(np.minimum(t1, EXP_CAP)) * (t1 < EXP_CAP)
            drho_dt1 = dl_drho * one_m * rl * ds_dt1
            drho_dt2 = dl_drho * (-dg * branch_gap) * (w * (1.0 - w))
            g_eta = np.concatenate([A.T @ drho_dt0, A.T @ drho_dt1, A.T @ drho_dt2])
            out[p + 3 * e:] = g_eta * self._prior_scale - et * self._eta_prec
        return lp, out * self.scales

    def decode_draw(self, x):
        state = self.unpack(x)
        param = decode(state, self.networks, self.hyper)
        eta = _current_eta(state, self.hyper)
        return param, eta
