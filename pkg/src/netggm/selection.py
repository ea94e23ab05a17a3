"""Hyperparameter selection for the network graphical LASSO.

The network coefficients beta are chosen by minimizing BIC/EBIC over either a
warm-started Cartesian grid or a Gaussian-process Bayesian optimization loop;
models are additionally scored by 10-fold cross-validated log-likelihood.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import DataMatrix, gaussian_loglik, sample_cov
from .golazo import GolazoConvergenceError, PenaltyModel, count_edges, solve


@dataclass(frozen=True)
class GridSpec:
    """Axis layout for the beta grid.

    The intercept axis spans ``beta0_span`` log-units up to the analytic
    upper bound (above it the solution is fully sparse); each network axis is
    symmetric about zero.
    """

    n_beta0: int = 50
    beta0_span: float = 6.0
    n_betaq: int = 50
    betaq_range: tuple = (-3.0, 3.0)
    beta0_grid: np.ndarray = None
    betaq_grid: np.ndarray = None

    def axes(self, bound, n_networks):
        if self.beta0_grid is not None:
            b0 = np.asarray(self.beta0_grid, dtype=float)
        else:
            top = bound if np.isfinite(bound) else 0.0
            b0 = np.linspace(top - self.beta0_span, top, self.n_beta0)
        if n_networks == 0:
            return [b0]
        if self.betaq_grid is not None:
            bq = np.asarray(self.betaq_grid, dtype=float)
        else:
            bq = np.linspace(self.betaq_range[0], self.betaq_range[1], self.n_betaq)
        return [b0] + [bq] * n_networks


@dataclass(frozen=True)
class SelectionResult:
    beta_hat: np.ndarray
    criterion_value: float
    criterion_kind: str
    trace: tuple
    solution: object


def bic(sol, S, n):
    """-2 loglik + |E| log n with edges counted after 5-decimal rounding."""
    Smat = S.S if hasattr(S, "S") else S
    return -2.0 * gaussian_loglik(Smat, sol.theta_hat, n) + count_edges(sol) * np.log(n)


def ebic(sol, S, n, gamma):
    """BIC plus the extended penalty 4 |E| gamma log p."""
    if not 0.0 <= gamma <= 0.5:
        raise ValueError(f"gamma must be in [0, 0.5], got {gamma}")
    p = sol.theta_hat.shape[0]
    return bic(sol, S, n) + 4.0 * count_edges(sol) * gamma * np.log(p)


def make_criterion(kind="bic", gamma=0.5):
    """Closure evaluating the requested criterion; kind is 'bic' or 'ebic'."""
    kind = kind.lower()
    if kind == "bic":
        fn = lambda sol, S, n: bic(sol, S, n)
        label = "bic"
    elif kind == "ebic":
        fn = lambda sol, S, n: ebic(sol, S, n, gamma)
        label = f"ebic({gamma:g})"
    else:
        raise ValueError(f"unknown criterion {kind!r}")
    return fn, label


def beta0_upper_bound(S):
    """log of the largest absolute off-diagonal empirical correlation.

    For beta_0 above this value (with all beta_q = 0 and standardized data)
    every penalty exceeds |S_jk| and the solution is fully sparse; the grid
    never needs to search beyond it.  Returns -inf when all off-diagonals
    vanish.
    """
    Smat = S.S if hasattr(S, "S") else np.asarray(S, dtype=float)
    d = np.sqrt(np.diag(Smat))
    R = Smat / np.outer(d, d)
    iu = np.triu_indices(Smat.shape[0], 1)
    m = np.max(np.abs(R[iu])) if iu[0].size else 0.0
    if m == 0.0:
        return -np.inf
    return float(np.log(m))


def _evaluate(S, networks, beta, n, criterion_fn, warm, tol):
    p = (S.S if hasattr(S, "S") else S).shape[0]
    pen = PenaltyModel.from_networks(beta, networks, p=p)
    try:
        sol = solve(S, pen, warm_start=warm, tol=tol)
    except GolazoConvergenceError as err:
        return np.inf, err.solution
    except np.linalg.LinAlgError:
        return np.inf, None
    return criterion_fn(sol, S, n), sol


def grid_search(S, networks, n, criterion="bic", grid_spec=None, ebic_gamma=0.5,
                tol=1e-6):
    """Exhaustive warm-started search over the beta grid.

    Failed solves enter the trace at +inf and the search continues; if every
    grid point fails the search raises.
    """
    grid_spec = grid_spec or GridSpec()
    crit_fn, label = make_criterion(criterion, ebic_gamma)
    nq = networks.q if networks is not None else 0
    axes = grid_spec.axes(beta0_upper_bound(S), nq)
    mesh = [a.ravel() for a in np.meshgrid(*axes, indexing="ij")]
    points = np.column_stack(mesh)
    if points.shape[0] == 0:
        raise ValueError("empty grid")

    trace = []
    best = (np.inf, None, None)
    warm = None
    for beta in points:
        val, sol = _evaluate(S, networks, beta, n, crit_fn, warm, tol)
        if sol is not None:
            warm = sol
        trace.append((tuple(beta.tolist()), float(val)))
        if val < best[0]:
            best = (val, beta.copy(), sol)
    if best[1] is None:
        raise RuntimeError("every grid point failed to solve")
    return SelectionResult(beta_hat=best[1], criterion_value=float(best[0]),
                           criterion_kind=label, trace=tuple(trace), solution=best[2])


class _GaussianProcess:
    """Squared-exponential GP with median-heuristic length scales.

    Signal/noise variances come from marginal-likelihood maximization over a
    small fixed grid; the kernel matrix gets escalating jitter if needed.
    """

    def __init__(self, X, y):
        self.X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.mu = float(np.mean(y))
        self.sd = float(np.std(y)) or 1.0
        self.y = (y - self.mu) / self.sd
        d = self.X[:, None, :] - self.X[None, :, :]
        scales = []
        for k in range(self.X.shape[1]):
            pair = np.abs(d[..., k][np.triu_indices(len(y), 1)])
            med = np.median(pair[pair > 0]) if np.any(pair > 0) else 1.0
            scales.append(med if med > 0 else 1.0)
        self.ls = np.asarray(scales)
        self._fit()

    def _k(self, A, B):
        d = (A[:, None, :] - B[None, :, :]) / self.ls
        return np.exp(-0.5 * np.sum(d * d, axis=-1))

    def _fit(self):
        K0 = self._k(self.X, self.X)
        n = K0.shape[0]
        best = None
        for sf2 in (0.25, 1.0, 4.0):
            for sn2 in (1e-6, 1e-4, 1e-2):
                K = sf2 * K0 + sn2 * np.eye(n)
                try:
                    L = np.linalg.cholesky(K)
                except np.linalg.LinAlgError:
                    continue
                alpha = np.linalg.solve(L.T, np.linalg.solve(L, self.y))
                ml = -0.5 * self.y @ alpha - np.sum(np.log(np.diag(L)))
                if best is None or ml > best[0]:
                    best = (ml, sf2, sn2, L, alpha)
        if best is None:
            for jitter in (1e-6, 1e-4, 1e-2, 1.0):
                try:
                    K = K0 + jitter * np.eye(n)
                    L = np.linalg.cholesky(K)
                    alpha = np.linalg.solve(L.T, np.linalg.solve(L, self.y))
                    best = (0.0, 1.0, jitter, L, alpha)
                    break
                except np.linalg.LinAlgError:
                    continue
            else:
                raise RuntimeError("degenerate GP kernel matrix")
        _, self.sf2, self.sn2, self.L, self.alpha = best

    def predict(self, Xs):
        Ks = self.sf2 * self._k(np.asarray(Xs, dtype=float), self.X)
        mean = Ks @ self.alpha
        v = np.linalg.solve(self.L, Ks.T)
        var = np.maximum(self.sf2 - np.sum(v * v, axis=0), 1e-12)
        return self.mu + self.sd * mean, (self.sd ** 2) * var


def _stratified_design(lo, hi, n_points, rng):
    # Latin-hypercube style: per-axis stratified draws, independently permuted
    dim = lo.shape[0]
    out = np.empty((n_points, dim))
    for k in range(dim):
        u = (np.arange(n_points) + rng.random(n_points)) / n_points
        out[:, k] = lo[k] + (hi[k] - lo[k]) * rng.permutation(u)
    return out


def bayes_opt(S, networks, n, criterion="bic", budget=None, ebic_gamma=0.5,
              seed=0, beta0_span=6.0, betaq_range=(-3.0, 3.0), tol=1e-6,
              ucb_kappa=2.0, n_candidates=2048):
    """Gaussian-process search for the criterion minimizer.

    The acquisition is the lower confidence bound mean - kappa * sd, minimized
    over seeded random candidates; the default budget is 15 + 5 Q and the best
    *observed* point is returned.
    """
    nq = networks.q if networks is not None else 0
    dim = nq + 1
    if budget is None:
        budget = 15 + 5 * nq
    if budget < dim + 2:
        raise ValueError(f"budget {budget} < dim(beta)+2 = {dim + 2}")
    crit_fn, label = make_criterion(criterion, ebic_gamma)
    bound = beta0_upper_bound(S)
    top = bound if np.isfinite(bound) else 0.0
    lo = np.array([top - beta0_span] + [betaq_range[0]] * nq)
    hi = np.array([top] + [betaq_range[1]] * nq)

    rng = np.random.default_rng(seed)
    n_init = min(5 + 2 * nq, budget)
    X = _stratified_design(lo, hi, n_init, rng)
    trace = []
    evals = []
    warm = None
    best = (np.inf, None, None)

    def run_point(beta):
        nonlocal warm, best
        val, sol = _evaluate(S, networks, beta, n, crit_fn, warm, tol)
        if sol is not None:
            warm = sol
        trace.append((tuple(np.asarray(beta).tolist()), float(val)))
        evals.append((np.asarray(beta, dtype=float), val))
        if val < best[0]:
            best = (val, np.asarray(beta, dtype=float).copy(), sol)

    for beta in X:
        run_point(beta)
    while len(evals) < budget:
        pts = np.array([e[0] for e in evals])
        vals = np.array([min(e[1], 1e12) for e in evals])  # cap failures
        gp = _GaussianProcess(pts, vals)
        cand = lo + (hi - lo) * rng.random((n_candidates, dim))
        mean, var = gp.predict(cand)
        acq = mean - ucb_kappa * np.sqrt(var)
        run_point(cand[int(np.argmin(acq))])

    if best[1] is None:
        raise RuntimeError("every evaluation failed to solve")
    return SelectionResult(beta_hat=best[1], criterion_value=float(best[0]),
                           criterion_kind=label, trace=tuple(trace), solution=best[2])


def cv_loglik(y, networks, beta, folds=10, seed=0, tol=1e-6):
    """Mean per-fold held-out log-likelihood under the solution at beta.

    Rows are partitioned by a seeded shuffle; each fold's model is fit on the
    training covariance and scored on the held-out rows assuming zero mean.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    vals = y.values if isinstance(y, DataMatrix) else np.asarray(y, dtype=float)
    n, p = vals.shape
    if n < folds:
        raise ValueError(f"n={n} smaller than folds={folds}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    splits = np.array_split(order, folds)
    scores = []
    warm = None
    for heldout in splits:
        train = np.setdiff1d(order, heldout, assume_unique=True)
        if train.shape[0] <= 1:
            raise ValueError("a fold left fewer than 2 training rows")
        S_train = sample_cov(vals[train])
        pen = PenaltyModel.from_networks(beta, networks, p=p)
        sol = solve(S_train, pen, warm_start=warm, tol=tol)
        warm = sol
        S_test = sample_cov(vals[heldout])
        scores.append(gaussian_loglik(S_test, sol.theta_hat, n=heldout.shape[0]))
    return float(np.mean(scores))
