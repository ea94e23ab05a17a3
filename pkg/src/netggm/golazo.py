"""Network graphical LASSO via the GOLAZO block-coordinate dual.

The objective is the penalized Gaussian log-likelihood

    maximize  log det(Theta) - tr(S Theta) - sum_{j!=k} lambda_jk |Theta_jk|

with per-edge penalties lambda_jk = exp(beta_0 + sum_q beta_q abar_jk^(q)).
The dual maximizes log det(Sigma) over the box |Sigma_jk - S_jk| <= lambda_jk
with Sigma_jj = S_jj fixed; rows are updated in turn by a small box-constrained
QP solved with cyclic coordinate descent.
"""

from dataclasses import dataclass, field

import numpy as np

EXP_CAP = 700.0  # exp overflow guard on the penalty log-scale
EDGE_TOL = 0.5e-5  # nonzero after rounding to 5 decimals


class GolazoConvergenceError(RuntimeError):
    """Raised when the sweep limit is hit; carries the last iterate."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class PenaltyModel:
    """Per-edge penalties derived from network regression coefficients."""

    beta: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        lam = np.asarray(self.lam, dtype=float)
        if not np.all(np.isfinite(lam)):
            raise ValueError("penalty matrix has non-finite entries")
        if np.any(lam < 0):
            raise ValueError("penalties must be nonnegative")
        beta.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "lam", lam)

    @classmethod
    def from_networks(cls, beta, networks, p=None):
        """lambda_jk = exp(beta_0 + sum_q beta_q abar_jk^(q)), exponent capped."""
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        if networks is not None and networks.q:
            p = networks.p
            if beta.shape[0] != networks.q + 1:
                raise ValueError(f"beta has length {beta.shape[0]}, expected {networks.q + 1}")
            log_lam = np.full((p, p), beta[0])
            for q, a in enumerate(networks.standardized):
                log_lam = log_lam + beta[q + 1] * a
        else:
            if beta.shape[0] != 1:
                raise ValueError("beta beyond the intercept requires networks")
            if p is None:
                raise ValueError("p required without networks")
            log_lam = np.full((p, p), beta[0])
        lam = np.exp(np.minimum(log_lam, EXP_CAP))
        np.fill_diagonal(lam, 0.0)
        return cls(beta=beta, lam=lam)


@dataclass(frozen=True)
class GlassoSolution:
    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    edge_set: tuple
    iterations: int
    dual_gap: float
    edge_tol: float = EDGE_TOL

    @property
    def p(self):
        return self.theta_hat.shape[0]


def count_edges(sol, edge_tol=None):
    """Unordered pairs whose precision entry survives rounding to 5 decimals."""
    theta = sol.theta_hat if isinstance(sol, GlassoSolution) else np.asarray(sol)
    tol = edge_tol if edge_tol is not None else (
        sol.edge_tol if isinstance(sol, GlassoSolution) else EDGE_TOL)
    iu = np.triu_indices(theta.shape[0], 1)
    return int(np.sum(np.abs(theta[iu]) >= tol))


def edge_pairs(theta, edge_tol=EDGE_TOL):
    iu = np.triu_indices(theta.shape[0], 1)
    keep = np.abs(theta[iu]) >= edge_tol
    return tuple(zip(iu[0][keep].tolist(), iu[1][keep].tolist()))


def laplace_prior_logvar(penalty):
    """log prior variance of the partial covariances implied by the penalties.

    Equals log(2) - 2 log(lambda_jk) entrywise; the linearity-check subcommand
    compares this against binned estimates from a plain GLASSO fit.
    """
    lam = penalty.lam.copy()
    np.fill_diagonal(lam, 1.0)  # diagonal unused
    out = np.log(2.0) - 2.0 * np.log(lam)
    np.fill_diagonal(out, 0.0)
    return out


def _feasible_init(S, lam):
    """Box-feasible PD start: shrink off-diagonals toward diag(S) just enough."""
    absS = np.abs(S.copy())
    np.fill_diagonal(absS, 0.0)
    mask = absS > 0
    if not np.any(mask):
        return np.diag(np.diag(S)).astype(float)
    gamma = max(0.0, np.max(1.0 - lam[mask] / absS[mask]))
    gamma = min(gamma, 1.0 - 1e-12)
    sigma = gamma * S + (1.0 - gamma) * np.diag(np.diag(S))
    return sigma


def _project_box(sigma, S, lam):
    lo = S - lam
    hi = S + lam
    out = np.clip(sigma, lo, hi)
    np.fill_diagonal(out, np.diag(S))
    return 0.5 * (out + out.T)


def _row_qp(sigma, S, lam, j, inner_tol, max_inner=200):
    """Minimize d' (Sigma_{-j,-j})^{-1} d over the per-coordinate boxes.

    Cyclic coordinate descent with exact univariate minimization and clipping
    to [S_ij - lam_ij, S_ij + lam_ij].
    """
    idx = np.arange(sigma.shape[0]) != j
    H = np.linalg.inv(sigma[np.ix_(idx, idx)])
    d = sigma[idx, j].copy()
    lo = S[idx, j] - lam[idx, j]
    hi = S[idx, j] + lam[idx, j]
    hd = H @ d
    diag = np.diag(H)
    for _ in range(max_inner):
        delta = 0.0
        for i in range(d.shape[0]):
            target = d[i] - hd[i] / diag[i]
            new = min(max(target, lo[i]), hi[i])
            step = new - d[i]
            if step != 0.0:
                hd += step * H[:, i]
                d[i] = new
                delta = max(delta, abs(step))
        if delta < inner_tol:
            break
    return d


def solve(S, penalty, warm_start=None, tol=1e-6, max_sweeps=None, edge_tol=EDGE_TOL):
    """Solve the network graphical LASSO for fixed penalties.

    Parameters
    ----------
    S : SampleCov or ndarray
        Empirical covariance (divisor n).
    penalty : PenaltyModel
        Per-edge penalties; diagonal ignored.
    warm_start : GlassoSolution, optional
        Previous solution; its covariance is projected into the feasible box.
    tol : float
        Outer stopping rule: max entry change of Sigma across a full sweep.
    max_sweeps : int, optional
        Defaults to 10 * p.

    Returns
    -------
    GlassoSolution
        With ``theta_hat = inv(sigma_hat)``, the active edge set, sweep count
        and the primal-dual gap.
    """
    Smat = S.S if hasattr(S, "S") else np.asarray(S, dtype=float)
    p = Smat.shape[0]
    if np.any(np.diag(Smat) <= 0):
        j = int(np.argmin(np.diag(Smat)))
        raise ValueError(f"S has a nonpositive diagonal entry at index {j}")
    lam = penalty.lam
    if max_sweeps is None:
        max_sweeps = max(10 * p, 50)
    inner_tol = tol / 10.0

    sigma = None
    if warm_start is not None:
        cand = _project_box(np.array(warm_start.sigma_hat, dtype=float), Smat, lam)
        try:
            np.linalg.cholesky(cand)
            sigma = cand
        except np.linalg.LinAlgError:
            sigma = None
    if sigma is None:
        sigma = _feasible_init(Smat, lam)

    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        max_change = 0.0
        for j in range(p):
            d = _row_qp(sigma, Smat, lam, j, inner_tol)
            idx = np.arange(p) != j
            change = np.max(np.abs(sigma[idx, j] - d)) if d.size else 0.0
            max_change = max(max_change, change)
            sigma[idx, j] = d
            sigma[j, idx] = d
        if max_change < tol:
            converged = True
            break

    theta = np.linalg.inv(sigma)
    theta = 0.5 * (theta + theta.T)
    offdiag = ~np.eye(p, dtype=bool)
    gap = float(np.sum(Smat * theta) - p + np.sum(lam[offdiag] * np.abs(theta[offdiag])))
    sol = GlassoSolution(
        theta_hat=theta,
        sigma_hat=sigma,
        edge_set=edge_pairs(theta, edge_tol),
        iterations=sweeps,
        dual_gap=gap,
        edge_tol=edge_tol,
    )
    if not converged:
        raise GolazoConvergenceError(
            f"no convergence after {max_sweeps} sweeps (last gap {gap:.3g})", solution=sol)
    return sol
