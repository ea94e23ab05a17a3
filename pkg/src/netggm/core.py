"""Core data containers and Gaussian/partial-correlation algebra.

Everything here is a plain immutable value plus pure functions; both the
penalized and the Bayesian estimators build on these primitives.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg


class NotPositiveDefiniteError(ValueError):
    pass


def _as_float_matrix(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ValueError(f"{name} has a non-finite entry at row {bad[0]}, column {bad[1]}")
    return arr


def _check_symmetric(a, name, tol=1e-8):
    dev = np.max(np.abs(a - a.T)) if a.size else 0.0
    if dev > tol:
        raise ValueError(f"{name} is not symmetric (max asymmetry {dev:.3g} > {tol:.1g})")


@dataclass(frozen=True)
class DataMatrix:
    """n x p observations, rows are observations, columns are variables."""

    values: np.ndarray
    column_names: tuple = None

    def __post_init__(self):
        vals = _as_float_matrix(self.values, "data")
        n, p = vals.shape
        if n < 2:
            raise ValueError(f"need at least 2 observations, got {n}")
        if p < 2:
            raise ValueError(f"need at least 2 variables, got {p}")
        names = self.column_names
        if names is None:
            names = tuple(f"V{j + 1}" for j in range(p))
        else:
            names = tuple(str(c) for c in names)
            if len(names) != p:
                raise ValueError(f"{len(names)} column names for {p} columns")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class CovariateMatrix:
    """n x d covariates; an intercept column is prepended when requested."""

    values: np.ndarray
    intercept: bool = True

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("covariates must be 2-d")
        if vals.size and not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            raise ValueError(f"covariates have a non-finite entry at row {bad[0]}, column {bad[1]}")
        if self.intercept and vals.shape[1] > 0:
            col_sd = vals.std(axis=0)
            if np.any(col_sd == 0):
                j = int(np.argmin(col_sd))
                raise ValueError(
                    f"covariate column {j} is constant and duplicates the intercept"
                )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def d(self):
        return self.values.shape[1]

    def design(self, n=None):
        """Full design matrix including the intercept column when set."""
        vals = self.values
        if n is None:
            n = vals.shape[0]
        if self.intercept:
            return np.column_stack([np.ones(n), vals]) if vals.size else np.ones((n, 1))
        return vals


@dataclass(frozen=True)
class SampleCov:
    S: np.ndarray
    n_obs: int

    def __post_init__(self):
        S = _as_float_matrix(self.S, "covariance")
        if S.shape[0] != S.shape[1]:
            raise ValueError("covariance must be square")
        _check_symmetric(S, "covariance", tol=1e-12)
        if np.any(np.diag(S) < 0):
            raise ValueError("covariance has a negative diagonal entry")
        S.setflags(write=False)
        object.__setattr__(self, "S", S)

    @property
    def p(self):
        return self.S.shape[0]


@dataclass(frozen=True)
class PrecisionParam:
    """Precision matrix factored as sqrt-diagonal scales and partial correlations.

    ``sqrt_diag[j]`` holds the square root of the j-th diagonal precision
    entry; ``partial_corr`` is symmetric with zero diagonal and entries in
    (-1, 1).  Positive definiteness of the assembled matrix is *not* enforced
    here; query it with :meth:`is_valid`.
    """

    sqrt_diag: np.ndarray
    partial_corr: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.sqrt_diag, dtype=float)
        r = _as_float_matrix(self.partial_corr, "partial_corr")
        if d.ndim != 1 or d.shape[0] != r.shape[0] or r.shape[0] != r.shape[1]:
            raise ValueError("sqrt_diag and partial_corr shapes are inconsistent")
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise ValueError("sqrt_diag entries must be strictly positive and finite")
        _check_symmetric(r, "partial_corr", tol=1e-10)
        off = r[~np.eye(r.shape[0], dtype=bool)]
        if off.size and np.max(np.abs(off)) >= 1.0:
            raise ValueError("off-diagonal partial correlations must lie in (-1, 1)")
        if np.max(np.abs(np.diag(r))) > 1e-12:
            raise ValueError("partial_corr must have a zero diagonal")
        d.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "sqrt_diag", d)
        object.__setattr__(self, "partial_corr", r)

    @property
    def p(self):
        return self.sqrt_diag.shape[0]

    def is_valid(self):
        """True when the assembled precision matrix is positive definite."""
        theta = assemble_precision(self)
        try:
            np.linalg.cholesky(theta)
        except np.linalg.LinAlgError:
            return False
        return True


def standardize_offdiag(a):
    """Zero-mean/unit-variance rescaling over the off-diagonal entries.

    The diagonal is irrelevant (self-connections carry no information) and is
    set to zero in the result.
    """
    a = np.asarray(a, dtype=float)
    p = a.shape[0]
    iu = np.triu_indices(p, 1)
    vals = a[iu]
    mu = vals.mean()
    sd = vals.std()
    if sd == 0:
        raise ValueError("network has constant off-diagonal entries; cannot standardize")
    out = np.zeros_like(a)
    out[iu] = (vals - mu) / sd
    out = out + out.T
    return out


@dataclass(frozen=True)
class NetworkStack:
    """Q symmetric p x p network matrices plus the implicit intercept channel."""

    raw: tuple
    names: tuple = None
    standardized: tuple = field(init=False, default=None)

    def __post_init__(self):
        mats = []
        p = None
        for q, m in enumerate(self.raw):
            m = _as_float_matrix(m, f"network {q}")
            if m.shape[0] != m.shape[1]:
                raise ValueError(f"network {q} is not square")
            _check_symmetric(m, f"network {q}")
            if p is None:
                p = m.shape[0]
            elif m.shape[0] != p:
                raise ValueError(f"network {q} has size {m.shape[0]}, expected {p}")
            m.setflags(write=False)
            mats.append(m)
        names = self.names
        if names is None:
            names = tuple(f"A{q + 1}" for q in range(len(mats)))
        else:
            names = tuple(str(s) for s in names)
            if len(names) != len(mats):
                raise ValueError("one name per network required")
        std = tuple(standardize_offdiag(m) for m in mats)
        for m in std:
            m.setflags(write=False)
        object.__setattr__(self, "raw", tuple(mats))
        object.__setattr__(self, "standardized", std)
        object.__setattr__(self, "names", names)

    @property
    def q(self):
        return len(self.raw)

    @property
    def p(self):
        return self.raw[0].shape[0] if self.raw else None

    def edge_design(self, p=None):
        """(n_pairs, Q+1) design of standardized network values per j<k pair.

        Column 0 is the intercept.  ``p`` must be given for an empty stack.
        """
        if self.raw:
            p = self.p
        elif p is None:
            raise ValueError("p required for an empty network stack")
        iu = np.triu_indices(p, 1)
        cols = [np.ones(iu[0].shape[0])]
        cols += [m[iu] for m in self.standardized]
        return np.column_stack(cols)


def assemble_precision(param):
    """Build the precision matrix from sqrt-diagonal scales and partial correlations.

    Theta_jj = sqrt_diag_j**2 and Theta_jk = -rho_jk * sqrt_diag_j * sqrt_diag_k.
    No positive-definiteness check is performed.
    """
    d = param.sqrt_diag
    rho = param.partial_corr
    c = -rho + np.eye(param.p)
    return c * np.outer(d, d)


def partial_corr_of(theta):
    """Partial correlations -Theta_jk / sqrt(Theta_jj Theta_kk) of a PD precision."""
    theta = _as_float_matrix(theta, "theta")
    _check_symmetric(theta, "theta")
    try:
        np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("theta is not positive definite")
    d = np.sqrt(np.diag(theta))
    rho = -theta / np.outer(d, d)
    np.fill_diagonal(rho, 0.0)
    return rho


def precision_param_of(theta):
    """Inverse of assemble_precision for a PD matrix."""
    rho = partial_corr_of(theta)
    return PrecisionParam(sqrt_diag=np.sqrt(np.diag(theta)), partial_corr=rho)


def gaussian_loglik(S, theta, n):
    """Zero-mean Gaussian log-likelihood of n observations with sufficient statistic S.

    Returns (n/2)(log det Theta - tr(S Theta)) - (n p / 2) log(2 pi); the
    constant is kept so cross-validated scores are absolute.
    """
    if isinstance(S, SampleCov):
        S = S.S
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]
    try:
        chol = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("theta is not positive definite")
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return 0.5 * n * (logdet - np.sum(S * theta)) - 0.5 * n * p * np.log(2.0 * np.pi)


def residualize(y, x):
    """Remove the per-column least-squares fit on covariates from the data.

    With the intercept flag set the returned columns have zero mean.  Raises
    when the design is rank deficient, naming the collinear columns.
    """
    X = x.design(n=y.n)
    if X.shape[1] == 0:
        return y
    if y.n <= X.shape[1]:
        raise ValueError(f"need n > d, got n={y.n}, d={X.shape[1]}")
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        # pinpoint columns that add no rank
        bad = []
        kept = np.zeros((X.shape[0], 0))
        for j in range(X.shape[1]):
            cand = np.column_stack([kept, X[:, j]])
            if np.linalg.matrix_rank(cand) == kept.shape[1]:
                bad.append(j)
            else:
                kept = cand
        labels = ["intercept" if (x.intercept and j == 0) else f"column {j - (1 if x.intercept else 0)}"
                  for j in bad]
        raise ValueError(f"covariates are rank deficient; collinear: {', '.join(labels)}")
    coef, *_ = np.linalg.lstsq(X, y.values, rcond=None)
    resid = y.values - X @ coef
    return DataMatrix(values=resid, column_names=y.column_names)


def sample_cov(y):
    """Second-moment matrix S = (1/n) sum_i y_i y_i' (divisor n, zero mean assumed)."""
    vals = y.values if isinstance(y, DataMatrix) else np.asarray(y, dtype=float)
    n = vals.shape[0]
    S = vals.T @ vals / n
    S = 0.5 * (S + S.T)
    return SampleCov(S=S, n_obs=n)


def solve_pd(theta, b):
    """theta^{-1} b through a Cholesky factorization (no regularization)."""
    c, low = linalg.cho_factor(theta, lower=True, check_finite=False)
    return linalg.cho_solve((c, low), b, check_finite=False)
