"""Nonparanormal marginal transforms.

Each column is mapped through its winsorized empirical CDF and the standard
normal quantile function, then rescaled to unit sample variance; new values
interpolate monotonically between the fitted knots.  This Gaussianizes
heavy-tailed inputs ahead of either estimator.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from .core import DataMatrix


def winsorization_level(n):
    """Truncation level 1 / (4 n^{1/4} sqrt(pi log n)) for the ECDF ranks."""
    return 1.0 / (4.0 * n ** 0.25 * np.sqrt(np.pi * np.log(n)))


@dataclass(frozen=True)
class NpnTransform:
    knots: tuple          # per column: sorted distinct original values
    scores: tuple         # per column: matching Gaussian scores (nondecreasing)
    delta_n: float
    column_names: tuple

    @property
    def p(self):
        return len(self.knots)


def fit_npn(y):
    """Fit the Gaussianizing transform column by column.

    Requires at least 10 rows; a constant column cannot be Gaussianized and
    raises an error naming it.
    """
    dm = y if isinstance(y, DataMatrix) else DataMatrix(y)
    vals = dm.values
    n, p = vals.shape
    if n < 10:
        raise ValueError(f"need at least 10 observations, got {n}")
    delta = winsorization_level(n)
    knots, scores = [], []
    for j in range(p):
        col = vals[:, j]
        if np.ptp(col) == 0.0:
            raise ValueError(f"column {dm.column_names[j]!r} is constant")
        ranks = rankdata(col, method="average") / n
        z = ndtri(np.clip(ranks, delta, 1.0 - delta))
        z = z / z.std(ddof=1)
        order = np.argsort(col, kind="stable")
        xk, zk = [], []
        for i in order:
            if xk and col[i] == xk[-1]:
                continue
            xk.append(col[i])
            zk.append(z[i])
        knots.append(np.asarray(xk))
        scores.append(np.maximum.accumulate(np.asarray(zk)))
    return NpnTransform(knots=tuple(knots), scores=tuple(scores),
                        delta_n=delta, column_names=dm.column_names)


def apply_npn(transform, y):
    """Map data through the fitted transform.

    Values between knots interpolate linearly; values beyond the outermost
    knots clamp to the boundary scores.  The column set must match the fit.
    """
    dm = y if isinstance(y, DataMatrix) else DataMatrix(y)
    if dm.p != transform.p or dm.column_names != transform.column_names:
        raise ValueError("column set does not match the fitted transform")
    out = np.empty_like(dm.values)
    for j in range(dm.p):
        out[:, j] = np.interp(dm.values[:, j], transform.knots[j],
                              transform.scores[j])
    return DataMatrix(values=out, column_names=dm.column_names)
