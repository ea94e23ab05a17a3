"""Simulation designs and the benchmark harness.

Generates sparse tri-diagonal-dominant precision matrices together with a
binary companion network whose agreement with the true edge set is controlled
(independent / mildly / strongly informative), runs estimators over seeded
replicates and reports MSE / FDR / FNR rows.
"""

import json
import time
from dataclasses import dataclass

import numpy as np

INFORMATIVENESS = {
    "independent": (0.5, 0.5),
    "mild": (0.75, 0.25),
    "strong": (0.85, 0.15),
}


@dataclass(frozen=True)
class SimDesign:
    p: int
    n: int
    informativeness: str
    seed: int = 0

    def __post_init__(self):
        if self.p < 4:
            raise ValueError("p must be at least 4")
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if self.informativeness not in INFORMATIVENESS:
            raise ValueError(f"informativeness must be one of {sorted(INFORMATIVENESS)}")


@dataclass(frozen=True)
class MetricRow:
    method: str
    mse: float
    fdr: float
    fnr: float
    n_replicates: int = 0
    n_failed: int = 0

    def __post_init__(self):
        if not (np.isnan(self.fdr) or 0.0 <= self.fdr <= 1.0):
            raise ValueError("FDR outside [0, 1]")
        if not (np.isnan(self.fnr) or 0.0 <= self.fnr <= 1.0):
            raise ValueError("FNR outside [0, 1]")
        if not (np.isnan(self.mse) or self.mse >= 0.0):
            raise ValueError("MSE must be nonnegative")


def _place_values(rng, n_slots, values):
    out = np.zeros(n_slots)
    pos = rng.permutation(n_slots)[: values.shape[0]]
    out[pos] = rng.permutation(values)
    return out


def gen_truth(design):
    """Draw the true precision matrix and its binary companion network.

    Theta has unit diagonal; round(0.95 (p-1)) tri-diagonal entries take
    values equispaced in [0.2, 0.5] and floor(0.5/p of the remaining band)
    take values equispaced in [-0.1, 0.1], positions seeded-shuffled.  The
    network marks each band with ones at the informativeness proportions.
    If the result is not positive definite the diagonal is inflated in 0.05
    steps until it is.
    """
    p = design.p
    rng = np.random.default_rng(design.seed)
    tri_rate, off_rate = INFORMATIVENESS[design.informativeness]

    n_tri = p - 1
    n_tri_nz = int(round(0.95 * n_tri))
    tri_vals = np.linspace(0.2, 0.5, n_tri_nz) if n_tri_nz else np.empty(0)
    tri = _place_values(rng, n_tri, tri_vals)

    off_idx = [(j, k) for j in range(p) for k in range(j + 2, p)]
    n_off = len(off_idx)
    n_off_nz = int((0.5 / p) * n_off)
    off_vals = np.linspace(-0.1, 0.1, n_off_nz) if n_off_nz else np.empty(0)
    off = _place_values(rng, n_off, off_vals)

    theta = np.eye(p)
    for j in range(p - 1):
        theta[j, j + 1] = theta[j + 1, j] = tri[j]
    for val, (j, k) in zip(off, off_idx):
        theta[j, k] = theta[k, j] = val

    infl = 0
    while np.linalg.eigvalsh(theta)[0] <= 0:
        infl += 1
        theta = theta + 0.05 * np.eye(p)
    del infl

    a = np.zeros((p, p))
    tri_ones = _place_values(rng, n_tri, np.ones(int(round(tri_rate * n_tri))))
    off_ones = _place_values(rng, n_off, np.ones(int(round(off_rate * n_off))))
    for j in range(p - 1):
        a[j, j + 1] = a[j + 1, j] = tri_ones[j]
    for val, (j, k) in zip(off_ones, off_idx):
        a[j, k] = a[k, j] = val
    return theta, a


def overlap_proportion(theta, a):
    """Fraction of j<k pairs where a_jk agrees with I(Theta_jk != 0)."""
    p = theta.shape[0]
    iu = np.triu_indices(p, 1)
    return float(np.mean((a[iu] != 0) == (theta[iu] != 0)))


def true_edges(theta):
    iu = np.triu_indices(theta.shape[0], 1)
    return {(int(j), int(k)) for j, k in zip(*iu) if theta[j, k] != 0.0}


def edge_metrics(selected, truth, n_pairs):
    """(FDR, FNR) under the conventions: empty discovery set has FDR 0 and
    FNR is the miss rate among true edges (0 when there are none)."""
    selected = set(selected)
    fp = len(selected - truth)
    fn = len(truth - selected)
    fdr = fp / len(selected) if selected else 0.0
    fnr = fn / len(truth) if truth else 0.0
    return fdr, fnr


def mse_unique_entries(theta_hat, theta):
    """Squared error summed over the diagonal and each unordered pair once."""
    diff = theta_hat - theta
    iu = np.triu_indices(theta.shape[0], 0)
    return float(np.sum(diff[iu] ** 2))


def mse_offdiag_pairs(theta_hat, theta):
    """Squared error summed over unordered off-diagonal pairs only.

    This is the entry set that reproduces the published benchmark magnitudes;
    the unpenalized diagonal would otherwise dominate the comparison.
    """
    diff = theta_hat - theta
    iu = np.triu_indices(theta.shape[0], 1)
    return float(np.sum(diff[iu] ** 2))


def run_benchmark(designs, methods, replicates, base_seed=0, collect_timings=False):
    """Fit every method on every design over seeded replicates.

    Parameters
    ----------
    designs : list of SimDesign
    methods : dict name -> callable(y, a, seed) returning (theta_hat, selected
        edge set); ``a`` is the binary network or None for methods that ignore
        it.
    replicates : int

    Returns
    -------
    rows : list of MetricRow (one per design x method, averaged over
        successful replicates; failures are counted and excluded)
    detail : dict (design label, method) -> per-replicate metric arrays
    manifest : dict with seeds and versions (timings included on request)
    """
    rows = []
    detail = {}
    timings = {}
    for design in designs:
        label = f"p{design.p}_n{design.n}_{design.informativeness}"
        for name, fit in methods.items():
            per_mse, per_fdr, per_fnr = [], [], []
            failed = 0
            t0 = time.perf_counter()
            for rep in range(replicates):
                seed = design.seed + 1000 * rep + base_seed
                d = SimDesign(p=design.p, n=design.n,
                              informativeness=design.informativeness, seed=seed)
                theta, a = gen_truth(d)
                rng = np.random.default_rng(seed + 500_000)
                y = rng.multivariate_normal(
                    np.zeros(design.p), np.linalg.inv(theta), size=design.n)
                try:
                    theta_hat, selected = fit(y, a, seed)
                except Exception:
                    failed += 1
                    continue
                truth = true_edges(theta)
                fdr, fnr = edge_metrics(selected, truth, design.p * (design.p - 1) // 2)
                per_mse.append(mse_offdiag_pairs(theta_hat, theta))
                per_fdr.append(fdr)
                per_fnr.append(fnr)
            timings[(label, name)] = time.perf_counter() - t0
            if per_mse:
                row = MetricRow(method=name, mse=float(np.mean(per_mse)),
                                fdr=float(np.mean(per_fdr)), fnr=float(np.mean(per_fnr)),
                                n_replicates=len(per_mse), n_failed=failed)
            else:
                row = MetricRow(method=name, mse=np.nan, fdr=np.nan, fnr=np.nan,
                                n_replicates=0, n_failed=failed)
            rows.append((label, row))
            detail[(label, name)] = {
                "mse": np.asarray(per_mse), "fdr": np.asarray(per_fdr),
                "fnr": np.asarray(per_fnr),
            }
    manifest = {
        "base_seed": base_seed,
        "replicates": replicates,
        "designs": [
            {"p": d.p, "n": d.n, "informativeness": d.informativeness, "seed": d.seed}
            for d in designs
        ],
        "methods": sorted(methods),
        "versions": _versions(),
    }
    if collect_timings:
        manifest["wall_times_s"] = {f"{k[0]}/{k[1]}": round(v, 3) for k, v in timings.items()}
    return rows, detail, manifest


def _versions():
    import scipy

    from . import __version__

    return {"netggm": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def write_benchmark_csv(rows, path):
    lines = ["design,method,mse,fdr,fnr,n_replicates,n_failed"]
    for label, row in rows:
        lines.append(
            f"{label},{row.method},{row.mse:.10g},{row.fdr:.10g},{row.fnr:.10g},"
            f"{row.n_replicates},{row.n_failed}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest(manifest, path):
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
