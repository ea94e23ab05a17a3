import json

import numpy as np
import pytest

from netggm.simulate import (
    MetricRow,
    SimDesign,
    edge_metrics,
    gen_truth,
    mse_unique_entries,
    overlap_proportion,
    run_benchmark,
    true_edges,
    write_benchmark_csv,
    write_manifest,
)


def test_design_validation():
    with pytest.raises(ValueError, match="p must"):
        SimDesign(p=3, n=100, informativeness="mild")
    with pytest.raises(ValueError, match="informativeness"):
        SimDesign(p=10, n=100, informativeness="weird")


def test_gen_truth_structure_and_determinism():
    d = SimDesign(p=10, n=100, informativeness="mild", seed=3)
    theta1, a1 = gen_truth(d)
    theta2, a2 = gen_truth(d)
    np.testing.assert_array_equal(theta1, theta2)
    np.testing.assert_array_equal(a1, a2)
    assert np.linalg.eigvalsh(theta1)[0] > 0
    assert np.all(np.diag(a1) == 0)
    # tri-diagonal band carries round(0.95 * 9) = 9 nonzero entries
    tri = np.array([theta1[j, j + 1] for j in range(9)])
    assert np.count_nonzero(tri) == 9
    assert tri.min() >= 0.2 and tri.max() <= 0.5
    # one off-band entry at floor(0.05 * 36) = 1
    off = [theta1[j, k] for j in range(10) for k in range(j + 2, 10)]
    assert np.count_nonzero(off) == 1


@pytest.mark.parametrize("informativeness,p,target", [
    ("mild", 10, 0.778), ("strong", 10, 0.867), ("independent", 10, 0.5),
    ("mild", 50, 0.747), ("strong", 50, 0.844), ("independent", 50, 0.502),
])
def test_gen_truth_overlap_proportions(informativeness, p, target):
    vals = []
    for seed in range(50):
        theta, a = gen_truth(SimDesign(p=p, n=100,
                                       informativeness=informativeness, seed=seed))
        vals.append(overlap_proportion(theta, a))
    assert abs(np.mean(vals) - target) < 0.05


def test_edge_metrics_conventions():
    truth = {(0, 1), (2, 3)}
    fdr, fnr = edge_metrics(set(), truth, 10)
    assert (fdr, fnr) == (0.0, 1.0)  # empty discovery: FDR 0, all misses
    fdr, fnr = edge_metrics({(0, 1), (4, 5)}, truth, 10)
    assert fdr == pytest.approx(0.5)
    assert fnr == pytest.approx(0.5)
    assert edge_metrics({(0, 1)}, set(), 10) == (1.0, 0.0)


def test_mse_counts_unique_entries():
    theta = np.eye(3)
    theta_hat = theta.copy()
    theta_hat[0, 1] = theta_hat[1, 0] = 0.2
    theta_hat[2, 2] = 1.5
    assert mse_unique_entries(theta_hat, theta) == pytest.approx(0.2 ** 2 + 0.5 ** 2)


def test_run_benchmark_oracle_and_diagonal():
    def oracle(y, a, seed):
        return oracle.theta, true_edges(oracle.theta)

    def diag(y, a, seed):
        return np.eye(y.shape[1]), set()

    def flaky(y, a, seed):
        raise RuntimeError("nope")

    design = SimDesign(p=6, n=30, informativeness="strong", seed=0)
    # capture the per-replicate truth through a tiny shim
    import netggm.simulate as sim

    real_gen = sim.gen_truth

    def capture(d):
        theta, a = real_gen(d)
        oracle.theta = theta
        return theta, a

    sim.gen_truth = capture
    try:
        rows, detail, manifest = run_benchmark(
            [design], {"oracle": oracle, "diag": diag, "flaky": flaky},
            replicates=3)
    finally:
        sim.gen_truth = real_gen
    by_method = {row.method: row for _, row in rows}
    assert by_method["oracle"].mse == 0.0
    assert by_method["oracle"].fdr == 0.0
    assert by_method["oracle"].fnr == 0.0
    assert by_method["diag"].fnr == 1.0
    assert by_method["diag"].fdr == 0.0
    assert by_method["flaky"].n_failed == 3
    assert np.isnan(by_method["flaky"].mse)
    assert manifest["replicates"] == 3
    assert "wall_times_s" not in manifest


def test_metric_row_validation():
    with pytest.raises(ValueError, match="FDR"):
        MetricRow(method="x", mse=0.0, fdr=1.5, fnr=0.0)


def test_csv_and_manifest_round_trip(tmp_path):
    rows = [("design_a", MetricRow(method="m", mse=0.12345678901,
                                   fdr=0.5, fnr=0.25, n_replicates=4))]
    path = tmp_path / "bench.csv"
    write_benchmark_csv(rows, path)
    text = path.read_text().splitlines()
    assert text[0].startswith("design,method,mse")
    assert "0.123456789" in text[1]
    mpath = tmp_path / "manifest.json"
    write_manifest({"base_seed": 0, "versions": {"numpy": np.__version__}}, mpath)
    back = json.loads(mpath.read_text())
    assert back["base_seed"] == 0
