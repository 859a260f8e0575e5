import csv

import numpy as np
import pytest

from mcboost import bench
from mcboost.bench import (CONVERGENCE_HEADER, EXIT_CONFIG, EXIT_OK, EXIT_PARSE, EXIT_SOLVER, METHODS,
                           RUNTIME_COLUMNS, SCALING_HEADER, ConfigError, MethodConfig, cmd_convergence,
                           cmd_fredholm, cmd_scaling, main, reference_curve, run_method)
from mcboost.io import read_matrix_market, read_vector_csv, write_matrix_market, write_vector_csv
from mcboost.problems import gen_diag_dominant

SMALL = MethodConfig(walks=200, rounds=3, sample_cols=5, components=3)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def strip_runtime(rows):
    return [{k: v for k, v in r.items() if k not in RUNTIME_COLUMNS} for r in rows]


@pytest.mark.parametrize("method", METHODS)
def test_every_method_runs(method):
    rec, x = run_method(method, gen_diag_dominant(40, seed=1), SMALL)
    assert rec.method == method and rec.m == 40
    assert rec.runtime_seconds >= 0 and np.isfinite(rec.relative_residual)
    assert len(rec.row()) == len(SCALING_HEADER)


def test_deterministic_methods_hit_target():
    system = gen_diag_dominant(60, seed=2)
    for method in ("jacobi", "gauss-seidel"):
        rec, _ = run_method(method, system, MethodConfig(target_residual=1e-6))
        assert rec.relative_residual <= 1e-6


def test_unknown_method():
    with pytest.raises(ConfigError):
        run_method("newton", gen_diag_dominant(10), SMALL)
    with pytest.raises(ConfigError):
        cmd_scaling([10], ["newton"])
    with pytest.raises(ConfigError):
        cmd_scaling([], ["jacobi"])


def test_scaling_records():
    recs = cmd_scaling([20, 40], ["jacobi", "plain-mc"], seed=3, repeats=2, cfg=SMALL)
    assert [(r.method, r.m) for r in recs] == [("jacobi", 20), ("plain-mc", 20), ("jacobi", 40), ("plain-mc", 40)]
    assert all(r.extra["repeats"] == 2 for r in recs)


def test_convergence_records_and_reference():
    recs = cmd_convergence(m=50, walk_grid=(10, 40, 160), seed=1)
    assert [r.n_walks for r in recs] == [10, 40, 160]
    ref = reference_curve(recs)
    assert ref[0][1] == recs[0].l2_error
    assert ref[2][1] == pytest.approx(recs[0].l2_error / 4)


def test_fredholm_row():
    row = cmd_fredholm("constant", [0.5], 0.5, 20_000, seed=1)
    assert row["nystrom"] == pytest.approx(2.0, abs=1e-3)
    assert row["within_tolerance"]
    with pytest.raises(ConfigError):
        cmd_fredholm("constant", [1.5])
    with pytest.raises(ConfigError):
        cmd_fredholm("constant", [], g="tan")
    with pytest.raises(ConfigError):
        cmd_fredholm("constant", [], x0=3.0)


def test_cli_scaling_is_thread_independent(tmp_path):
    args = ["scaling", "--sizes", "20,30", "--methods", "all", "--seed", "4", "--repeats", "1",
            "--walks", "300", "--rounds", "3", "--sample-cols", "5"]
    assert main(args + ["--threads", "1", "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--threads", "2", "--out", str(tmp_path / "b")]) == EXIT_OK
    a, b = read_rows(tmp_path / "a" / "scaling.csv"), read_rows(tmp_path / "b" / "scaling.csv")
    assert list(a[0]) == list(SCALING_HEADER)
    assert len(a) == 10
    assert strip_runtime(a) == strip_runtime(b)


def test_cli_convergence(tmp_path):
    assert main(["convergence", "--sizes", "40", "--walks", "10,20", "--seed", "2",
                 "--out", str(tmp_path)]) == EXIT_OK
    rows = read_rows(tmp_path / "convergence.csv")
    assert list(rows[0]) == list(CONVERGENCE_HEADER) and len(rows) == 2
    assert (tmp_path / "convergence_reference.csv").exists()


def test_cli_generate_and_solve(tmp_path):
    assert main(["generate", "--kind", "halton-dense", "--sizes", "30", "--seed", "1",
                 "--out", str(tmp_path)]) == EXIT_OK
    x_true = read_vector_csv(tmp_path / "x_true.csv")
    a = read_matrix_market(tmp_path / "matrix.mtx")
    np.testing.assert_allclose(a @ x_true, read_vector_csv(tmp_path / "rhs.csv"), atol=1e-12)
    out = tmp_path / "solve"
    assert main(["solve", str(tmp_path / "matrix.mtx"), str(tmp_path / "rhs.csv"), "--methods", "direct",
                 "--out", str(out)]) == EXIT_OK
    np.testing.assert_allclose(read_vector_csv(out / "solution.csv"), x_true, atol=1e-10)
    assert "method: direct" in (out / "report.txt").read_text()
    assert main(["solve", str(tmp_path / "matrix.mtx"), str(tmp_path / "rhs.csv"), "--methods",
                 "exact-seq-mc", "--walks", "2000", "--rounds", "10", "--out", str(out)]) == EXIT_OK
    np.testing.assert_allclose(read_vector_csv(out / "solution.csv"), x_true, atol=1e-4)


def test_cli_generate_diag_dominant(tmp_path):
    assert main(["generate", "--sizes", "12", "--seed", "5", "--out", str(tmp_path)]) == EXIT_OK
    s = gen_diag_dominant(12, seed=5)
    np.testing.assert_array_equal(read_matrix_market(tmp_path / "matrix.mtx"), s.matrix)


def test_cli_fredholm(tmp_path):
    assert main(["fredholm", "--kernel", "separable", "--param", "0.4", "--g", "x", "--walks", "5000",
                 "--out", str(tmp_path)]) == EXIT_OK
    row = read_rows(tmp_path / "fredholm.csv")[0]
    assert row["within_tolerance"] == "True"
    assert float(row["nystrom"]) == pytest.approx(0.5 * (1 + 0.4 / 2.6), abs=1e-4)


@pytest.mark.parametrize("argv", [
    ["scaling", "--sizes", "abc"],
    ["scaling", "--sizes", "0"],
    ["bogus"],
    ["fredholm", "--kernel", "nope"],
])
def test_cli_argument_errors_exit_config(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == EXIT_CONFIG


def test_cli_config_errors(tmp_path):
    assert main(["scaling", "--methods", "newton", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["scaling", "--sizes", "10", "--walks", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["fredholm", "--survival", "1.5", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_parse_errors(tmp_path):
    (tmp_path / "bad.mtx").write_text("not a matrix market file\n")
    write_vector_csv(tmp_path / "b.csv", np.ones(2))
    assert main(["solve", str(tmp_path / "bad.mtx"), str(tmp_path / "b.csv"), "--out", str(tmp_path)]) == EXIT_PARSE
    assert main(["solve", str(tmp_path / "missing.mtx"), str(tmp_path / "b.csv"),
                 "--out", str(tmp_path)]) == EXIT_PARSE
    write_matrix_market(tmp_path / "a.mtx", np.eye(3))
    assert main(["solve", str(tmp_path / "a.mtx"), str(tmp_path / "b.csv"), "--out", str(tmp_path)]) == EXIT_PARSE


def test_cli_solver_errors(tmp_path):
    write_matrix_market(tmp_path / "z.mtx", np.array([[0.0, 1.0], [1.0, 0.0]]))
    write_vector_csv(tmp_path / "b.csv", np.ones(2))
    assert main(["solve", str(tmp_path / "z.mtx"), str(tmp_path / "b.csv"), "--methods", "jacobi",
                 "--out", str(tmp_path)]) == EXIT_SOLVER
    write_matrix_market(tmp_path / "s.mtx", np.ones((2, 2)))
    assert main(["solve", str(tmp_path / "s.mtx"), str(tmp_path / "b.csv"), "--methods", "direct",
                 "--out", str(tmp_path)]) == EXIT_SOLVER


def test_module_entry_point_exists():
    assert callable(bench.main)
