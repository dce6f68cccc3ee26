import json
import warnings

import numpy as np
import pytest

from composolve import cli, verification
from composolve.metrics import CSV_COLUMNS
from composolve.numerics import RngStream
from composolve.problems import (
    LassoProblem,
    PolicyEvalProblem,
    PortfolioProblem,
    gen_linquad,
    save_problem,
)
from composolve.regularizers import L1Penalty
from composolve.solvers import prox_full_gradient


def small_config(tmp_path, solvers=None, budget=3000):
    return {
        "problem": {"kind": "linquad", "n1": 8, "n2": 6, "M": 5, "N": 4,
                    "seed": 3},
        "regularizer": {"kind": "l1", "lambda": 1e-3},
        "seeds": [0, 1],
        "budget": {"max_queries": budget},
        "trace_stride": 5,
        "reference": {"eta": 0.1, "iters": 50_000, "tol": 1e-13},
        "output_dir": str(tmp_path / "out"),
        "solvers": solvers if solvers is not None else [
            {"name": "vrsc_pg", "label": "vr", "eta": 0.05, "m": 10,
             "S_epochs": 50, "A": 3, "B": 3, "b1": 3},
        ],
    }


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestLoadConfig:
    def test_valid_config_loads(self, tmp_path):
        path = write_config(tmp_path, small_config(tmp_path))
        cfg = cli.load_config(path)
        assert cfg["problem"]["kind"] == "linquad"

    def test_schema_rejects_bad_solver_name(self, tmp_path):
        jsonschema = pytest.importorskip("jsonschema")
        cfg = small_config(tmp_path)
        cfg["solvers"][0]["name"] = "gradient_descent_deluxe"
        path = write_config(tmp_path, cfg)
        with pytest.raises(jsonschema.ValidationError):
            cli.load_config(path)

    def test_schema_rejects_missing_seeds(self, tmp_path):
        jsonschema = pytest.importorskip("jsonschema")
        cfg = small_config(tmp_path)
        del cfg["seeds"]
        path = write_config(tmp_path, cfg)
        with pytest.raises(jsonschema.ValidationError):
            cli.load_config(path)


class TestBuildProblem:
    def test_portfolio(self):
        p = cli.build_problem({"kind": "portfolio", "n": 12, "N": 4,
                               "kappa_cov": 10.0, "seed": 1})
        assert isinstance(p, PortfolioProblem) and (p.n1, p.dim_x) == (12, 4)

    def test_policy_eval(self):
        p = cli.build_problem({"kind": "policy_eval", "S": 6, "gamma": 0.9,
                               "seed": 2})
        assert isinstance(p, PolicyEvalProblem) and p.dim_x == 6

    def test_lasso(self):
        p = cli.build_problem({"kind": "lasso", "n": 10, "N": 4, "seed": 0})
        assert isinstance(p, LassoProblem)

    def test_from_stored_file(self, tmp_path):
        prob = gen_linquad(4, 3, 3, 2, RngStream(9))
        path = tmp_path / "p.json"
        save_problem(prob, path)
        loaded = cli.build_problem({"path": str(path)})
        x = RngStream(1).normal(size=2)
        assert loaded.objective_f(x) == prob.objective_f(x)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            cli.build_problem({"kind": "matrix_completion"})

    def test_same_seed_same_data(self):
        spec = {"kind": "portfolio", "n": 8, "N": 3, "seed": 7}
        a = cli.build_problem(spec)
        b = cli.build_problem(spec)
        assert np.array_equal(a.rewards, b.rewards)


class TestTraceCsv:
    def run_small(self, tmp_path):
        cfg = small_config(tmp_path)
        return cli.cmd_run(cfg, tmp_path / "out"), tmp_path / "out"

    def test_round_trip(self, tmp_path):
        _, out = self.run_small(tmp_path)
        rows = cli.read_trace_csv(out / "vr_seed0.csv")
        assert rows and set(rows[0]) == set(CSV_COLUMNS)

    def test_header_drift_rejected(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("epoch,inner_iter,objective\n0,0,1.0\n")
        with pytest.raises(ValueError):
            cli.read_trace_csv(bad)

    def test_floats_survive_round_trip(self, tmp_path):
        _, out = self.run_small(tmp_path)
        rows = cli.read_trace_csv(out / "vr_seed0.csv")
        raw = (out / "vr_seed0.csv").read_text().splitlines()[1].split(",")
        assert rows[0]["objective"] == float(raw[6])


class TestCmdGen:
    def test_idempotent_bytes(self, tmp_path):
        cfg = small_config(tmp_path)
        p1 = cli.cmd_gen(cfg, tmp_path / "a")
        p2 = cli.cmd_gen(cfg, tmp_path / "b")
        assert p1.read_bytes() == p2.read_bytes()

    def test_written_problem_reusable(self, tmp_path):
        cfg = small_config(tmp_path)
        path = cli.cmd_gen(cfg, tmp_path / "a")
        prob = cli.build_problem({"path": str(path)})
        assert prob.n1 == 8 and prob.n2 == 6


class TestCmdRun:
    def test_outputs_and_summary(self, tmp_path):
        cfg = small_config(tmp_path)
        out = tmp_path / "out"
        summary = cli.cmd_run(cfg, out)
        assert (out / "summary.json").exists()
        assert len(summary["runs"]) == 2
        for entry in summary["runs"]:
            assert (out / entry["trace"]).exists()
            assert not entry["diverged"]
        assert summary["x_star_verified"]

    def test_budget_respected(self, tmp_path):
        cfg = small_config(tmp_path, budget=1500)
        summary = cli.cmd_run(cfg, tmp_path / "out")
        # at most one inner iteration of overshoot: 2(A + B + b1) = 18
        for entry in summary["runs"]:
            assert entry["total_queries"] <= 1500 + 18

    def test_empty_solver_list_still_writes_summary(self, tmp_path):
        cfg = small_config(tmp_path, solvers=[])
        out = tmp_path / "out"
        summary = cli.cmd_run(cfg, out)
        assert summary["runs"] == []
        assert (out / "summary.json").exists()
        assert not list(out.glob("*.csv"))

    def test_replay_identical_modulo_wall(self, tmp_path):
        cfg = small_config(tmp_path)
        r1 = cli.cmd_run(cfg, tmp_path / "o1")
        r2 = cli.cmd_run(cfg, tmp_path / "o2")
        assert r1["x_star"] == r2["x_star"]
        for name in ("vr_seed0.csv", "vr_seed1.csv"):
            a = cli.read_trace_csv(tmp_path / "o1" / name)
            b = cli.read_trace_csv(tmp_path / "o2" / name)
            assert len(a) == len(b)
            for ra, rb in zip(a, b):
                for col in CSV_COLUMNS:
                    if col == "wall_ms":
                        continue
                    assert ra[col] == rb[col] or (
                        np.isnan(ra[col]) and np.isnan(rb[col])
                    )

    def test_divergent_run_recorded_not_raised(self, tmp_path):
        cfg = small_config(tmp_path, solvers=[
            {"name": "vrsc_pg", "label": "boom", "eta": 1e8, "m": 20,
             "S_epochs": 5, "A": 2, "B": 2, "b1": 2},
        ])
        summary = cli.cmd_run(cfg, tmp_path / "out")
        assert all(e["diverged"] for e in summary["runs"])
        assert (tmp_path / "out" / "boom_seed0.csv").exists()

    def test_tune_selects_converging_step(self, tmp_path):
        cfg = small_config(tmp_path, solvers=[
            {"name": "vrsc_pg", "label": "vr", "eta": "tune", "m": 10,
             "S_epochs": 50, "A": 3, "B": 3, "b1": 3,
             "eta_grid": [10.0, 0.1, 1e-4]},
        ], budget=4000)
        summary = cli.cmd_run(cfg, tmp_path / "out")
        assert summary["runs"][0]["eta"] == 0.1


class TestCmdPlot:
    def make_traces(self, tmp_path):
        cfg = small_config(tmp_path)
        cli.cmd_run(cfg, tmp_path / "out")
        return sorted((tmp_path / "out").glob("*.csv"))

    def test_one_polyline_per_csv(self, tmp_path):
        csvs = self.make_traces(tmp_path)
        out = tmp_path / "plot.svg"
        cli.cmd_plot([str(p) for p in csvs], out)
        svg = out.read_text()
        assert svg.count("<polyline") == len(csvs)
        assert svg.startswith("<svg") or svg.startswith("<?xml")

    def test_deterministic_bytes_on_queries_axis(self, tmp_path):
        csvs = [str(p) for p in self.make_traces(tmp_path)]
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        cli.cmd_plot(csvs, a)
        cli.cmd_plot(csvs, b)
        assert a.read_bytes() == b.read_bytes()

    def test_wall_axis_and_gradnorm(self, tmp_path):
        csvs = [str(p) for p in self.make_traces(tmp_path)]
        out = tmp_path / "w.svg"
        cli.cmd_plot(csvs, out, x_axis="wall", y_field="gradnorm")
        assert "wall time (ms)" in out.read_text()

    def test_nonpositive_values_clipped_with_warning(self, tmp_path):
        path = tmp_path / "t.csv"
        rows = ["0,0,1.0,10,0,0,1.0,0.0,1e-3,1e-3",
                "0,1,2.0,20,0,0,0.5,-1e-12,1e-4,1e-4"]
        path.write_text(",".join(CSV_COLUMNS) + "\n" + "\n".join(rows) + "\n")
        with pytest.warns(UserWarning, match="clipped"):
            cli.cmd_plot([str(path)], tmp_path / "c.svg")

    def test_no_inputs_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            cli.cmd_plot([], tmp_path / "x.svg")


class TestCheckCommand:
    def test_all_checks_pass(self, capsys):
        assert cli.cmd_check() == 0
        assert "FAIL" not in capsys.readouterr().out

    def test_detects_broken_prox(self, monkeypatch):
        # thresholding at lam instead of eta*lam: classic scaling slip
        def bad_prox(self, x, eta):
            return np.sign(x) * np.maximum(np.abs(x) - self.lam, 0.0)

        monkeypatch.setattr(L1Penalty, "prox", bad_prox)
        assert any(not ok for _, ok, _ in verification.run_all())

    def test_detects_query_miscount(self, monkeypatch):
        from composolve.oracle import QueryCounter

        orig = QueryCounter.add

        def off_by_one(self, inner_value=0, inner_jacobian=0, outer_gradient=0):
            orig(self, inner_value + (inner_value > 0), inner_jacobian,
                 outer_gradient)

        monkeypatch.setattr(QueryCounter, "add", off_by_one)
        assert any(not ok for _, ok, _ in verification.run_all())


class TestMainEntry:
    def test_gen_run_plot_pipeline(self, tmp_path, capsys):
        cfg = small_config(tmp_path)
        path = write_config(tmp_path, cfg)
        assert cli.main(["gen", "--config", str(path)]) == 0
        assert cli.main(["run", "--config", str(path)]) == 0
        out_dir = tmp_path / "out"
        svg = tmp_path / "fig.svg"
        csvs = sorted(str(p) for p in out_dir.glob("*.csv"))
        assert cli.main(["plot", *csvs, "--out", str(svg)]) == 0
        assert svg.exists()

    def test_check_exit_code(self):
        assert cli.main(["check"]) == 0
