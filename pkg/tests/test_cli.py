import json
import math

import pytest

from qcdeform.cli import ExperimentConfig, main
from qcdeform.config import CSV_SCHEMA_VERSION, SPEC_VERSION
from qcdeform.errors import DomainError


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv)
    return code, json.loads(out)


class TestKappa:
    def test_n2_p2(self, capsys):
        code, data = run_json(capsys, "kappa", "--n", "2", "--p", "2")
        assert code == 0 and data["spec_version"] == SPEC_VERSION
        assert abs(data["c_n_abs"] - 0.857764) < 1e-6
        assert abs(data["margin"]) < 1e-6

    def test_bound_p15(self, capsys):
        code, data = run_json(capsys, "kappa", "--n", "1", "--p", "1.5")
        assert code == 0 and data["bound"] == pytest.approx((2 / math.e) ** (1 / 3), rel=1e-15)

    def test_inf(self, capsys):
        code, data = run_json(capsys, "kappa", "--n", "1", "--p", "inf")
        assert code == 0 and data["p"] == "inf" and data["bound"] == pytest.approx(2 / math.e)

    @pytest.mark.parametrize("p", ["1", "0.5", "nan", "two"])
    def test_bad_p(self, capsys, p):
        code, out, err = run(capsys, "kappa", "--n", "1", "--p", p)
        assert code == 3 and out == "" and "usage" in err

    def test_csv(self, capsys):
        code, out, _ = run(capsys, "kappa", "--n", "1", "--p", "3", "--degree", "8", "--format", "csv")
        lines = out.splitlines()
        assert code == 0 and lines[0] == f"# schema_version={CSV_SCHEMA_VERSION}"
        assert lines[1] == "k,re,im,abs" and len(lines) == 2 + 9

    def test_out_file(self, capsys, tmp_path):
        path = tmp_path / "k.json"
        code, out, _ = run(capsys, "kappa", "--out", str(path))
        assert code == 0 and out == "" and json.loads(path.read_text("utf-8"))["n"] == 1


class TestSweep:
    def test_default(self, capsys):
        code, data = run_json(capsys, "sweep", "--format", "json")
        assert code == 0 and data["min_margin"] >= -1e-9
        assert len(data["rows"]) == 3 * 3 * 100

    def test_deterministic(self, capsys):
        args = ("sweep", "--count", "20", "--seed", "5", "--format", "csv")
        first, second = run(capsys, *args)[1], run(capsys, *args)[1]
        assert first == second

    def test_thread_cap_does_not_change_output(self, capsys, monkeypatch):
        args = ("sweep", "--count", "10", "--format", "csv")
        serial = run(capsys, *args)[1]
        monkeypatch.setenv("QCDEFORM_THREADS", "3")
        assert run(capsys, *args)[1] == serial

    def test_csv_schema(self, capsys):
        _, out, _ = run(capsys, "sweep", "--count", "3", "--p", "2", "--n", "2", "--format", "csv")
        lines = out.splitlines()
        assert lines[0] == f"# schema_version={CSV_SCHEMA_VERSION}"
        assert lines[1] == "seed,p,n,c_n_abs,bound,margin"
        assert lines[-1].startswith("# summary min_margin=") and len(lines) == 6

    def test_empty_p(self, capsys):
        assert run(capsys, "sweep", "--p")[0] == 3

    def test_bad_count(self, capsys):
        assert run(capsys, "sweep", "--count", "0")[0] == 3


class TestDeform:
    def test_default_target_exceeds_cap(self, capsys):
        code, out, err = run(capsys, "deform")
        assert code == 3 and "BudgetError" in err and out == ""

    def test_feasible(self, capsys):
        code, data = run_json(capsys, "deform", "--eps", "1e-5")
        assert code == 0
        assert all(c["passed"] for c in data["contracts"].values())
        assert data["result"]["diagnostics"]["newton_iterations"] <= 8

    def test_corrupt_tau(self, capsys):
        code, data = run_json(capsys, "deform", "--eps", "1e-5", "--corrupt-tau", "1.5")
        assert code == 2 and 2 in data["contracts"]["violated"]

    def test_over_budget(self, capsys):
        code, _, err = run(capsys, "deform", "--eps", "0.05")
        assert code == 3 and "BudgetError" in err


class TestBergman:
    def test_constant(self, capsys):
        code, data = run_json(capsys, "bergman-demo")
        assert code == 0 and data["zero_free"]
        assert data["norm_after_sq"] == pytest.approx(0.815, abs=1e-12)

    def test_zero_eps(self, capsys):
        code, data = run_json(capsys, "bergman-demo", "--eps", "0")
        assert code == 0 and data["norm_after"] == data["norm_before"] == 1.0

    def test_oversized_eps(self, capsys):
        code, _, err = run(capsys, "bergman-demo", "--eps", "5")
        assert code == 3 and "RoucheMarginError" in err

    def test_random(self, capsys):
        code, data = run_json(capsys, "bergman-demo", "--random", "--seed", "4", "--eps", "1e-3")
        assert code == 0 and data["norm_after"] < data["norm_before"]


class TestParseval:
    def test_default_grid(self, capsys):
        code, data = run_json(capsys, "parseval")
        assert code == 0
        rows = {r["p"] if isinstance(r["p"], str) else round(r["p"], 3): r for r in data["rows"]}
        assert all(r["inequality_holds"] for p, r in rows.items() if p == "inf" or p >= 2)
        for p in (1.2, 1.5):
            assert rows[p]["h2_exceeds_hp"]

    def test_malformed(self, capsys):
        assert run(capsys, "parseval", "--p", "2", "abc")[0] == 3

    def test_empty(self, capsys):
        assert run(capsys, "parseval", "--p")[0] == 3


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig("sweep", [2.0, math.inf], [2, 3], seed=4, eps=1e-3, R=3.0, out="x.csv", format="csv",
                               extra={"style": "blaschke_free_poly"})
        back = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back == cfg

    @pytest.mark.parametrize("kw", [{"command": "nope"}, {"format": "xml"}, {"degree": 0}, {"tol": 0.0},
                                    {"count": 0}, {"eps": -1.0}, {"R": -2.0}])
    def test_ranges(self, kw):
        args = {"command": "kappa"}
        args.update(kw)
        with pytest.raises(DomainError):
            ExperimentConfig(**args)

    def test_unknown_command(self, capsys):
        assert run(capsys, "frobnicate")[0] == 3
