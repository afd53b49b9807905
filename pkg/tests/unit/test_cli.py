"""
Unit tests for the command-line front end and the command handlers.
"""

import csv
import os
import sys

import orjson
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from mqra.reference import published_approximant
from mqra_cli import main, normalize_argv
from utils.config import reset_settings

EVENTS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "events")


def read_csv(path):
    with open(path, newline="") as handle:
        lines = handle.read().splitlines()
    assert lines[0].startswith("# manifest ")
    manifest = orjson.loads(lines[0][len("# manifest "):])
    return manifest, list(csv.DictReader(lines[1:]))


class TestNormalizeArgv:

    def test_separate_token(self):
        argv = ["build", "--replace-power-4-by", "d2@0.5", "--level", "1"]
        assert normalize_argv(argv) == ["build", "--replace-power", "4=d2@0.5", "--level", "1"]

    def test_joined_token(self):
        assert normalize_argv(["--replace-power-2-by=d1@0.1"]) == ["--replace-power", "2=d1@0.1"]

    def test_other_flags_untouched(self):
        assert normalize_argv(["sweep", "--grid", "log:0.01:100:200"]) == ["sweep", "--grid", "log:0.01:100:200"]


class TestCommands:
    """End-to-end command runs on inputs that need no shooting."""

    def setup_method(self):
        self.original_env = os.environ.copy()
        os.environ.pop("MQRA_CACHE_DIR", None)
        reset_settings()

    def teardown_method(self):
        os.environ.clear()
        os.environ.update(self.original_env)
        reset_settings()

    def test_missing_subcommand(self):
        assert main([]) == 2

    def test_constraint_count_is_a_usage_error(self, capsys):
        code = main(["build", "--a", "2", "--b", "4", "--level", "0", "--N", "3", "--mu", "2",
                     "--powers", "5", "--asymptotic", "5", "--nodes", "0.5,1,2,5"])
        assert code == 2
        assert "constraints=14 unknowns=15" in capsys.readouterr().err

    def test_build_without_mu(self, capsys):
        code = main(["build", "--a", "2", "--b", "4", "--level", "0", "--N", "0", "--powers", "1",
                     "--asymptotic", "2"])
        assert code == 2
        assert "INVALID_INPUT" in capsys.readouterr().err

    def test_unknown_recipe(self):
        assert main(["build", "--recipe", "cubic", "--level", "0"]) == 2

    @pytest.mark.parametrize("physical", ["0,1", "1", "1,-2", "one,two"])
    def test_build_rejects_bad_physical_coefficients(self, physical, capsys):
        code = main(["build", "--a", "2", "--b", "4", "--level", "0", "--N", "0", "--powers", "1",
                     "--asymptotic", "2", "--mu", "2", "--no-compute", "--physical", physical])
        assert code == 2
        assert "physical" in capsys.readouterr().err

    def test_expand_exact(self, tmp_path):
        out = tmp_path / "series.json"
        code = main(["expand", "--a", "2", "--b", "4", "--level", "1", "--point", "0", "--terms", "6",
                     "--exact", "--out", str(out)])
        assert code == 0
        document = orjson.loads(out.read_bytes())
        assert document["coefficients"] == ["3", "15/4", "-165/16", "3915/64", "-520485/1024", "21304485/4096"]
        assert document["manifest"]["command"] == "expand"
        assert document["manifest"]["levels"] == [1]

    def test_expand_exact_needs_origin(self):
        assert main(["expand", "--a", "2", "--b", "4", "--level", "0", "--point", "0.5", "--terms", "2",
                     "--exact"]) == 2

    def test_expand_bad_point(self):
        assert main(["expand", "--a", "2", "--b", "4", "--level", "0", "--point", "far",
                     "--terms", "2"]) == 2

    def test_reproduce_exact_tables(self, tmp_path):
        for table in ("I", "V"):
            assert main(["reproduce", "--table", table, "--out-dir", str(tmp_path)]) == 0
        summary = orjson.loads((tmp_path / "summary.json").read_bytes())
        assert summary["verdict"] == "pass"
        manifest, rows = read_csv(tmp_path / "table_I.csv")
        assert manifest["command"] == "reproduce"
        assert len(rows) == 18
        assert all(row["passed"] == "True" for row in rows)

    def test_reproduce_unknown_table(self, tmp_path):
        assert main(["reproduce", "--table", "IX", "--out-dir", str(tmp_path)]) == 2

    def test_sweep_refuses_defective_approximant(self, capsys):
        code = main(["sweep", "--approximant", os.path.join(EVENTS, "defective_approximant.json"),
                     "--grid", "0.5"])
        assert code == 1
        assert "DEFECTIVE_APPROXIMANT" in capsys.readouterr().err

    def test_sweep_missing_file(self, tmp_path):
        assert main(["sweep", "--approximant", str(tmp_path / "none.json"), "--grid", "0.5"]) == 2

    def test_sweep_at_origin(self, tmp_path):
        path = tmp_path / "approx.json"
        path.write_bytes(published_approximant("IV", 0).to_json())
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--approximant", str(path), "--grid", "0", "--out", str(out)])
        assert code == 0
        manifest, rows = read_csv(out)
        assert manifest["command"] == "sweep"
        assert float(rows[0]["e_shoot"]) == pytest.approx(1.0, rel=1e-9)
        assert rows[-1]["lambda"] == "max_rel_err"
        assert float(rows[-1]["rel_err"]) <= 1e-8
