"""Tests for the cbf-duality command line."""

import json

import pytest

from cbf_duality.duality import VerificationReport, VerificationRow
from cbf_duality.errors import QuadratureError
from cbf_duality.main import (
    EXIT_FAILED,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_USAGE,
    CliConfig,
    parse_config,
    run,
)


class TestParseConfig:
    """Tests for argument parsing."""

    def test_defaults(self):
        """Bare command."""
        cli = parse_config(["families"])
        assert cli.command == "families"
        assert cli.format == "csv"
        assert cli.family is None

    def test_lists(self):
        """Comma-separated values."""
        cli = parse_config(["verify-theorem", "--t", "0.5,1", "--w", "2"])
        assert cli.t == [0.5, 1.0]
        assert cli.w == [2.0]

    def test_canonical_round_trip(self):
        """The canonical form parses back to the same config."""
        cli = parse_config(["verify-corollary", "--family", "gamma", "--seed", "42", "--format", "json"])
        assert CliConfig.model_validate_json(cli.canonical()) == cli


class TestRun:
    """Tests for run and its exit statuses."""

    def test_families(self, capsys):
        """Lists the built-in families."""
        assert run(["families"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "gamma" in out
        assert "inverse-gaussian" in out

    @pytest.mark.parametrize(
        "argv",
        [
            ["bogus"],
            ["verify-theorem", "--family", "free-stable", "--alpha", "1.7"],
            ["verify-theorem", "--t", "-1"],
            ["verify-theorem", "--w-log", "1:0:5"],
            ["verify-theorem", "--preset", "nope"],
            ["tabulate-free"],
            ["tabulate-classical", "--family", "custom"],
            ["verify-kendall", "--family", "poisson-exp", "--n-paths", "100"],
        ],
    )
    def test_usage_errors(self, argv):
        """Bad arguments exit with status 2 before any computation."""
        assert run(argv) == EXIT_USAGE

    def test_numerical_failure(self, mocker):
        """A NumericalError maps to status 3."""
        mocker.patch("cbf_duality.main.verify_theorem", side_effect=QuadratureError("boom"))
        assert run(["verify-theorem", "--preset", "smoke"]) == EXIT_NUMERICAL

    def test_row_error(self, mocker):
        """A row carrying an error maps to status 3."""
        report = VerificationReport(
            command="verify-theorem",
            rows=[VerificationRow(family="gamma", t=1.0, w=1.0, tolerance=1e-6, error="ContinuationError")],
        )
        mocker.patch("cbf_duality.main.verify_theorem", return_value=report)
        assert run(["verify-theorem", "--preset", "smoke", "--format", "json"]) == EXIT_NUMERICAL

    def test_failed_report(self, mocker):
        """A failing report maps to status 1."""
        report = VerificationReport(
            command="verify-theorem",
            rows=[VerificationRow(family="gamma", t=1.0, w=1.0, tolerance=1e-6, residual=1.0)],
        )
        mocker.patch("cbf_duality.main.verify_theorem", return_value=report)
        assert run(["verify-theorem", "--preset", "smoke"]) == EXIT_FAILED

    def test_verify_theorem_deterministic(self, tmp_path):
        """Two runs write identical files."""
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        argv = ["verify-theorem", "--family", "poisson-exp", "--preset", "smoke", "--format", "json"]
        assert run([*argv, "--output", str(first)]) == EXIT_OK
        assert run([*argv, "--output", str(second)]) == EXIT_OK
        assert first.read_bytes() == second.read_bytes()
        payload = json.loads(first.read_text())
        assert payload["passed"] is True
        assert [row["w"] for row in payload["rows"]] == [1.0, 2.0]

    def test_verify_corollary_csv(self, tmp_path):
        """CSV rows for the derivative form."""
        path = tmp_path / "corollary.csv"
        argv = ["verify-corollary", "--family", "gamma", "--t", "1", "--w", "1", "--output", str(path)]
        assert run(argv) == EXIT_OK
        header = path.read_text().splitlines()[0]
        assert header.startswith("family,t,w,lhs,rhs,residual")

    def test_tabulate_classical(self, tmp_path):
        """One row per grid point; the undefined density at 0 is empty."""
        path = tmp_path / "gamma.csv"
        argv = ["tabulate-classical", "--family", "gamma", "--y-grid", "0:2:3", "--output", str(path)]
        assert run(argv) == EXIT_OK
        lines = path.read_text().splitlines()
        assert lines[0] == "family,t,y,cdf,pdf"
        assert len(lines) == 4
        assert lines[1] == "gamma,1,0,0,"

    def test_tabulate_free(self, tmp_path):
        """Header and rows in JSON."""
        path = tmp_path / "mp.json"
        argv = [
            "tabulate-free",
            "--family",
            "poisson-exp",
            "--t",
            "2",
            "--x-grid",
            "0.5:5:10",
            "--format",
            "json",
            "--output",
            str(path),
        ]
        assert run(argv) == EXIT_OK
        payload = json.loads(path.read_text())
        assert payload["method"] == "closed-form"
        assert len(payload["rows"]) == 10
        assert payload["rows"][0]["family"] == "poisson-exp"
        assert payload["rows"][0]["t"] == 2.0

    def test_verify_kendall(self, tmp_path):
        """Kendall and renewal report for one exact family."""
        path = tmp_path / "kendall.json"
        argv = [
            "verify-kendall",
            "--family",
            "poisson-exp",
            "--n-paths",
            "10000",
            "--seed",
            "7",
            "--format",
            "json",
            "--output",
            str(path),
        ]
        assert run(argv) in (EXIT_OK, EXIT_FAILED)
        payload = json.loads(path.read_text())
        assert payload["seed"] == 7
        assert payload["n_paths"] == 10000
        assert len(payload["cells"]) == 4
        assert [row["s"] for row in payload["u"]] == [0.5, 1.0, 2.0]


class TestTabulateFreeCsv:
    """CSV tabulation of the free law."""

    def test_columns(self, tmp_path):
        """Every row carries the family and the time."""
        path = tmp_path / "mp.csv"
        argv = ["tabulate-free", "--family", "poisson-exp", "--t", "2", "--x-grid", "1:3:3", "--output", str(path)]
        assert run(argv) == EXIT_OK
        lines = path.read_text().splitlines()
        assert lines[0] == "family,t,x,density"
        assert len(lines) == 4
        assert all(line.startswith("poisson-exp,2,") for line in lines[1:])
