"""Tests for CLI functionality."""

import json
from unittest.mock import MagicMock, patch

import pytest

from hiergap.cli import HierGapCLI, main
from hiergap.experiment import ValidationCheck


@pytest.fixture
def cli_args(temp_dir):
    """Small Sine-Gordon run writing into the temporary directory."""
    return {"out": str(temp_dir), "set": "lattice.N=2,model.q_max=32"}


@pytest.mark.cli
class TestHierGapCLI:
    def test_version(self, capsys):
        HierGapCLI().version()
        assert "hiergap version" in capsys.readouterr().out

    def test_flow_writes_bundle(self, cli_args, temp_dir, capsys):
        HierGapCLI(**cli_args).flow()
        output = capsys.readouterr().out
        assert "sine-gordon flow" in output
        assert (temp_dir / "flow.jsonl").exists()
        assert (temp_dir / "flow.csv").exists()

    def test_certify(self, cli_args, temp_dir, capsys):
        HierGapCLI(**cli_args).certify()
        assert "gap lower bound" in capsys.readouterr().out
        assert json.loads((temp_dir / "certificate.json").read_text())["valid"] is True

    def test_sweep(self, cli_args, temp_dir, capsys):
        HierGapCLI(**cli_args, seed=3).sweep()
        assert "1 rows" in capsys.readouterr().out
        assert (temp_dir / "results.csv").exists()

    def test_overrides_as_list(self, temp_dir):
        cli = HierGapCLI(out=str(temp_dir), set=["lattice.N=2", "model.beta=0.25"], workers=1)
        config = cli._load()
        assert config.lattice.N == 2
        assert config.model.beta == 0.25
        assert config.output_dir == temp_dir

    def test_config_file(self, temp_dir):
        path = temp_dir / "experiment.json"
        path.write_text(json.dumps({"model": {"family": "free", "m2": 0.5}}))
        config = HierGapCLI(config=str(path), seed=7)._load()
        assert config.model.family == "free"
        assert config.seeds == [7]

    def test_missing_config_exits_with_config_code(self, temp_dir):
        with pytest.raises(SystemExit) as excinfo:
            HierGapCLI(config=str(temp_dir / "absent.json")).flow()
        assert excinfo.value.code == 2

    def test_bad_override_exits(self):
        with pytest.raises(SystemExit) as excinfo:
            HierGapCLI(set="lattice.L=1").certify()
        assert excinfo.value.code == 2

    def test_validate_reports_failure(self, capsys):
        checks = [ValidationCheck("projector algebra", True, "ok"), ValidationCheck("ou generator gap", False, "off")]
        with patch("hiergap.cli.run_validation_suite", return_value=checks), pytest.raises(SystemExit) as excinfo:
            HierGapCLI().validate()
        assert excinfo.value.code == 3
        assert "FAIL" in capsys.readouterr().out

    def test_tune_without_coupling_logs_fallback(self, mock_loguru_logger):
        result = MagicMock()
        result.model_dump_json.return_value = "{}"
        with patch("hiergap.cli.tune_critical_nu", return_value=result) as tune:
            HierGapCLI(set="lattice.N=2").tune(t=1e-3)
        assert tune.call_args.args[0] == 0.05
        assert tune.call_args.args[2] == 1e-3
        assert any("g=0.05" in call.args[0] for call in mock_loguru_logger["info"].call_args_list)

    def test_validate_passes(self, capsys):
        checks = [ValidationCheck("projector algebra", True, "ok")]
        with patch("hiergap.cli.run_validation_suite", return_value=checks):
            HierGapCLI().validate()
        assert "pass" in capsys.readouterr().out


@pytest.mark.unit
def test_main_uses_fire():
    with patch("hiergap.cli.fire.Fire") as mock_fire:
        main()
    mock_fire.assert_called_once_with(HierGapCLI)
