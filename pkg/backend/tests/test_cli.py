"""命令行测试"""

import json

import pytest

from cli import EXIT_FAILURE, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from core.config import settings
from services.reference_tasks import describe_task
from tests.conftest import write_fixtures


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


@pytest.fixture
def description_file(ad_task, tmp_path):
    """缩短后的高斯任务描述，Tester 章节为 100 步"""
    path = tmp_path / "ad_gaussian.md"
    path.write_text(describe_task(ad_task), encoding="utf-8")
    return path


@pytest.fixture
def runs_dir(tmp_path, monkeypatch):
    path = tmp_path / "runs"
    monkeypatch.setattr(settings, "runs_dir", str(path))
    return path


class TestArguments:
    @pytest.mark.parametrize("argv", [[], ["frobnicate"], ["run-tester"], ["batch", "ad_gaussian", "--attempts", "x"]])
    def test_usage_errors(self, argv):
        assert main(argv) == EXIT_USAGE

    def test_version(self, capsys):
        assert main(["--version"]) == EXIT_OK
        assert settings.app_version in capsys.readouterr().out


class TestRunTesterAndValidate:
    def test_run_tester_passes(self, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main(
            ["run-tester", "ad_gaussian", "--steps", "100", "--set", "output_every=50", "--output-dir", str(out_dir)]
        )
        report = _stdout_json(capsys)
        assert code == EXIT_OK, report
        assert report["error_class"] == "pass"
        assert (out_dir / "manifest.json").is_file()

    @pytest.mark.parametrize(
        "argv",
        [
            ["run-tester", "heat_equation"],
            ["run-tester", "ad_gaussian", "--set", "steps"],
            ["run-tester", "ad_gaussian", "--set", "diffusivity=-1"],
        ],
    )
    def test_run_tester_config_errors(self, argv, capsys):
        assert main(argv) == EXIT_USAGE
        assert "error_code" in _stdout_json(capsys)

    def test_validate_existing_output(self, tmp_path, description_file, capsys):
        out_dir = tmp_path / "out"
        main(["run-tester", "ad_gaussian", "--steps", "100", "--set", "output_every=50", "--output-dir", str(out_dir)])
        capsys.readouterr()
        assert main(["validate", str(out_dir), str(description_file)]) == EXIT_OK
        assert _stdout_json(capsys)["error_class"] == "pass"

    def test_validate_detects_missing_advection(self, tmp_path, description_file, capsys):
        out_dir = tmp_path / "frozen"
        main(
            [
                "run-tester", "ad_gaussian", "--steps", "100",
                "--set", "output_every=50", "--set", "velocity_x=0.0", "--output-dir", str(out_dir),
            ]
        )
        capsys.readouterr()
        assert main(["validate", str(out_dir), str(description_file)]) == EXIT_FAILURE
        assert _stdout_json(capsys)["error_class"] == "semantic:misinterpretation"

    def test_validate_missing_directory(self, tmp_path):
        assert main(["validate", str(tmp_path / "absent"), "ad_gaussian"]) == EXIT_USAGE

    def test_validate_without_manifest_is_spurious(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path), "ad_gaussian"]) == EXIT_FAILURE
        report = _stdout_json(capsys)
        assert report["error_class"] == "semantic:spurious"
        assert report["success"] is False


class TestLintAndRemediate:
    def test_lint(self, tmp_path, capsys):
        (tmp_path / "solver.py").write_text("import numpy as np\nnp.einsum('ii', a)\n")
        assert main(["lint", str(tmp_path)]) == EXIT_FAILURE
        violations = _stdout_json(capsys)
        assert [(v["file"], v["line"], v["rule_id"]) for v in violations] == [("solver.py", 2, "forbidden-einsum")]

    def test_lint_clean(self, tmp_path, capsys):
        (tmp_path / "solver.py").write_text("import numpy as np\n")
        assert main(["lint", str(tmp_path / "solver.py")]) == EXIT_OK
        assert _stdout_json(capsys) == []

    def test_lint_missing_path(self, tmp_path):
        assert main(["lint", str(tmp_path / "absent")]) == EXIT_USAGE

    def test_remediate(self, tmp_path, capsys):
        (tmp_path / "services").mkdir()
        (tmp_path / "services" / "lbm.py").write_text("omega = 1.0\nf = omega * 2\n")
        (tmp_path / "services" / "boundary_conditions.py").write_text("X = 1\n")
        code = main(
            [
                "remediate", str(tmp_path),
                "--rename", "omega:freq_val",
                "--placeholder", "PeriodicBC:services/boundary_conditions.py",
            ]
        )
        summary = _stdout_json(capsys)
        assert code == EXIT_OK
        assert summary["renamed"][0]["count"] == 2
        assert summary["changed_files"] == ["services/boundary_conditions.py", "services/lbm.py"]
        assert (tmp_path / "services" / "lbm.py").read_text() == "freq_val = 1.0\nf = freq_val * 2\n"
        assert "class PeriodicBC:" in (tmp_path / "services" / "boundary_conditions.py").read_text()

    def test_remediate_conflict_changes_nothing(self, tmp_path):
        (tmp_path / "a.py").write_text("omega = 1\nfreq_val = 2\n")
        assert main(["remediate", str(tmp_path), "--rename", "omega:freq_val"]) == EXIT_FAILURE
        assert (tmp_path / "a.py").read_text() == "omega = 1\nfreq_val = 2\n"

    @pytest.mark.parametrize("extra", [[], ["--rename", "omega"]])
    def test_remediate_usage(self, tmp_path, extra):
        assert main(["remediate", str(tmp_path)] + extra) == EXIT_USAGE


class TestPipelineCommands:
    def test_pipeline_scripted(self, description_file, codebase_copy, happy_fixtures, runs_dir, tmp_path, capsys):
        code = main(
            [
                "pipeline", str(description_file),
                "--backend", f"scripted:{happy_fixtures}",
                "--codebase", codebase_copy.root,
                "--packer-root", str(tmp_path / "packed"),
            ]
        )
        result = _stdout_json(capsys)
        assert code == EXIT_OK, result
        assert result["stage_history"] == ["generating", "inspecting1", "checking", "packing", "done"]
        assert result["packed_files"] == ["generated/ad_solver.py"]
        assert (runs_dir / "attempts").is_dir()
        assert result["attempt_dir"].startswith(str(runs_dir / "attempts"))

    def test_pipeline_failure(self, description_file, codebase_copy, perpetual_fixtures, runs_dir, capsys):
        code = main(
            [
                "pipeline", str(description_file),
                "--backend", f"scripted:{perpetual_fixtures}",
                "--codebase", codebase_copy.root,
                "--max-debug", "1",
            ]
        )
        result = _stdout_json(capsys)
        assert code == EXIT_FAILURE
        assert result["error_class"] == "syntactic"
        assert result["final_stage"] == "failed"

    def test_pipeline_missing_fixture_is_infrastructure(self, description_file, codebase_copy, runs_dir, tmp_path):
        empty = write_fixtures(tmp_path / "empty", {})
        argv = ["pipeline", str(description_file), "--backend", f"scripted:{empty}", "--codebase", codebase_copy.root]
        assert main(argv) == EXIT_IO

    def test_pipeline_unknown_backend(self, description_file, codebase_copy, runs_dir):
        argv = ["pipeline", str(description_file), "--backend", "grpc:x", "--codebase", codebase_copy.root]
        assert main(argv) == EXIT_USAGE

    def test_batch(self, description_file, codebase_copy, happy_fixtures, tmp_path, runs_dir, capsys):
        code = main(
            [
                "batch", str(description_file),
                "--attempts", "2",
                "--parallel", "2",
                "--backend", f"scripted:{happy_fixtures}",
                "--codebase", codebase_copy.root,
                "--runs-dir", str(tmp_path / "batch"),
            ]
        )
        captured = capsys.readouterr()
        results = json.loads(captured.out)
        assert code == EXIT_OK
        assert [r["fraction"] for r in results] == ["2/2"]
        assert "| ad_gaussian | 2/2" in captured.err

    def test_batch_requires_attempts(self, description_file):
        assert main(["batch", str(description_file), "--attempts", "0"]) == EXIT_USAGE
