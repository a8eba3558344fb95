"""基准 Tester 测试"""

import numpy as np
import pytest

from core.exceptions import ConfigurationError
from models.simulation import PowerLawModel, TaskSpec
from models.validation import ErrorClass, ExecutionReport
from services.reference_tasks import (
    TASK_FACTORIES,
    TASKS_DIR,
    apply_overrides,
    describe_task,
    load_task,
    run_tester,
    task_cavity_powerlaw,
    task_fisher_kpp,
)
from services.task_descriptions import task_from_description
from services.validation_oracle import centerline_profile, load_output, self_convergence_error, validate
from services.vtk_io import file_checksum, read_manifest


class TestTaskCatalogue:
    @pytest.mark.parametrize("name", sorted(TASK_FACTORIES))
    def test_builtin_tasks_match_their_descriptions(self, name):
        task = load_task(name)
        described = task_from_description(TASKS_DIR / f"{name}.md")
        assert described.config == task.config
        assert described.acceptance == task.acceptance

    def test_unknown_task(self):
        with pytest.raises(ConfigurationError):
            load_task("heat_equation")

    def test_load_from_description_path(self):
        task = load_task(str(TASKS_DIR / "fisher_kpp.md"))
        assert task.name == "fisher_kpp"
        assert task.config.reaction.rate == 0.1

    def test_fisher_domains(self):
        assert task_fisher_kpp("square").config.nx == 100
        with pytest.raises(ConfigurationError):
            task_fisher_kpp("torus")

    def test_cavity_consistency_scales_with_grid(self):
        task = task_cavity_powerlaw(n_cells=50)
        assert isinstance(task.config.params, PowerLawModel)
        assert task.config.params.consistency == pytest.approx(0.5 ** 1.25)
        assert task_cavity_powerlaw(lid_velocity=(0.05, 0.0)).config.bc[0].wall_velocity == (0.05, 0.0)

    def test_overrides(self):
        task = apply_overrides(load_task("ad_gaussian"), {"steps": "40", "output_every": "20", "velocity_x": "0.2"})
        assert task.config.steps == 40
        assert task.config.output_every == 20
        assert task.config.params.velocity == (0.2, 0.0)
        assert task.name == "ad_gaussian"

    def test_invalid_override(self):
        with pytest.raises(ConfigurationError):
            apply_overrides(load_task("ad_gaussian"), {"steps": "-3"})

    def test_description_reflects_overrides(self, ad_task):
        text = describe_task(ad_task)
        assert "steps=100\n" in text
        assert "# Equations" in text

    def test_description_requires_file(self):
        task = load_task("ad_gaussian").model_copy(update={"description_path": None})
        with pytest.raises(ConfigurationError):
            describe_task(task)


class TestRunTester:
    def test_snapshots_and_manifest(self, ad_task, tmp_path):
        out_dir = tmp_path / "out"
        output = run_tester(ad_task, out_dir)

        assert output.steps_run == 100
        assert output.converged is None
        assert [s.timestep for s in output.snapshots] == [0, 50, 100]
        assert [row["timestep"] for row in output.time_series] == [0, 100]

        manifest = read_manifest(out_dir)
        assert manifest == output.manifest
        for record in manifest.snapshots:
            assert file_checksum(out_dir / record.filename) == record.checksum
            assert record.field_names == ["phi", "velocity"]
        masses = [row["mass"] for row in manifest.time_series]
        assert masses[1] == pytest.approx(masses[0], rel=1e-12)

    def test_written_output_reads_back(self, ad_task, tmp_path):
        output = run_tester(ad_task, tmp_path)
        loaded = load_output(tmp_path)
        np.testing.assert_allclose(loaded.final_scalar, output.final_scalar, rtol=1e-13)
        assert loaded.steps_run == output.steps_run

    def test_shortened_task_passes_validation(self, ad_task, tmp_path):
        run_tester(ad_task, tmp_path)
        report = validate(ad_task, ExecutionReport(exit_status=0), load_output(tmp_path), tmp_path)
        assert report.error_class == ErrorClass.PASS, report.notes
        assert {c.name for c in report.checks} == {
            "peak_amplitude_rel_error",
            "peak_position_error",
            "mass_drift",
            "variance_growth_rel_error",
        }

    def test_steady_task_stops_early(self, mixed_bc_config, tmp_path):
        task = TaskSpec(name="mixed_small", config=mixed_bc_config)
        output = run_tester(task, tmp_path)
        assert output.converged is True
        assert output.steps_run < mixed_bc_config.steps
        assert output.steps_run % mixed_bc_config.steady_check_every == 0
        assert output.snapshots[-1].timestep == output.steps_run
        assert output.time_series[-1]["residual"] <= mixed_bc_config.steady_tol

    def test_steady_task_reports_non_convergence(self, mixed_bc_config, tmp_path):
        config = mixed_bc_config.model_copy(update={"steps": 200, "output_every": 200})
        output = run_tester(TaskSpec(name="mixed_short", config=config), tmp_path)
        assert output.converged is False
        assert output.steps_run == 200


@pytest.mark.slow
class TestReferenceRuns:
    """完整参考任务，默认跳过（``pytest -m slow``）

    纯 NumPy 下 fisher_kpp 约 40 s，cavity_powerlaw 约 160 s，
    方腔自收敛对照约 10 min，超出单任务 5 min 的运行预算。
    """

    @pytest.mark.parametrize("name", sorted(TASK_FACTORIES))
    def test_reference_output_passes(self, name, tmp_path):
        task = load_task(name)
        run_tester(task, tmp_path)
        report = validate(task, ExecutionReport(exit_status=0), load_output(tmp_path), tmp_path)
        assert report.error_class == ErrorClass.PASS, report.notes

    def test_fisher_front_speed(self, tmp_path):
        task = load_task("fisher_kpp")
        run_tester(task, tmp_path)
        report = validate(task, ExecutionReport(exit_status=0), load_output(tmp_path), tmp_path)
        assert report.metrics["front_speed"] == pytest.approx(2.0 * np.sqrt(0.1), rel=0.05)

    def test_cavity_self_convergence(self, tmp_path):
        profiles = []
        for n in (100, 200):
            task = apply_overrides(task_cavity_powerlaw(n_cells=n), {"steady_tol": "1e-5"})
            output = run_tester(task, tmp_path / str(n))
            assert output.converged is True
            profiles.append(centerline_profile(output.final_fields["velocity"], 0.1))
        assert self_convergence_error(*profiles) <= 0.03
