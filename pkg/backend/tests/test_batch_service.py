"""批量评估测试"""

import json

import pytest

from models.pipeline import BatchResult, PipelineLimits, PipelineResult, PipelineState, Stage
from models.validation import ErrorClass
from services.batch_service import BatchService, aggregate, render_success_table
from services.chat_backends import ScriptedBackend
from tests.conftest import CONSISTENT, INCONSISTENT, write_fixtures


def _result(attempt: int, stage: Stage, error_class: ErrorClass) -> PipelineResult:
    state = PipelineState()
    state.enter(stage)
    return PipelineResult(attempt=attempt, state=state, error_class=error_class, duration=0.5)


class TestAggregate:
    def test_ordered_by_attempt(self):
        results = [
            _result(2, Stage.FAILED, ErrorClass.SYNTACTIC),
            _result(0, Stage.DONE, ErrorClass.PASS),
            _result(1, Stage.DONE, ErrorClass.PASS),
        ]
        batch = aggregate("ad_gaussian", "scripted:x", results)
        assert [o.attempt for o in batch.per_attempt] == [0, 1, 2]
        assert batch.fraction == "2/3"
        assert batch.success_rate == pytest.approx(2 / 3)
        assert batch.per_attempt[2].error_class == ErrorClass.SYNTACTIC
        assert batch.per_attempt[2].final_stage == Stage.FAILED

    def test_to_dict(self):
        data = aggregate("t", "b", [_result(0, Stage.DONE, ErrorClass.PASS)]).to_dict()
        assert data["fraction"] == "1/1"
        assert data["success_rate"] == 1.0
        assert data["per_attempt"][0]["error_class"] == "pass"
        json.dumps(data)

    def test_successes_cannot_exceed_attempts(self):
        with pytest.raises(ValueError):
            BatchResult(task="t", attempts=1, successes=2)

    def test_success_table(self):
        table = render_success_table(
            [
                BatchResult(task="ad_gaussian", backend="http:a", attempts=10, successes=7),
                BatchResult(task="ad_gaussian", backend="http:b", attempts=10, successes=10),
                BatchResult(task="fisher_kpp", backend="http:a", attempts=10, successes=3),
            ]
        )
        lines = table.splitlines()
        assert lines[0] == "| task        | http:a | http:b |"
        assert lines[1] == "|-------------|--------|--------|"
        assert lines[2] == "| ad_gaussian | 7/10   | 10/10  |"
        assert lines[3] == "| fisher_kpp  | 3/10   | -      |"


class TestBatchRuns:
    async def test_seven_of_ten(self, ad_task, codebase_copy, good_reply, tmp_path):
        files = {"generator_1.txt": good_reply, "inspector1_1.txt": CONSISTENT}
        for attempt in (7, 8, 9):
            files[f"attempt_{attempt}/generator_1.txt"] = good_reply
            files[f"attempt_{attempt}/inspector1_1.txt"] = INCONSISTENT
        backend = ScriptedBackend(write_fixtures(tmp_path / "replies", files))
        limits = PipelineLimits(max_inspect1=1, max_inspect2=3, max_debug=8)

        service = BatchService(parallel=4)
        try:
            batch = await service.run_batch(
                ad_task, codebase_copy, backend, 10, limits, runs_root=tmp_path / "runs"
            )
        finally:
            await service.cleanup()

        assert batch.fraction == "7/10"
        assert batch.backend == "scripted:replies"
        failed = [o.attempt for o in batch.per_attempt if o.final_stage == Stage.FAILED]
        assert failed == [7, 8, 9]
        assert {o.error_class for o in batch.per_attempt if o.attempt in failed} == {ErrorClass.MISINTERPRETATION}

        (batch_dir,) = (tmp_path / "runs").iterdir()
        attempt_dirs = sorted(p.name for p in batch_dir.iterdir())
        assert attempt_dirs == [f"attempt_{i:03d}" for i in range(10)]
        assert (batch_dir / "attempt_000" / "packed" / "generated" / "ad_solver.py").is_file()
        assert not (batch_dir / "attempt_008" / "packed").exists()
        report = json.loads((batch_dir / "attempt_008" / "report.json").read_text(encoding="utf-8"))
        assert report["error_class"] == "semantic:misinterpretation"
        assert not (tmp_path / "codebase" / "generated").exists()

    def test_batch_dir_names_backend(self, ad_task, tmp_path):
        backend = ScriptedBackend(write_fixtures(tmp_path / "replies", {}))
        path = BatchService().batch_dir(ad_task, backend, tmp_path)
        assert path.parent == tmp_path
        assert path.name.startswith("ad_gaussian_scripted-replies_")
