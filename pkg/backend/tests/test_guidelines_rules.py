"""Guidelines 规则测试"""

import logging

import pytest

from core.exceptions import ConfigurationError, FileProcessingError, RenameConflictError, RuleParseError
from models.pipeline import AgentRole, CodeArtifact
from models.rules import RemediationKind, RuleKind
from services.guidelines_rules import (
    DEFAULT_RULES,
    apply_remediations,
    collect_source_files,
    inject_placeholder,
    lint,
    load_rules,
    parse_rules,
    remediate_rename,
    render_guidelines,
)


RULES_TEXT = (
    "# comment\n"
    "\n"
    "lint\tno-print\t\\bprint\\s*\\(\tDo not print\n"
    "prompt\tuse-numpy\tUse numpy arrays\n"
    "advisory\tomega-float\tThe constant omega must be a float.\n"
    "remediation\trename-omega\trename:omega:freq_val\n"
)


class TestParsing:
    def test_rule_kinds_in_file_order(self):
        rules = parse_rules(RULES_TEXT)
        assert rules.ids() == ["no-print", "use-numpy", "omega-float", "rename-omega"]
        remediation = rules.by_kind(RuleKind.REMEDIATION)[0]
        assert remediation.remediation == RemediationKind.RENAME
        assert remediation.parameters == ["omega", "freq_val"]
        assert rules.by_kind(RuleKind.ADVISORY)[0].advisory

    @pytest.mark.parametrize(
        "line",
        [
            "lint\tonly-two-fields",
            "shout\tx\tpayload",
            "lint\tbad-regex\t(unclosed",
            "remediation\tr\trename:only_one",
            "remediation\tr\tdelete:a:b",
        ],
    )
    def test_malformed_lines(self, line):
        with pytest.raises(RuleParseError) as exc:
            parse_rules("# header\n" + line + "\n")
        assert exc.value.line_number == 2

    def test_duplicate_ids(self):
        with pytest.raises(RuleParseError):
            parse_rules("prompt\ta\tone\nprompt\ta\ttwo\n")

    def test_shipped_guidelines(self):
        rules = load_rules()
        assert set(r.id for r in DEFAULT_RULES) <= set(rules.ids())
        assert len(rules.by_kind(RuleKind.REMEDIATION)) == 2

    def test_defaults_are_appended(self, tmp_path):
        path = tmp_path / "rules.tsv"
        path.write_text("prompt\tbe-brief\tKeep functions short\n")
        rules = load_rules(path)
        assert rules.ids()[0] == "be-brief"
        assert rules.ids()[1:] == [r.id for r in DEFAULT_RULES]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileProcessingError):
            load_rules(tmp_path / "absent.tsv")

    def test_render_guidelines(self):
        text = render_guidelines(parse_rules(RULES_TEXT))
        assert text == "1. Do not print\n2. Use numpy arrays\n3. The constant omega must be a float.\n"


class TestLint:
    def test_violations_are_sorted(self):
        files = {
            "b.py": "import numpy as np\nx = np.einsum('ii', a)\n",
            "a.py": "from jmp import policy\nprint(einsum (a))\n",
        }
        violations = lint(files, load_rules())
        assert [(v.file, v.line, v.rule_id) for v in violations] == [
            ("a.py", 1, "forbidden-import-jmp"),
            ("a.py", 2, "forbidden-einsum"),
            ("b.py", 2, "forbidden-einsum"),
        ]
        assert violations[0].message == "Do not import library jmp"

    def test_artifact_includes_tester(self):
        artifact = CodeArtifact(
            module_files={"solver.py": "x = 1\n"},
            tester_file="import jmp\n",
            provenance=AgentRole.GENERATOR,
        )
        violations = lint(artifact, load_rules())
        assert [v.file for v in violations] == ["test_case.py"]

    def test_clean_code(self):
        assert lint({"ok.py": "import numpy as np\nnp.dot(a, b)\n"}, load_rules()) == []

    def test_collect_source_files(self, tmp_path):
        (tmp_path / "pkg").mkdir()
        (tmp_path / "pkg" / "mod.py").write_text("a = 1\n")
        (tmp_path / "notes.md").write_text("# notes\n")
        assert collect_source_files(tmp_path) == {"pkg/mod.py": "a = 1\n"}
        assert collect_source_files(tmp_path / "pkg" / "mod.py") == {"mod.py": "a = 1\n"}
        with pytest.raises(FileProcessingError):
            collect_source_files(tmp_path / "missing")


class TestRemediation:
    def test_rename_is_whole_word(self):
        files = {
            "lbm.py": "omega = 1.0\nomega_max = 2\nf = f - omega * (f - feq)\n",
            "tester.py": "from lbm import omega\n",
        }
        result = remediate_rename(files, "omega", "freq_val")
        assert result.files["lbm.py"] == "freq_val = 1.0\nomega_max = 2\nf = f - freq_val * (f - feq)\n"
        assert result.files["tester.py"] == "from lbm import freq_val\n"
        assert result.count == 3
        assert result.per_file == {"lbm.py": 2, "tester.py": 1}

    def test_rename_conflict_leaves_files_untouched(self):
        files = {"a.py": "omega = 1\n", "b.py": "freq_val = 2\n"}
        with pytest.raises(RenameConflictError) as exc:
            remediate_rename(files, "omega", "freq_val")
        assert exc.value.details["filename"] == "b.py"
        assert files == {"a.py": "omega = 1\n", "b.py": "freq_val = 2\n"}

    def test_rename_requires_identifiers(self):
        with pytest.raises(ConfigurationError):
            remediate_rename({"a.py": ""}, "omega", "freq-val")

    def test_placeholder_injection(self):
        files = {"services/bc.py": "def apply():\n    pass\n"}
        updated = inject_placeholder(files, "PeriodicBC", "services/bc.py")
        assert "class PeriodicBC:" in updated["services/bc.py"]
        assert updated["services/bc.py"].startswith("def apply():")
        assert "PeriodicBC" not in files["services/bc.py"]

    def test_placeholder_already_declared(self, caplog):
        files = {"bc.py": "class PeriodicBC:\n    pass\n"}
        logger = logging.getLogger("services.guidelines_rules")
        logger.addHandler(caplog.handler)
        try:
            assert inject_placeholder(files, "PeriodicBC", "bc.py") == files
        finally:
            logger.removeHandler(caplog.handler)
        assert any("跳过" in r.getMessage() for r in caplog.records)

    def test_placeholder_missing_target(self):
        with pytest.raises(FileProcessingError):
            inject_placeholder({"a.py": ""}, "PeriodicBC", "b.py")

    def test_apply_remediations_over_codebase_and_artifact(self):
        rules = load_rules()
        codebase = {
            "services/lbm_core.py": "def collide(f, omega):\n    return f * omega\n",
            "services/boundary_conditions.py": "def apply():\n    pass\n",
        }
        artifact = {"test_case.py": "from services.lbm_core import collide\ncollide(1.0, omega=1.0)\n"}
        codebase_out, artifact_out, notes = apply_remediations(codebase, artifact, rules)
        assert "freq_val" in codebase_out["services/lbm_core.py"]
        assert "omega" not in codebase_out["services/lbm_core.py"]
        assert artifact_out["test_case.py"].endswith("collide(1.0, freq_val=1.0)\n")
        assert "class PeriodicBC:" in codebase_out["services/boundary_conditions.py"]
        assert "PeriodicBC" not in artifact_out["test_case.py"]
        assert len(notes) == 2

    def test_conflicting_rename_is_skipped(self):
        rules = parse_rules("remediation\trename-omega\trename:omega:freq_val\n")
        codebase = {"a.py": "omega = 1\nfreq_val = 2\n"}
        codebase_out, _, notes = apply_remediations(codebase, {"t.py": "omega\n"}, rules)
        assert codebase_out == codebase
        assert "跳过" in notes[0]

    def test_rename_ignores_target_in_untouched_codebase_files(self):
        rules = parse_rules("remediation\trename-omega\trename:omega:freq_val\n")
        codebase = {"services/lbm_core.py": "def collide(f, freq_val):\n    return f * freq_val\n"}
        artifact = {"test_case.py": "omega = 1.0\nprint(omega)\n"}
        codebase_out, artifact_out, notes = apply_remediations(codebase, artifact, rules)
        assert codebase_out == codebase
        assert artifact_out["test_case.py"] == "freq_val = 1.0\nprint(freq_val)\n"
        assert "2 处" in notes[0]
