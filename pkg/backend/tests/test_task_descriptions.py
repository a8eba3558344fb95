"""配置文件与 Math-Algo 描述解析测试"""

import pytest

from core.config import DATA_DIR
from core.exceptions import ConfigurationError, DescriptionFormatError
from models.simulation import BCKind, BoundaryEdge, InitKind, PowerLawModel, ReactionKind, TransportParams
from services.task_descriptions import (
    parse_acceptance,
    parse_config_text,
    parse_config_values,
    parse_description,
    render_config,
    render_description,
    task_from_description,
)


TASKS_DIR = DATA_DIR / "tasks"

MINIMAL_CONFIG = """\
nx=20
ny=10
steps=50
diffusivity=0.05
init=uniform:0.5
output_every=10
"""


class TestConfigText:
    def test_minimal_config_defaults_to_periodic(self):
        config = parse_config_text(MINIMAL_CONFIG)
        assert (config.nx, config.ny, config.steps) == (20, 10, 50)
        assert isinstance(config.params, TransportParams)
        assert config.params.velocity == (0.0, 0.0)
        assert config.bc == []
        assert config.reaction.kind == ReactionKind.NONE

    def test_comments_and_fences_are_skipped(self):
        values = parse_config_values("```\n# comment\n\nnx = 4\n```\n")
        assert values == {"nx": "4"}

    @pytest.mark.parametrize(
        "text",
        [
            MINIMAL_CONFIG + "colour=blue\n",
            MINIMAL_CONFIG + "nx=30\n",
            MINIMAL_CONFIG + "just a sentence\n",
        ],
    )
    def test_malformed_lines(self, text):
        with pytest.raises(ConfigurationError):
            parse_config_values(text)

    @pytest.mark.parametrize(
        "key, value, reported",
        [
            ("init", "gaussian:-1", "init"),
            ("diffusivity", "-0.1", "params"),
            ("reaction", "logistic:fast", "reaction"),
            ("bc_top", "dirichlet:nan", "bc_top"),
        ],
    )
    def test_invalid_values_name_the_key(self, key, value, reported):
        values = parse_config_values(MINIMAL_CONFIG)
        values[key] = value
        text = "".join(f"{k}={v}\n" for k, v in values.items())
        with pytest.raises(ConfigurationError) as exc:
            parse_config_text(text)
        assert exc.value.details.get("config_key") == reported

    def test_non_integer_grid_size(self):
        with pytest.raises(ConfigurationError):
            parse_config_text(MINIMAL_CONFIG.replace("nx=20", "nx=abc"))

    def test_missing_required_key(self):
        with pytest.raises(ConfigurationError) as exc:
            parse_config_text(MINIMAL_CONFIG.replace("steps=50\n", ""))
        assert exc.value.details["config_key"] == "steps"

    def test_output_every_larger_than_steps(self):
        with pytest.raises(ConfigurationError):
            parse_config_text(MINIMAL_CONFIG.replace("output_every=10", "output_every=60"))

    def test_fluid_boundary_on_scalar_task_rejected(self):
        with pytest.raises(ConfigurationError):
            parse_config_text(MINIMAL_CONFIG + "bc_top=noslip\n")

    def test_power_law_and_wall(self):
        config = parse_config_text(
            "nx=16\nny=16\nsteps=100\nconsistency_K=0.05\nbehavior_n=0.5\nviscosity_max=2.0\n"
            "bc_top=wall:0.1,0\nbc_bottom=noslip\ninit=quiescent\noutput_every=50\n"
        )
        assert isinstance(config.params, PowerLawModel)
        assert config.params.viscosity_bounds[1] == 2.0
        top = config.rule_for(BoundaryEdge.TOP)
        assert top.kind == BCKind.MOVING_WALL
        assert top.wall_velocity == (0.1, 0.0)
        assert config.rule_for(BoundaryEdge.LEFT) is None

    def test_rendered_config_parses_back(self):
        text = (
            MINIMAL_CONFIG.replace("init=uniform:0.5", "init=gaussian:3.0,5.0,4.0,2.5")
            + "velocity_x=0.1\nreaction=tabulated:0:0,0.5:0.1,1:0\n"
            + "bc_left=dirichlet:1.0\nbc_right=neumann\nsteady_state=yes\nsteady_tol=1e-9\n"
        )
        config = parse_config_text(text)
        assert parse_config_text(render_config(config, "demo")) == config
        assert config.init.amplitude == 2.5
        assert config.steady_state is True


class TestDescription:
    def test_shipped_descriptions_parse(self):
        for path in sorted(TASKS_DIR.glob("*.md")):
            task = task_from_description(path)
            assert task.name == path.stem
            assert task.acceptance

    def test_sections(self):
        description = parse_description(TASKS_DIR / "ad_gaussian.md")
        assert "D ∇²φ" in description.equations
        assert description.section("Tester").startswith("```")
        assert "peak_position_error" in description.acceptance

    def test_hash_inside_fence_is_not_a_heading(self):
        text = (
            "# Equations\n\neq\n\n# Algorithm\n\n```\n# not a heading\n```\n\n"
            "# Tester\n\n" + MINIMAL_CONFIG + "\n# Acceptance\n\n- mass_drift <= 1e-10\n"
        )
        description = parse_description(text)
        assert "# not a heading" in description.algorithm

    @pytest.mark.parametrize(
        "text",
        [
            "# Equations\n\n# Algorithm\n\n# Tester\n",
            "# Equations\n\n# Algorithm\n\n# Tester\n\n# Acceptance\n\n# Acceptance\n",
            "# Algorithm\n\n# Equations\n\n# Tester\n\n# Acceptance\n",
            "# Equations\n\n# Notes\n\n# Algorithm\n\n# Tester\n\n# Acceptance\n",
            "preamble\n# Equations\n\n# Algorithm\n\n# Tester\n\n# Acceptance\n",
        ],
    )
    def test_structural_errors(self, text):
        with pytest.raises(DescriptionFormatError):
            parse_description(text)

    def test_invalid_tester_section(self):
        text = "# Equations\n\n# Algorithm\n\n# Tester\n\nnx=4\n\n# Acceptance\n"
        with pytest.raises(DescriptionFormatError) as exc:
            task_from_description(text)
        assert exc.value.details["section"] == "Tester"

    def test_rendered_description_round_trips(self):
        task = task_from_description(TASKS_DIR / "bc_mixed.md")
        text = render_description(task, "equations here", "algorithm here")
        again = task_from_description(text)
        assert again.config == task.config
        assert again.acceptance == task.acceptance
        assert again.detectors == task.detectors


class TestAcceptance:
    def test_checks_and_detector_overrides(self):
        checks, detectors = parse_acceptance(
            "Thresholds:\n- l2_rel_error <= 0.05\n- steps_run >= 10\n- detector.bc_swap_miss = 0.3\n"
        )
        assert [(c.name, c.comparator, c.threshold) for c in checks] == [
            ("l2_rel_error", "<=", 0.05),
            ("steps_run", ">=", 10.0),
        ]
        assert detectors.bc_swap_miss == 0.3

    @pytest.mark.parametrize("line", ["- l2 < 0.1", "- detector.unknown = 1", "- l2 <= abc"])
    def test_malformed_lines(self, line):
        with pytest.raises(DescriptionFormatError):
            parse_acceptance(line)

    def test_check_passes(self):
        checks, _ = parse_acceptance("- a <= 1\n- b >= 2")
        assert checks[0].passes(1.0)
        assert not checks[0].passes(float("nan"))
        assert not checks[1].passes(None)


def test_gaussian_without_center_uses_domain_center():
    config = parse_config_text(MINIMAL_CONFIG.replace("init=uniform:0.5", "init=gaussian:2.0"))
    assert config.init.kind == InitKind.GAUSSIAN
    assert config.init.resolved_center(20, 10) == (10.0, 5.0)
