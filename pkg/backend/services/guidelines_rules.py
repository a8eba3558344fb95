"""Guidelines 规则

规则文件每行 ``KIND<TAB>ID<TAB>PAYLOAD[<TAB>MESSAGE]``：
``prompt`` / ``advisory`` 的 PAYLOAD 是注入提示词的规则文本，``lint`` 的 PAYLOAD 是正则表达式，
``remediation`` 的 PAYLOAD 是 ``rename:<原名>:<新名>`` 或 ``placeholder:<名称>:<目标文件>``。
"""

import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from pydantic import ValidationError

from core.config import settings
from core.exceptions import (
    ConfigurationError,
    FileProcessingError,
    RenameConflictError,
    RuleParseError,
)
from core.logging import get_logger
from models.pipeline import CodeArtifact
from models.rules import RemediationKind, RenameResult, Rule, RuleKind, RuleSet, Violation


logger = get_logger(__name__)

_IDENTIFIER = re.compile(r"^[A-Za-z_]\w*$")

# Python 代码库的空声明模板
PLACEHOLDER_TEMPLATE = '\n\nclass {name}:\n    """占位声明，仅用于满足导入"""\n\n    pass\n'

DEFAULT_RULES: Tuple[Rule, ...] = (
    Rule(
        id="forbidden-einsum",
        kind=RuleKind.LINT,
        pattern=r"\beinsum\s*\(",
        message="Do not use the function einsum()",
    ),
    Rule(
        id="forbidden-import-jmp",
        kind=RuleKind.LINT,
        pattern=r"^\s*(import\s+jmp\b|from\s+jmp\b)",
        message="Do not import library jmp",
    ),
    Rule(
        id="output-vtk",
        kind=RuleKind.PROMPT,
        message="You must produce the .vtk, .vtu files for evaluation",
    ),
)

FileSet = Union[CodeArtifact, Dict[str, str]]


def _as_files(target: FileSet) -> Dict[str, str]:
    if isinstance(target, CodeArtifact):
        return target.all_files()
    return dict(target)


def _parse_rule_line(line: str, line_num: int) -> Rule:
    parts = line.split("\t")
    if len(parts) < 3:
        raise RuleParseError(f"第{line_num}行应为 KIND<TAB>ID<TAB>PAYLOAD[<TAB>MESSAGE]", line_number=line_num)
    kind_text, rule_id, payload = (p.strip() for p in parts[:3])
    message = parts[3].strip() if len(parts) > 3 else ""

    try:
        kind = RuleKind(kind_text)
    except ValueError:
        raise RuleParseError(f"第{line_num}行规则类型未知: {kind_text}", line_number=line_num)

    try:
        if kind in (RuleKind.PROMPT, RuleKind.ADVISORY):
            return Rule(id=rule_id, kind=kind, message=message or payload)
        if kind == RuleKind.LINT:
            return Rule(id=rule_id, kind=kind, pattern=payload, message=message or rule_id)
        remediation_text, _, rest = payload.partition(":")
        parameters = rest.split(":")
        return Rule(
            id=rule_id,
            kind=kind,
            remediation=RemediationKind(remediation_text),
            parameters=parameters,
            message=message or payload,
        )
    except (ValueError, ValidationError) as e:
        raise RuleParseError(f"第{line_num}行规则无效: {e}", line_number=line_num) from e


def parse_rules(text: str, source_path: Optional[str] = None) -> RuleSet:
    """解析规则文本，空行和 ``#`` 注释被跳过，顺序与文件一致"""
    rules: List[Rule] = []
    seen = set()
    for line_num, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        rule = _parse_rule_line(raw.rstrip("\r\n"), line_num)
        if rule.id in seen:
            raise RuleParseError(f"第{line_num}行规则 ID 重复: {rule.id}", line_number=line_num)
        seen.add(rule.id)
        rules.append(rule)
    return RuleSet(rules=rules, source_path=source_path)


def load_rules(path: Optional[Union[str, Path]] = None) -> RuleSet:
    """加载 Guidelines 文件，缺失的三条默认规则追加在末尾"""
    path = Path(path or settings.guidelines_path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise FileProcessingError(f"读取 Guidelines 失败: {e}", filename=str(path), operation="load_rules") from e

    ruleset = parse_rules(text, str(path))
    present = set(ruleset.ids())
    missing = [rule for rule in DEFAULT_RULES if rule.id not in present]
    if missing:
        logger.info(f"Guidelines 缺少默认规则，已追加: {', '.join(r.id for r in missing)}")
        ruleset = RuleSet(rules=ruleset.rules + missing, source_path=ruleset.source_path)
    return ruleset


def lint(target: FileSet, rules: RuleSet) -> List[Violation]:
    """逐行匹配 lint 规则，结果按 (文件, 行号, 规则 ID) 排序"""
    files = _as_files(target)
    compiled = [(rule, re.compile(rule.pattern)) for rule in rules.by_kind(RuleKind.LINT)]
    violations: List[Violation] = []
    for name, text in files.items():
        for line_num, line in enumerate(text.splitlines(), 1):
            for rule, pattern in compiled:
                if pattern.search(line):
                    violations.append(
                        Violation(rule_id=rule.id, file=name, line=line_num, message=rule.message, excerpt=line.strip())
                    )
    return sorted(violations, key=lambda v: (v.file, v.line, v.rule_id))


def collect_source_files(path: Union[str, Path], suffixes: Iterable[str] = (".py",)) -> Dict[str, str]:
    """读取文件或目录下的源码，键为相对路径"""
    root = Path(path)
    if not root.exists():
        raise FileProcessingError("路径不存在", filename=str(root), operation="collect_source_files")
    if root.is_file():
        return {root.name: root.read_text(encoding="utf-8")}
    suffixes = tuple(suffixes)
    files: Dict[str, str] = {}
    for file_path in sorted(root.rglob("*")):
        if file_path.is_file() and file_path.suffix in suffixes:
            files[file_path.relative_to(root).as_posix()] = file_path.read_text(encoding="utf-8")
    return files


def _word_pattern(identifier: str) -> re.Pattern:
    if not _IDENTIFIER.match(identifier):
        raise ConfigurationError(f"不是合法的标识符: {identifier!r}", config_key="identifier")
    return re.compile(r"\b" + re.escape(identifier) + r"\b")


def remediate_rename(target: FileSet, from_identifier: str, to_identifier: str) -> RenameResult:
    """整词重命名

    目标标识符已作为整词出现在任一文件中时报 RenameConflictError，不做任何修改。
    """
    source = _word_pattern(from_identifier)
    destination = _word_pattern(to_identifier)
    files = _as_files(target)
    if from_identifier == to_identifier:
        return RenameResult(files=files)

    for name, text in files.items():
        if destination.search(text):
            raise RenameConflictError(
                f"标识符 {to_identifier} 已存在于 {name}",
                identifier=to_identifier,
                filename=name,
            )

    renamed: Dict[str, str] = {}
    per_file: Dict[str, int] = {}
    for name, text in files.items():
        new_text, count = source.subn(to_identifier, text)
        renamed[name] = new_text
        if count:
            per_file[name] = count
    total = sum(per_file.values())
    logger.info(f"重命名 {from_identifier} → {to_identifier}: {total} 处, {len(per_file)} 个文件")
    return RenameResult(files=renamed, count=total, per_file=per_file)


def _declares(text: str, name: str) -> bool:
    pattern = re.compile(rf"^\s*(class|def)\s+{re.escape(name)}\b|^{re.escape(name)}\s*=", re.MULTILINE)
    return bool(pattern.search(text))


def inject_placeholder(
    target: FileSet,
    name: str,
    target_file: str,
    template: str = PLACEHOLDER_TEMPLATE,
) -> Dict[str, str]:
    """在 target_file 末尾追加空声明；名称已声明时原样返回并记录警告"""
    _word_pattern(name)
    files = _as_files(target)
    if target_file not in files:
        raise FileProcessingError("占位声明的目标文件不存在", filename=target_file, operation="inject_placeholder")
    if _declares(files[target_file], name):
        logger.warning(f"{target_file} 已声明 {name}，跳过占位注入")
        return files
    files[target_file] = files[target_file].rstrip("\n") + template.format(name=name)
    logger.info(f"已在 {target_file} 注入占位声明 {name}")
    return files


def apply_remediations(
    codebase_files: Dict[str, str],
    artifact_files: Dict[str, str],
    rules: RuleSet,
) -> Tuple[Dict[str, str], Dict[str, str], List[str]]:
    """依次执行 remediation 规则

    重命名同时作用于代码库快照与产物中出现源标识符的文件；代码库其余文件里已有的目标标识符
    不算冲突。占位声明只注入代码库。冲突或目标缺失时跳过该规则并记录说明。
    返回 (代码库文件, 产物文件, 说明)。
    """
    notes: List[str] = []
    for rule in rules.by_kind(RuleKind.REMEDIATION):
        first, second = rule.parameters
        try:
            if rule.remediation == RemediationKind.RENAME:
                source = _word_pattern(first)
                combined = {f"codebase/{k}": v for k, v in codebase_files.items()}
                combined.update({f"artifact/{k}": v for k, v in artifact_files.items()})
                touched = {k: v for k, v in combined.items() if source.search(v)}
                result = remediate_rename(touched, first, second)
                combined.update(result.files)
                codebase_files = {k[len("codebase/"):]: v for k, v in combined.items() if k.startswith("codebase/")}
                artifact_files = {k[len("artifact/"):]: v for k, v in combined.items() if k.startswith("artifact/")}
                notes.append(f"{rule.id}: {first} → {second}, {result.count} 处")
            else:
                codebase_files = inject_placeholder(codebase_files, first, second)
                notes.append(f"{rule.id}: 占位声明 {first} → {second}")
        except (RenameConflictError, FileProcessingError) as e:
            logger.warning(f"跳过修复规则 {rule.id}: {e.message}")
            notes.append(f"{rule.id}: 跳过（{e.message}）")
    return codebase_files, artifact_files, notes


def render_guidelines(rules: Union[RuleSet, Iterable[Rule]]) -> str:
    """把 prompt、advisory 与 lint 规则的文本渲染为编号列表"""
    items = rules.rules if isinstance(rules, RuleSet) else list(rules)
    messages = [r.message for r in items if r.is_prompt_text or r.kind == RuleKind.LINT]
    return "".join(f"{i}. {message}\n" for i, message in enumerate(messages, 1))
