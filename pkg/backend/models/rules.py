"""Guidelines 规则模型"""

import re
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class RuleKind(str, Enum):
    """规则类型枚举"""
    PROMPT = "prompt"
    ADVISORY = "advisory"
    LINT = "lint"
    REMEDIATION = "remediation"


class RemediationKind(str, Enum):
    """程序化修复类型枚举"""
    RENAME = "rename"
    PLACEHOLDER = "placeholder"


class Rule(BaseModel):
    """单条规则"""

    id: str = Field(..., min_length=1, description="规则 ID")
    kind: RuleKind = Field(..., description="规则类型")
    message: str = Field(..., description="注入提示词的规则文本")
    pattern: Optional[str] = Field(None, description="lint 正则表达式")
    remediation: Optional[RemediationKind] = Field(None, description="修复类型")
    parameters: List[str] = Field(default_factory=list, description="修复参数")

    @field_validator("pattern")
    @classmethod
    def _compile_pattern(cls, pattern: Optional[str]) -> Optional[str]:
        if pattern is not None:
            try:
                re.compile(pattern)
            except re.error as e:
                raise ValueError(f"lint 正则无法编译: {e}") from e
        return pattern

    @model_validator(mode="after")
    def _check_kind_payload(self) -> "Rule":
        if self.kind == RuleKind.LINT and not self.pattern:
            raise ValueError("lint 规则需要正则表达式")
        if self.kind == RuleKind.REMEDIATION:
            if self.remediation is None or len(self.parameters) != 2:
                raise ValueError("remediation 规则需要修复类型和两个参数")
        return self

    @property
    def advisory(self) -> bool:
        return self.kind == RuleKind.ADVISORY

    @property
    def is_prompt_text(self) -> bool:
        return self.kind in (RuleKind.PROMPT, RuleKind.ADVISORY)


class RuleSet(BaseModel):
    """有序规则集合"""

    rules: List[Rule] = Field(default_factory=list, description="按文件顺序排列的规则")
    source_path: Optional[str] = Field(None, description="来源文件")

    @field_validator("rules")
    @classmethod
    def _unique_ids(cls, rules: List[Rule]) -> List[Rule]:
        ids = [r.id for r in rules]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise ValueError(f"规则 ID 重复: {', '.join(duplicates)}")
        return rules

    def by_kind(self, kind: RuleKind) -> List[Rule]:
        return [r for r in self.rules if r.kind == kind]

    def ids(self) -> List[str]:
        return [r.id for r in self.rules]


class Violation(BaseModel):
    """lint 违规"""

    rule_id: str = Field(..., description="规则 ID")
    file: str = Field(..., description="文件名")
    line: int = Field(..., ge=1, description="行号")
    message: str = Field(default="", description="规则文本")
    excerpt: str = Field(default="", description="违规行内容")


class RenameResult(BaseModel):
    """重命名修复结果"""

    files: Dict[str, str] = Field(default_factory=dict, description="修改后的文件内容")
    count: int = Field(default=0, ge=0, description="替换次数")
    per_file: Dict[str, int] = Field(default_factory=dict, description="每个文件的替换次数")
