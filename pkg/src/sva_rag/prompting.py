"""Assembly of the three-step assessment prompt and parsing of replies.

The prompt walks the model through analyzing retrieved demonstrations, then
the target, then predicting one of the four severity labels on a final
machine-readable ``SEVERITY: <LABEL>`` line.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources

from .errors import EmptyTargetError, TemplateInvalidError, UnparseableReplyError
from .models import CweInfo, KnowledgeEntry, NvdInfo, Severity

STEP_HEADERS = (
    "Analyze Demonstration Samples",
    "Target Vulnerability Analysis",
    "Severity Prediction",
)

PLACEHOLDERS = ("{{DEMONSTRATIONS}}", "{{TARGET_CODE}}", "{{TARGET_DESCRIPTION}}")

SYSTEM_TEXT = (
    "You are a security analyst assessing the severity of software "
    "vulnerabilities. Reason step by step as instructed and finish with a "
    "single severity label."
)

DEMO_HEADER_RE = re.compile(r"^Demonstration \d+:", re.MULTILINE)
_FINAL_LINE_RE = re.compile(r"^\s*SEVERITY:\s*(LOW|MEDIUM|HIGH|CRITICAL)\b", re.IGNORECASE)
_TOKEN_RE = re.compile(r"\b(LOW|MEDIUM|HIGH|CRITICAL)\b", re.IGNORECASE)


@dataclass(frozen=True)
class Demonstration:
    """One retrieved example rendered into the prompt."""

    cve_id: str
    code: str
    description: str
    severity: Severity
    nvd_summary: str = ""
    cwe_summary: str = ""

    def render(self, index: int) -> str:
        lines = [f"Demonstration {index}:", f"CVE id: {self.cve_id}"]
        if self.code:
            lines += ["Code:", self.code]
        lines += ["Description:", self.description]
        if self.nvd_summary:
            lines += ["CVSS metrics:", self.nvd_summary]
        if self.cwe_summary:
            lines += ["Weakness knowledge:", self.cwe_summary]
        lines.append(f"Ground-truth severity: {self.severity.label}")
        return "\n".join(lines)


@dataclass(frozen=True)
class AssembledPrompt:
    system_text: str
    user_text: str
    demo_count: int
    token_estimate: int
    context_token_estimate: int = 0


@dataclass(frozen=True)
class PromptTemplate:
    text: str
    name: str = "cot_v1"

    def __post_init__(self):
        for placeholder in PLACEHOLDERS:
            n = self.text.count(placeholder)
            if n != 1:
                raise TemplateInvalidError(
                    f"template {self.name!r} must contain {placeholder} exactly once, found {n}"
                )
        pos = -1
        for header in STEP_HEADERS:
            if self.text.count(header) != 1:
                raise TemplateInvalidError(
                    f"template {self.name!r} must contain step header {header!r} exactly once"
                )
            here = self.text.index(header)
            if here < pos:
                raise TemplateInvalidError(
                    f"template {self.name!r} has step header {header!r} out of order"
                )
            pos = here

    @classmethod
    def load(cls, path: str) -> "PromptTemplate":
        with open(path, encoding="utf-8") as fh:
            return cls(text=fh.read(), name=path)

    @classmethod
    def default(cls) -> "PromptTemplate":
        text = resources.files("sva_rag.templates").joinpath("cot_v1.txt").read_text("utf-8")
        return cls(text=text, name="cot_v1")


def render_nvd_summary(info: NvdInfo | None) -> str:
    if info is None:
        return ""
    parts = [
        f"CVSS v{info.cvss_version} base score {info.base_score:.1f}",
        f"vector {info.vector_string}" if info.vector_string else "",
        f"impact {info.impact_score:.1f}",
        f"exploitability {info.exploitability_score:.1f}",
    ]
    line = "; ".join(p for p in parts if p)
    if info.affected_cpes:
        # Cap the configuration list; some CVEs enumerate hundreds of CPEs.
        shown = ", ".join(info.affected_cpes[:5])
        more = len(info.affected_cpes) - 5
        line += f"\nAffected: {shown}" + (f" (+{more} more)" if more > 0 else "")
    return line


def render_cwe_summary(info: CweInfo | None) -> str:
    if info is None:
        return ""
    lines = [f"{info.cwe_id}: {info.name}"]
    if info.description:
        lines.append(info.description)
    if info.common_consequences:
        lines.append("Common consequences: " + " | ".join(info.common_consequences))
    return "\n".join(lines)


def demonstration_from_entry(entry: KnowledgeEntry) -> Demonstration:
    return Demonstration(
        cve_id=entry.record.cve_id,
        code=entry.record.code,
        description=entry.record.description,
        severity=entry.record.severity,
        nvd_summary=render_nvd_summary(entry.nvd),
        cwe_summary=render_cwe_summary(entry.cwe),
    )


def render_demonstrations(demos: list[Demonstration]) -> str:
    if not demos:
        return "(no demonstration samples available)"
    return "\n\n".join(demo.render(i) for i, demo in enumerate(demos, start=1))


def assemble_prompt(
    demos: list[Demonstration],
    target_code: str,
    target_description: str,
    template: PromptTemplate | None = None,
) -> AssembledPrompt:
    """Render the full user prompt. Deterministic for identical inputs."""
    if not target_description or not target_description.strip():
        raise EmptyTargetError("target description must be non-empty")
    template = template or PromptTemplate.default()
    demo_text = render_demonstrations(demos)
    substitutions = {
        "{{DEMONSTRATIONS}}": demo_text,
        "{{TARGET_CODE}}": target_code if target_code else "(no code sample available)",
        "{{TARGET_DESCRIPTION}}": target_description,
    }
    # Single-pass substitution so placeholder-looking text inside the data
    # can never be re-expanded.
    user_text = re.sub(
        r"\{\{(DEMONSTRATIONS|TARGET_CODE|TARGET_DESCRIPTION)\}\}",
        lambda m: substitutions[m.group(0)],
        template.text,
    )
    return AssembledPrompt(
        system_text=SYSTEM_TEXT,
        user_text=user_text,
        demo_count=len(demos),
        token_estimate=estimate_tokens(SYSTEM_TEXT) + estimate_tokens(user_text),
        context_token_estimate=estimate_tokens(demo_text) if demos else 0,
    )


def parse_severity(reply: str) -> Severity:
    """Last ``SEVERITY: <LABEL>`` line wins; otherwise the last standalone
    label token anywhere in the reply. No label at all is an error, never a
    default."""
    final = None
    for line in reply.splitlines():
        m = _FINAL_LINE_RE.match(line)
        if m:
            final = m.group(1)
    if final is not None:
        return Severity.from_label(final)
    tokens = _TOKEN_RE.findall(reply)
    if tokens:
        return Severity.from_label(tokens[-1])
    raise UnparseableReplyError(f"no severity label in reply: {reply[:120]!r}")


def estimate_tokens(text: str) -> int:
    """Crude provider-agnostic estimate: one token per four characters."""
    return math.ceil(len(text) / 4)
