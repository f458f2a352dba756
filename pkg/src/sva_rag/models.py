"""Domain types: severity levels, CVE records, enrichment data, knowledge entries.

Every type serializes to plain JSON-compatible dicts via ``to_dict`` and back
via ``from_dict``; the round trip is lossless (``from_dict(to_dict(x)) == x``).
Missing optional sections serialize as explicit ``null``, never omitted keys.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Any

from .embedding import EmbeddingVector, Modality
from .errors import OutOfRangeError, ValidationError

CVE_ID_RE = re.compile(r"^CVE-\d{4}-\d{4,}$")
CWE_ID_RE = re.compile(r"^CWE-\d+$")


class Severity(enum.IntEnum):
    """The four CVSS v3 qualitative severity levels, totally ordered."""

    LOW = 1
    MEDIUM = 2
    HIGH = 3
    CRITICAL = 4

    @classmethod
    def from_label(cls, label: str) -> Severity:
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValidationError(f"unknown severity label: {label!r}") from None

    @property
    def label(self) -> str:
        return self.name


#: Severity classes in ascending order; fixes the confusion-matrix axis order.
SEVERITY_ORDER: tuple[Severity, ...] = (
    Severity.LOW,
    Severity.MEDIUM,
    Severity.HIGH,
    Severity.CRITICAL,
)


def severity_from_score(base_score: float) -> Severity:
    """Map a CVSS v3 base score onto the four severity bands.

    Bands: LOW 0.1-3.9, MEDIUM 4.0-6.9, HIGH 7.0-8.9, CRITICAL 9.0-10.0.
    Score 0.0 is the standard's "None" rating, which has no place in the
    four-level scheme and is rejected along with anything outside [0.1, 10.0].
    """
    if not isinstance(base_score, (int, float)) or not math.isfinite(base_score):
        raise OutOfRangeError(f"base score must be a finite number, got {base_score!r}")
    if not 0.1 <= base_score <= 10.0:
        raise OutOfRangeError(f"base score {base_score} outside [0.1, 10.0]")
    if base_score < 4.0:
        return Severity.LOW
    if base_score < 7.0:
        return Severity.MEDIUM
    if base_score < 9.0:
        return Severity.HIGH
    return Severity.CRITICAL


@dataclass
class VulnerabilityRecord:
    """One CVE instance: id, vulnerable code snippet, description, label.

    ``code`` may be empty; such records are description-only and retrieval
    scores their code similarity as 0 rather than erroring.
    """

    cve_id: str
    code: str
    description: str
    severity: Severity

    def __post_init__(self):
        if not CVE_ID_RE.match(self.cve_id):
            raise ValidationError(f"invalid CVE id: {self.cve_id!r}")
        if not self.description.strip():
            raise ValidationError(f"{self.cve_id}: description must be non-empty")
        if not isinstance(self.severity, Severity):
            self.severity = Severity.from_label(str(self.severity))

    @property
    def description_only(self) -> bool:
        return not self.code.strip()

    def to_dict(self) -> dict[str, Any]:
        return {
            "cve_id": self.cve_id,
            "code": self.code,
            "description": self.description,
            "severity": self.severity.label,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> VulnerabilityRecord:
        try:
            return cls(
                cve_id=data["cve_id"],
                code=data.get("code") or "",
                description=data["description"],
                severity=Severity.from_label(data["severity"]),
            )
        except KeyError as exc:
            raise ValidationError(f"record missing field {exc}") from None


@dataclass
class NvdInfo:
    """CVSS v3 metrics and affected configurations pulled from the NVD."""

    cvss_version: str
    vector_string: str
    base_score: float
    impact_score: float
    exploitability_score: float
    affected_cpes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.base_score <= 10.0:
            raise ValidationError(f"base_score {self.base_score} outside [0.0, 10.0]")
        if self.impact_score < 0 or self.exploitability_score < 0:
            raise ValidationError("impact and exploitability scores must be >= 0")
        if self.vector_string and not self.vector_string.startswith("CVSS:3"):
            raise ValidationError(
                f"vector_string must be CVSS v3: {self.vector_string!r}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "cvss_version": self.cvss_version,
            "vector_string": self.vector_string,
            "base_score": self.base_score,
            "impact_score": self.impact_score,
            "exploitability_score": self.exploitability_score,
            "affected_cpes": list(self.affected_cpes),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> NvdInfo:
        return cls(
            cvss_version=data["cvss_version"],
            vector_string=data["vector_string"],
            base_score=float(data["base_score"]),
            impact_score=float(data["impact_score"]),
            exploitability_score=float(data["exploitability_score"]),
            affected_cpes=list(data.get("affected_cpes") or []),
        )


@dataclass
class CweInfo:
    """Weakness-class knowledge for one CWE id."""

    cwe_id: str
    name: str
    description: str
    extended_description: str = ""
    common_consequences: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not CWE_ID_RE.match(self.cwe_id):
            raise ValidationError(f"invalid CWE id: {self.cwe_id!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "cwe_id": self.cwe_id,
            "name": self.name,
            "description": self.description,
            "extended_description": self.extended_description,
            "common_consequences": list(self.common_consequences),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CweInfo:
        return cls(
            cwe_id=data["cwe_id"],
            name=data["name"],
            description=data["description"],
            extended_description=data.get("extended_description") or "",
            common_consequences=list(data.get("common_consequences") or []),
        )


@dataclass
class KnowledgeEntry:
    """A record plus its enrichments and embeddings; the unit stored on disk.

    When both embeddings are present they come from one provider
    configuration, identified by ``provider_id``.
    """

    record: VulnerabilityRecord
    nvd: NvdInfo | None = None
    cwe: CweInfo | None = None
    code_embedding: EmbeddingVector | None = None
    desc_embedding: EmbeddingVector | None = None
    provider_id: str | None = None

    def __post_init__(self):
        if self.code_embedding is not None and self.code_embedding.modality is not Modality.CODE:
            raise ValidationError("code_embedding must have code modality")
        if self.desc_embedding is not None and self.desc_embedding.modality is not Modality.DESCRIPTION:
            raise ValidationError("desc_embedding must have description modality")
        has_vectors = self.code_embedding is not None or self.desc_embedding is not None
        if has_vectors and not self.provider_id:
            raise ValidationError(
                f"{self.record.cve_id}: embedded entries must record provider_id"
            )

    @property
    def cve_id(self) -> str:
        return self.record.cve_id

    @property
    def embedded(self) -> bool:
        """True once the entry carries every embedding it can carry.

        Description-only records never get a code embedding.
        """
        if self.desc_embedding is None:
            return False
        return self.record.description_only or self.code_embedding is not None

    def to_dict(self) -> dict[str, Any]:
        return {
            "record": self.record.to_dict(),
            "nvd": self.nvd.to_dict() if self.nvd else None,
            "cwe": self.cwe.to_dict() if self.cwe else None,
            "code_embedding": list(self.code_embedding.values) if self.code_embedding else None,
            "desc_embedding": list(self.desc_embedding.values) if self.desc_embedding else None,
            "provider_id": self.provider_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> KnowledgeEntry:
        code_vals = data.get("code_embedding")
        desc_vals = data.get("desc_embedding")
        return cls(
            record=VulnerabilityRecord.from_dict(data["record"]),
            nvd=NvdInfo.from_dict(data["nvd"]) if data.get("nvd") else None,
            cwe=CweInfo.from_dict(data["cwe"]) if data.get("cwe") else None,
            code_embedding=EmbeddingVector(code_vals, Modality.CODE) if code_vals else None,
            desc_embedding=EmbeddingVector(desc_vals, Modality.DESCRIPTION) if desc_vals else None,
            provider_id=data.get("provider_id"),
        )
