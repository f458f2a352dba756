"""Dataset ingestion, entry normalization, and the on-disk knowledge store.

The input dataset is JSONL with fields ``cve_id``, ``code``, ``description``
and ``severity`` (uppercase label). The knowledge store is JSONL of
:class:`~sva_rag.models.KnowledgeEntry` objects by default; a directory of
pretty-printed per-entry JSON files is available behind a flag for easier
manual inspection.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import EmptyDatasetError, SvaError, ValidationError
from .models import CweInfo, KnowledgeEntry, NvdInfo, VulnerabilityRecord

logger = logging.getLogger(__name__)

STORE_FORMAT_JSONL = "jsonl"
STORE_FORMAT_DIR = "dir"


@dataclass
class MalformedLine:
    """One rejected input line: where it was and why it was rejected."""

    line_no: int
    reason: str


@dataclass
class IngestResult:
    """All parseable records in file order plus the rejection report."""

    records: list[VulnerabilityRecord]
    errors: list[MalformedLine]
    path: str

    @property
    def ok_count(self) -> int:
        return len(self.records)

    @property
    def error_count(self) -> int:
        return len(self.errors)


def ingest_dataset(path: str | Path, fmt: str = "jsonl") -> IngestResult:
    """Read a JSONL dataset, collecting malformed lines instead of dropping them.

    Raises ``FileNotFoundError`` if the file is missing and
    :class:`EmptyDatasetError` if no line yields a valid record.
    Blank lines are skipped without comment.
    """
    if fmt != "jsonl":
        raise ValidationError(f"unsupported dataset format: {fmt!r}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    records: list[VulnerabilityRecord] = []
    errors: list[MalformedLine] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(MalformedLine(line_no, f"invalid JSON: {exc.msg}"))
                continue
            if not isinstance(payload, dict):
                errors.append(MalformedLine(line_no, "line is not a JSON object"))
                continue
            try:
                records.append(VulnerabilityRecord.from_dict(payload))
            except ValidationError as exc:
                errors.append(MalformedLine(line_no, str(exc)))
    if not records:
        raise EmptyDatasetError(f"no valid records in {path}")
    logger.info(
        "ingested %s: %d records, %d malformed lines", path, len(records), len(errors)
    )
    return IngestResult(records=records, errors=errors, path=str(path))


def normalize_entry(
    record: VulnerabilityRecord,
    nvd: NvdInfo | None = None,
    cwe: CweInfo | None = None,
) -> KnowledgeEntry:
    """Fold a record and whatever enrichments exist into one knowledge entry."""
    return KnowledgeEntry(record=record, nvd=nvd, cwe=cwe)


@dataclass
class KnowledgeStore:
    """An in-memory list of knowledge entries with JSONL/directory persistence.

    Writes go through a single writer (this object); once built, concurrent
    readers are safe because entries are never mutated in place by readers.
    """

    entries: list[KnowledgeEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[KnowledgeEntry]:
        return iter(self.entries)

    def append(self, entry: KnowledgeEntry) -> None:
        self.entries.append(entry)

    def extend(self, entries: Iterable[KnowledgeEntry]) -> None:
        self.entries.extend(entries)

    def ids(self) -> set[str]:
        return {e.cve_id for e in self.entries}

    @property
    def provider_id(self) -> str | None:
        """The single provider id shared by all embedded entries, if any."""
        ids = {e.provider_id for e in self.entries if e.provider_id}
        if len(ids) > 1:
            raise ValidationError(f"store mixes embedding providers: {sorted(ids)}")
        return next(iter(ids), None)

    @property
    def embedded(self) -> bool:
        return bool(self.entries) and all(e.embedded for e in self.entries)

    @classmethod
    def from_records(cls, records: Iterable[VulnerabilityRecord]) -> KnowledgeStore:
        return cls([normalize_entry(r) for r in records])

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path, fmt: str = STORE_FORMAT_JSONL) -> None:
        path = Path(path)
        if fmt == STORE_FORMAT_JSONL:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", encoding="utf-8") as fh:
                for entry in self.entries:
                    fh.write(json.dumps(entry.to_dict(), ensure_ascii=False) + "\n")
        elif fmt == STORE_FORMAT_DIR:
            path.mkdir(parents=True, exist_ok=True)
            seen: dict[str, int] = {}
            for entry in self.entries:
                n = seen.get(entry.cve_id, 0)
                seen[entry.cve_id] = n + 1
                name = entry.cve_id if n == 0 else f"{entry.cve_id}_{n}"
                (path / f"{name}.json").write_text(
                    json.dumps(entry.to_dict(), indent=2, ensure_ascii=False) + "\n",
                    encoding="utf-8",
                )
        else:
            raise ValidationError(f"unknown store format: {fmt!r}")
        logger.info("wrote %d entries to %s (%s)", len(self.entries), path, fmt)

    @classmethod
    def load(cls, path: str | Path) -> KnowledgeStore:
        """Load a store from a JSONL file or a directory of JSON files."""
        path = Path(path)
        if path.is_dir():
            entries = [
                KnowledgeEntry.from_dict(json.loads(p.read_text(encoding="utf-8")))
                for p in sorted(path.glob("*.json"))
            ]
        elif path.is_file():
            entries = []
            with path.open("r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        entries.append(KnowledgeEntry.from_dict(json.loads(line)))
                    except (json.JSONDecodeError, ValidationError, KeyError) as exc:
                        raise SvaError(f"{path}:{line_no}: bad store entry: {exc}") from exc
        else:
            raise FileNotFoundError(f"knowledge store not found: {path}")
        return cls(entries)


@dataclass
class EnrichmentSummary:
    """Counts from one enrichment pass over a store."""

    nvd_added: int = 0
    nvd_absent: int = 0
    cwe_added: int = 0
    failures: list[str] = field(default_factory=list)


def enrich_store(store: KnowledgeStore, nvd_client, cwe_client) -> EnrichmentSummary:
    """Fill in missing NVD and CWE sections, entry by entry.

    Entries that already carry a section are left untouched, which makes the
    pass idempotent against an unchanged data source. Per-entry failures are
    collected, not fatal; the CWE id for an entry comes from the NVD record's
    weakness listing.
    """
    summary = EnrichmentSummary()
    for entry in store:
        cwe_ids: list[str] = []
        if entry.nvd is None:
            try:
                result = nvd_client.fetch_with_weaknesses(entry.cve_id)
            except SvaError as exc:
                summary.failures.append(f"{entry.cve_id}: nvd: {exc}")
                continue
            if result.info is None:
                summary.nvd_absent += 1
            else:
                entry.nvd = result.info
                summary.nvd_added += 1
            cwe_ids = result.cwe_ids
        if entry.cwe is None and cwe_ids:
            try:
                entry.cwe = cwe_client.fetch(cwe_ids[0])
                summary.cwe_added += 1
            except SvaError as exc:
                summary.failures.append(f"{entry.cve_id}: cwe {cwe_ids[0]}: {exc}")
    return summary
