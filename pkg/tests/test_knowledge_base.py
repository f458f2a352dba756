"""Ingestion, store persistence, and enrichment plumbing."""

import json

import pytest

from sva_rag.errors import EmptyDatasetError, SvaError, ValidationError
from sva_rag.knowledge_base import (
    KnowledgeStore,
    enrich_store,
    ingest_dataset,
    normalize_entry,
)
from sva_rag.models import CweInfo, NvdInfo, Severity, VulnerabilityRecord
from sva_rag.nvd import NvdFetchResult

from conftest import make_records


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return str(path)


def test_ingest_valid_jsonl(tmp_path):
    records = make_records(8, seed=1)
    path = _write_lines(
        tmp_path / "data.jsonl", [json.dumps(r.to_dict()) for r in records]
    )
    result = ingest_dataset(path)
    assert result.ok_count == 8
    assert result.error_count == 0
    assert [r.cve_id for r in result.records] == [r.cve_id for r in records]


def test_ingest_collects_malformed_lines(tmp_path):
    good = make_records(3, seed=2)
    lines = [
        json.dumps(good[0].to_dict()),
        "{not json",
        json.dumps({"cve_id": "CVE-2020-1", "description": "bad id", "severity": "LOW"}),
        "",  # blank lines are skipped, not errors
        json.dumps({"cve_id": "CVE-2020-10001", "code": "x"}),  # missing fields
        json.dumps(good[1].to_dict()),
        json.dumps({**good[2].to_dict(), "severity": "EXTREME"}),
    ]
    result = ingest_dataset(_write_lines(tmp_path / "data.jsonl", lines))
    assert result.ok_count == 2
    assert result.error_count == 4
    assert [e.line_no for e in result.errors] == [2, 3, 5, 7]
    assert all(e.reason for e in result.errors)


def test_ingest_empty_dataset_rejected(tmp_path):
    with pytest.raises(EmptyDatasetError):
        ingest_dataset(_write_lines(tmp_path / "data.jsonl", ["", "   "]))
    with pytest.raises(FileNotFoundError):
        ingest_dataset(str(tmp_path / "missing.jsonl"))


def test_normalize_entry_wraps_record():
    record = make_records(1, seed=3)[0]
    entry = normalize_entry(record)
    assert entry.record is record
    assert entry.nvd is None and entry.cwe is None
    assert not entry.embedded


def test_store_round_trip_jsonl(tmp_path):
    store = KnowledgeStore.from_records(make_records(6, seed=4))
    path = tmp_path / "store.jsonl"
    store.save(path)
    loaded = KnowledgeStore.load(path)
    assert len(loaded) == 6
    assert loaded.ids() == store.ids()
    assert [e.record for e in loaded] == [e.record for e in store]


def test_store_round_trip_dir(tmp_path):
    store = KnowledgeStore.from_records(make_records(5, seed=5))
    out = tmp_path / "store_dir"
    store.save(out, fmt="dir")
    files = sorted(p.name for p in out.glob("*.json"))
    assert len(files) == 5
    loaded = KnowledgeStore.load(out)
    assert loaded.ids() == store.ids()


def test_store_load_rejects_bad_line(tmp_path):
    path = tmp_path / "store.jsonl"
    path.write_text('{"record": {"cve_id": "nope"}}\n', encoding="utf-8")
    with pytest.raises(SvaError):
        KnowledgeStore.load(path)


def test_store_provider_id_consistency():
    store = KnowledgeStore.from_records(make_records(2, seed=6))
    assert store.provider_id is None
    store.entries[0].provider_id = "p1"
    store.entries[1].provider_id = "p1"
    assert store.provider_id == "p1"
    store.entries[1].provider_id = "p2"
    with pytest.raises(ValidationError):
        store.provider_id


class _FakeNvd:
    def __init__(self, absent=frozenset(), fail=frozenset()):
        self.absent = absent
        self.fail = fail
        self.calls = []

    def fetch_with_weaknesses(self, cve_id):
        self.calls.append(cve_id)
        if cve_id in self.fail:
            raise SvaError(f"boom for {cve_id}")
        if cve_id in self.absent:
            return NvdFetchResult(info=None)
        info = NvdInfo(
            cvss_version="3.1",
            vector_string="CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H",
            base_score=9.8,
            impact_score=5.9,
            exploitability_score=3.9,
        )
        return NvdFetchResult(info=info, cwe_ids=["CWE-416", "CWE-787"])


class _FakeCwe:
    def __init__(self):
        self.calls = []

    def fetch(self, cwe_id):
        self.calls.append(cwe_id)
        return CweInfo(cwe_id=cwe_id, name="Use After Free", description="UAF.")


def test_enrich_store_fills_missing_sections():
    store = KnowledgeStore.from_records(make_records(4, seed=7))
    absent_id = store.entries[1].cve_id
    nvd, cwe = _FakeNvd(absent={absent_id}), _FakeCwe()
    summary = enrich_store(store, nvd, cwe)
    assert summary.nvd_added == 3
    assert summary.nvd_absent == 1
    assert summary.cwe_added == 3
    # First listed weakness id wins.
    assert set(cwe.calls) == {"CWE-416"}
    for entry in store:
        if entry.cve_id == absent_id:
            assert entry.nvd is None
        else:
            assert entry.nvd.base_score == 9.8
            assert entry.cwe.name == "Use After Free"


def test_enrich_store_is_idempotent():
    store = KnowledgeStore.from_records(make_records(3, seed=8))
    first = _FakeNvd()
    enrich_store(store, first, _FakeCwe())
    second = _FakeNvd()
    summary = enrich_store(store, second, _FakeCwe())
    assert second.calls == []  # already-enriched entries are not re-fetched
    assert summary.nvd_added == 0 and summary.cwe_added == 0


def test_enrich_store_records_failures_and_continues():
    store = KnowledgeStore.from_records(make_records(3, seed=9))
    failing = store.entries[0].cve_id
    summary = enrich_store(store, _FakeNvd(fail={failing}), _FakeCwe())
    assert summary.nvd_added == 2
    assert len(summary.failures) == 1
    assert failing in summary.failures[0]


def test_duplicate_ids_get_distinct_files(tmp_path):
    record = make_records(1, seed=10)[0]
    store = KnowledgeStore.from_records([record, record])
    out = tmp_path / "dup_dir"
    store.save(out, fmt="dir")
    assert len(list(out.glob("*.json"))) == 2
