"""CWE client: payload parsing, caching, and unknown-id handling."""

import pytest

from sva_rag.cwe import CweClient, enrich_with_cwe
from sva_rag.errors import NetworkError, ParseError, UnknownCweError

from conftest import cwe_payload, make_records


def test_fetch_parses_weakness(fixture_server):
    fixture_server.route("/cwe/weakness/416", cwe_payload("CWE-416"))
    info = CweClient(base_url=fixture_server.base_url).fetch("CWE-416")
    assert info.cwe_id == "CWE-416"
    assert info.name == "Use After Free"
    assert "freed" in info.description
    assert info.extended_description
    assert info.common_consequences == [
        "Integrity; impact: Execute Unauthorized Code or Commands",
        "Availability; impact: DoS: Crash, Exit, or Restart",
    ]


def test_fetch_caches_by_id(fixture_server):
    fixture_server.route("/cwe/weakness/79", cwe_payload("CWE-79"))
    client = CweClient(base_url=fixture_server.base_url)
    first = client.fetch("CWE-79")
    second = client.fetch("CWE-79")
    assert first is second
    hits = [k for k in fixture_server.request_log if k[0] == "/cwe/weakness/79"]
    assert len(hits) == 1


def test_fetch_unknown_id(fixture_server):
    with pytest.raises(UnknownCweError):
        CweClient(base_url=fixture_server.base_url).fetch("CWE-99999")
    with pytest.raises(UnknownCweError):
        CweClient(base_url=fixture_server.base_url).fetch("not-a-cwe")


def test_fetch_empty_record_is_unknown(fixture_server):
    fixture_server.route("/cwe/weakness/1", {"Weaknesses": []})
    with pytest.raises(UnknownCweError):
        CweClient(base_url=fixture_server.base_url).fetch("CWE-1")


def test_fetch_missing_name_raises_parse_error(fixture_server):
    fixture_server.route("/cwe/weakness/2", {"Weaknesses": [{"Description": "x"}]})
    with pytest.raises(ParseError):
        CweClient(base_url=fixture_server.base_url).fetch("CWE-2")


def test_fetch_server_error(fixture_server):
    fixture_server.route("/cwe/weakness/3", {}, status=500)
    with pytest.raises(NetworkError):
        CweClient(base_url=fixture_server.base_url).fetch("CWE-3")


def test_string_consequences_pass_through(fixture_server):
    payload = cwe_payload("CWE-20")
    payload["Weaknesses"][0]["CommonConsequences"] = ["already rendered"]
    fixture_server.route("/cwe/weakness/20", payload)
    info = CweClient(base_url=fixture_server.base_url).fetch("CWE-20")
    assert info.common_consequences == ["already rendered"]


def test_enrich_with_cwe_delegates(fixture_server):
    fixture_server.route("/cwe/weakness/416", cwe_payload("CWE-416"))
    record = make_records(1, seed=0)[0]
    client = CweClient(base_url=fixture_server.base_url)
    info = enrich_with_cwe(record, client, "CWE-416")
    assert info.name == "Use After Free"
