"""Shared fixtures: synthetic corpora and tiny local HTTP fixture servers."""

from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import pytest

from sva_rag.embedding import FallbackEmbedder
from sva_rag.knowledge_base import KnowledgeStore
from sva_rag.models import SEVERITY_ORDER, Severity, VulnerabilityRecord
from sva_rag.pipeline import embed_store

# (theme, cwe id, code fragment) pools for synthetic but plausible records.
WEAKNESS_KINDS = [
    ("out-of-bounds write in the packet parser", "CWE-787", "memcpy(dst, src, pkt->len);"),
    ("use after free when the session closes", "CWE-416", "free(sess); return sess->id;"),
    ("sql injection in the search endpoint", "CWE-89", 'q = "SELECT * FROM t WHERE id=" + arg'),
    ("cross-site scripting in the comment form", "CWE-79", "el.innerHTML = params.get('q');"),
    ("integer overflow when sizing the buffer", "CWE-190", "size_t n = a * b; buf = malloc(n);"),
    ("path traversal in the download handler", "CWE-22", "open(base_dir + req.filename)"),
    ("null pointer dereference on malformed input", "CWE-476", "hdr = parse(buf); use(hdr->ver);"),
    ("improper certificate validation", "CWE-295", "ctx.check_hostname = False"),
]

PRODUCTS = ["libfoo", "barserver", "quuxd", "webgate", "parselib", "netkit", "storaged", "authsvc"]


def make_record(i: int, severity: Severity, rng: random.Random) -> VulnerabilityRecord:
    theme, _cwe_id, code_core = WEAKNESS_KINDS[rng.randrange(len(WEAKNESS_KINDS))]
    product = PRODUCTS[rng.randrange(len(PRODUCTS))]
    version = f"{rng.randrange(1, 9)}.{rng.randrange(0, 20)}"
    code = f"int handler_{i}(req_t *req) {{\n    {code_core}\n    return {i % 7};\n}}"
    description = (
        f"A {theme} was found in {product} before {version}. "
        f"A remote attacker could send crafted input to trigger it (sample {i})."
    )
    return VulnerabilityRecord(
        cve_id=f"CVE-{2015 + i % 10}-{10000 + i}",
        code=code,
        description=description,
        severity=severity,
    )


def make_records(
    n: int = 50,
    seed: int = 0,
    class_counts: dict[Severity, int] | None = None,
) -> list[VulnerabilityRecord]:
    """Synthetic corpus covering all four classes.

    class_counts pins exact per-class sizes; otherwise classes are drawn
    round-robin so every class is always present.
    """
    rng = random.Random(seed)
    severities: list[Severity] = []
    if class_counts is not None:
        for severity, count in class_counts.items():
            severities.extend([severity] * count)
    else:
        severities = [SEVERITY_ORDER[i % 4] for i in range(n)]
    return [make_record(i, severity, rng) for i, severity in enumerate(severities)]


def write_jsonl(path, records) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict()) + "\n")
    return str(path)


@pytest.fixture()
def corpus_50():
    return make_records(50, seed=7)


@pytest.fixture()
def embedder():
    return FallbackEmbedder(code_dimension=64, desc_dimension=64, seed=0)


@pytest.fixture()
def embedded_store(corpus_50, embedder):
    store = KnowledgeStore.from_records(corpus_50)
    embed_store(store, embedder)
    return store


class _FixtureHandler(BaseHTTPRequestHandler):
    """Serves canned JSON keyed by (path, sorted query) from server.routes."""

    def do_POST(self):  # noqa: N802 (BaseHTTPRequestHandler API)
        length = int(self.headers.get("Content-Length") or 0)
        self.rfile.read(length)
        self.do_GET()

    def do_GET(self):  # noqa: N802 (BaseHTTPRequestHandler API)
        parsed = urlparse(self.path)
        query = parse_qs(parsed.query)
        key = (parsed.path, tuple(sorted((k, tuple(v)) for k, v in query.items())))
        self.server.request_log.append(key)
        route = self.server.routes.get(key) or self.server.routes.get((parsed.path, ()))
        if route is None:
            self.send_response(404)
            self.end_headers()
            return
        status, body = route
        payload = body if isinstance(body, (bytes, str)) else json.dumps(body)
        if isinstance(payload, str):
            payload = payload.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):  # silence stderr noise
        pass


class FixtureServer:
    """A local HTTP server that replays canned responses for client tests."""

    def __init__(self):
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _FixtureHandler)
        self._httpd.routes = {}
        self._httpd.request_log = []
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    @property
    def request_log(self):
        return self._httpd.request_log

    def route(self, path: str, body, status: int = 200, query: dict | None = None) -> None:
        key = (path, tuple(sorted((k, (v,)) for k, v in (query or {}).items())))
        self._httpd.routes[key] = (status, body)

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture()
def fixture_server():
    server = FixtureServer()
    yield server
    server.close()


def nvd_payload(cve_id: str, base_score: float = 8.1, cwe_id: str = "CWE-416") -> dict:
    """A trimmed NVD CVE API 2.0 response with both Primary and Secondary
    CVSS v3.1 metrics."""
    return {
        "resultsPerPage": 1,
        "vulnerabilities": [
            {
                "cve": {
                    "id": cve_id,
                    "metrics": {
                        "cvssMetricV31": [
                            {
                                "source": "secondary@example.org",
                                "type": "Secondary",
                                "cvssData": {
                                    "version": "3.1",
                                    "vectorString": "CVSS:3.1/AV:L/AC:H/PR:H/UI:R/S:U/C:L/I:L/A:L",
                                    "baseScore": 4.2,
                                },
                                "exploitabilityScore": 0.5,
                                "impactScore": 3.4,
                            },
                            {
                                "source": "nvd@nist.gov",
                                "type": "Primary",
                                "cvssData": {
                                    "version": "3.1",
                                    "vectorString": "CVSS:3.1/AV:N/AC:L/PR:N/UI:R/S:U/C:H/I:H/A:H",
                                    "baseScore": base_score,
                                },
                                "exploitabilityScore": 2.8,
                                "impactScore": 5.9,
                            },
                        ]
                    },
                    "weaknesses": [
                        {
                            "source": "nvd@nist.gov",
                            "type": "Primary",
                            "description": [{"lang": "en", "value": cwe_id}],
                        }
                    ],
                    "configurations": [
                        {
                            "nodes": [
                                {
                                    "operator": "OR",
                                    "cpeMatch": [
                                        {
                                            "vulnerable": True,
                                            "criteria": "cpe:2.3:a:vendor:product:1.0:*:*:*:*:*:*:*",
                                        }
                                    ],
                                }
                            ]
                        }
                    ],
                }
            }
        ],
    }


def cwe_payload(cwe_id: str = "CWE-416") -> dict:
    return {
        "Weaknesses": [
            {
                "ID": cwe_id.split("-")[1],
                "Name": "Use After Free",
                "Description": "Referencing memory after it has been freed.",
                "ExtendedDescription": "The memory may be reallocated and overwritten.",
                "CommonConsequences": [
                    {"Scope": ["Integrity"], "Impact": ["Execute Unauthorized Code or Commands"]},
                    {"Scope": ["Availability"], "Impact": ["DoS: Crash, Exit, or Restart"]},
                ],
            }
        ]
    }
