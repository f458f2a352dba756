"""NVD REST client: CVSS v3 metrics per CVE, with rate limiting and retries.

Talks to the NVD CVE API 2.0 (``/rest/json/cves/2.0?cveId=...``). The base
URL is configurable (``SVA_NVD_BASE_URL``) so tests can replay captured
responses from a local fixture server; hitting the real service is an
explicit opt-in at the CLI level.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass, field

import requests

from .errors import NetworkError, ParseError, RateLimitedError
from .models import CWE_ID_RE, NvdInfo, VulnerabilityRecord

logger = logging.getLogger(__name__)

DEFAULT_NVD_BASE_URL = "https://services.nvd.nist.gov/rest/json/cves/2.0"
ENV_NVD_BASE_URL = "SVA_NVD_BASE_URL"
ENV_NVD_API_KEY = "SVA_NVD_API_KEY"

#: Public-API etiquette: at most one request every 1.2 seconds by default.
DEFAULT_MIN_INTERVAL = 1.2


class TokenBucket:
    """Thread-safe token bucket; ``acquire`` blocks until a token is free."""

    def __init__(self, rate: float, capacity: int = 1, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self._rate = rate
        self._capacity = capacity
        self._tokens = float(capacity)
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(
                    self._capacity, self._tokens + (now - self._last) * self._rate
                )
                self._last = now
                # Tiny epsilon so a wait computed from this very formula
                # cannot land a hair short and force a second micro-sleep.
                if self._tokens >= 1.0 - 1e-9:
                    self._tokens = max(0.0, self._tokens - 1.0)
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)


@dataclass
class NvdFetchResult:
    """Parsed CVSS info (None when the CVE is absent) plus its CWE ids."""

    info: NvdInfo | None
    cwe_ids: list[str] = field(default_factory=list)


class NvdClient:
    """Fetch and parse per-CVE CVSS v3 data.

    A ``requests.Session``-like object may be injected for testing; the rate
    limiter is shared across threads when enrichment runs concurrently.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        session=None,
        rate_limiter: TokenBucket | None = None,
        timeout: float = 30.0,
        max_retries: int = 3,
        sleep=time.sleep,
    ):
        self._base_url = (base_url or os.environ.get(ENV_NVD_BASE_URL) or DEFAULT_NVD_BASE_URL).rstrip("/")
        self._api_key = api_key if api_key is not None else os.environ.get(ENV_NVD_API_KEY, "")
        self._session = session or requests.Session()
        self._limiter = rate_limiter or TokenBucket(rate=1.0 / DEFAULT_MIN_INTERVAL)
        self._timeout = timeout
        self._max_retries = max_retries
        self._sleep = sleep

    def fetch(self, cve_id: str) -> NvdInfo | None:
        """CVSS v3 info for one CVE; None when the NVD has no usable entry."""
        return self.fetch_with_weaknesses(cve_id).info

    def fetch_with_weaknesses(self, cve_id: str) -> NvdFetchResult:
        """Like :meth:`fetch` but also returns the CWE ids the NVD lists,
        which drive CWE enrichment downstream."""
        body = self._get(cve_id)
        if body is None:
            return NvdFetchResult(info=None)
        return self._parse(cve_id, body)

    def _get(self, cve_id: str) -> dict | None:
        headers = {"apiKey": self._api_key} if self._api_key else {}
        attempt = 0
        while True:
            self._limiter.acquire()
            try:
                resp = self._session.get(
                    self._base_url,
                    params={"cveId": cve_id},
                    headers=headers,
                    timeout=self._timeout,
                )
            except requests.RequestException as exc:
                if attempt >= self._max_retries:
                    raise NetworkError(f"NVD request for {cve_id} failed: {exc}") from exc
                attempt += 1
                self._sleep(min(2.0**attempt, 30.0))
                continue
            if resp.status_code == 404:
                return None
            if resp.status_code == 429:
                retry_after = _parse_retry_after(resp.headers.get("Retry-After"))
                if attempt >= self._max_retries:
                    raise RateLimitedError(
                        f"NVD rate limit persisted for {cve_id}", retry_after=retry_after
                    )
                attempt += 1
                self._sleep(retry_after if retry_after is not None else min(2.0**attempt, 30.0))
                continue
            if resp.status_code >= 500:
                if attempt >= self._max_retries:
                    raise NetworkError(f"NVD returned HTTP {resp.status_code} for {cve_id}")
                attempt += 1
                self._sleep(min(2.0**attempt, 30.0))
                continue
            if resp.status_code != 200:
                raise NetworkError(
                    f"NVD returned HTTP {resp.status_code} for {cve_id}", retryable=False
                )
            try:
                return resp.json()
            except ValueError as exc:
                raise ParseError(f"NVD payload for {cve_id} is not JSON", resp.text[:200]) from exc

    def _parse(self, cve_id: str, body: dict) -> NvdFetchResult:
        try:
            vulns = body.get("vulnerabilities", [])
            if not vulns:
                return NvdFetchResult(info=None)
            cve = vulns[0]["cve"]
            metric = _pick_v3_metric(cve.get("metrics", {}))
            cwe_ids = _extract_cwe_ids(cve.get("weaknesses", []))
            if metric is None:
                logger.debug("%s: no CVSS v3 metric in NVD record", cve_id)
                return NvdFetchResult(info=None, cwe_ids=cwe_ids)
            cvss = metric["cvssData"]
            info = NvdInfo(
                cvss_version=str(cvss.get("version", "3.1")),
                vector_string=str(cvss.get("vectorString", "")),
                base_score=float(cvss["baseScore"]),
                impact_score=float(metric.get("impactScore", 0.0)),
                exploitability_score=float(metric.get("exploitabilityScore", 0.0)),
                affected_cpes=_extract_cpes(cve.get("configurations", [])),
            )
            return NvdFetchResult(info=info, cwe_ids=cwe_ids)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(
                f"unexpected NVD payload shape for {cve_id}", repr(body)[:200]
            ) from exc


def _pick_v3_metric(metrics: dict) -> dict | None:
    for key in ("cvssMetricV31", "cvssMetricV30"):
        candidates = metrics.get(key) or []
        if candidates:
            for m in candidates:
                if m.get("type") == "Primary":
                    return m
            return candidates[0]
    return None


def _extract_cwe_ids(weaknesses: list) -> list[str]:
    seen: list[str] = []
    for weakness in weaknesses:
        for desc in weakness.get("description", []):
            value = desc.get("value", "")
            if CWE_ID_RE.match(value) and value not in seen:
                seen.append(value)
    return seen


def _extract_cpes(configurations: list) -> list[str]:
    cpes: list[str] = []
    for config in configurations:
        for node in config.get("nodes", []):
            for match in node.get("cpeMatch", []):
                criteria = match.get("criteria")
                if criteria and criteria not in cpes:
                    cpes.append(criteria)
    return cpes


def _parse_retry_after(value: str | None) -> float | None:
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


def enrich_with_nvd(record: VulnerabilityRecord, client: NvdClient) -> NvdInfo | None:
    """NVD enrichment for one record; None marks a CVE the NVD cannot serve."""
    return client.fetch(record.cve_id)
