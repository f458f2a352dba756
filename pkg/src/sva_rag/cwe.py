"""CWE REST client: weakness name, descriptions, and common consequences.

Targets the CWE REST API (``{base}/cwe/weakness/{number}``) which returns
``{"Weaknesses": [{"Name": ..., "Description": ..., ...}]}``. Responses are
cached in memory because datasets reuse a small set of weakness types.
"""

from __future__ import annotations

import logging
import os
import threading

import requests

from .errors import NetworkError, ParseError, UnknownCweError
from .models import CWE_ID_RE, CweInfo, VulnerabilityRecord

logger = logging.getLogger(__name__)

DEFAULT_CWE_BASE_URL = "https://cwe-api.mitre.org/api/v1"
ENV_CWE_BASE_URL = "SVA_CWE_BASE_URL"


def _render_consequences(raw) -> list[str]:
    """Flatten the structured CommonConsequences block into readable lines."""
    lines: list[str] = []
    if not isinstance(raw, list):
        return lines
    for item in raw:
        if isinstance(item, str):
            lines.append(item)
            continue
        if not isinstance(item, dict):
            continue
        scopes = item.get("Scope") or []
        if isinstance(scopes, str):
            scopes = [scopes]
        impacts = item.get("Impact") or []
        if isinstance(impacts, str):
            impacts = [impacts]
        parts = []
        if scopes:
            parts.append(", ".join(str(s) for s in scopes))
        if impacts:
            parts.append("impact: " + ", ".join(str(i) for i in impacts))
        note = item.get("Note")
        if note:
            parts.append(str(note))
        if parts:
            lines.append("; ".join(parts))
    return lines


class CweClient:
    """Fetch weakness knowledge by CWE id, with an in-memory cache."""

    def __init__(
        self,
        base_url: str | None = None,
        session=None,
        timeout: float = 30.0,
    ):
        self._base_url = (base_url or os.environ.get(ENV_CWE_BASE_URL) or DEFAULT_CWE_BASE_URL).rstrip("/")
        self._session = session or requests.Session()
        self._timeout = timeout
        self._cache: dict[str, CweInfo] = {}
        self._lock = threading.Lock()

    def fetch(self, cwe_id: str) -> CweInfo:
        if not CWE_ID_RE.match(cwe_id):
            raise UnknownCweError(f"not a CWE id: {cwe_id!r}")
        with self._lock:
            cached = self._cache.get(cwe_id)
        if cached is not None:
            return cached
        info = self._fetch_remote(cwe_id)
        with self._lock:
            self._cache[cwe_id] = info
        return info

    def _fetch_remote(self, cwe_id: str) -> CweInfo:
        number = cwe_id.split("-", 1)[1]
        url = f"{self._base_url}/cwe/weakness/{number}"
        try:
            resp = self._session.get(url, timeout=self._timeout)
        except requests.RequestException as exc:
            raise NetworkError(f"CWE request for {cwe_id} failed: {exc}") from exc
        if resp.status_code == 404:
            raise UnknownCweError(f"CWE registry has no entry for {cwe_id}")
        if resp.status_code != 200:
            raise NetworkError(
                f"CWE registry returned HTTP {resp.status_code} for {cwe_id}",
                retryable=resp.status_code >= 500,
            )
        try:
            body = resp.json()
        except ValueError as exc:
            raise ParseError(f"CWE payload for {cwe_id} is not JSON", resp.text[:200]) from exc
        weaknesses = body.get("Weaknesses") if isinstance(body, dict) else None
        if not weaknesses:
            raise UnknownCweError(f"CWE registry returned an empty record for {cwe_id}")
        entry = weaknesses[0]
        try:
            return CweInfo(
                cwe_id=cwe_id,
                name=str(entry["Name"]),
                description=str(entry.get("Description", "")),
                extended_description=str(entry.get("ExtendedDescription", "")),
                common_consequences=_render_consequences(entry.get("CommonConsequences")),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(
                f"unexpected CWE payload shape for {cwe_id}", repr(entry)[:200]
            ) from exc


def enrich_with_cwe(record: VulnerabilityRecord, client: CweClient, cwe_id: str) -> CweInfo:
    """CWE enrichment for one record given the weakness id the NVD lists."""
    logger.debug("%s: fetching %s", record.cve_id, cwe_id)
    return client.fetch(cwe_id)
