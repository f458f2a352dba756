"""Chat-completion client (OpenAI-compatible wire format) plus offline mocks.

The real client talks to any endpoint speaking the ``/chat/completions``
JSON shape behind a bearer token. The mocks make the whole pipeline runnable
and testable with zero network access; tests assert that by injecting a
sentinel transport.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import time
from dataclasses import dataclass, field

import requests

from .errors import (
    AuthFailedError,
    ConfigError,
    LlmTimeoutError,
    NetworkError,
    ParseError,
    ProviderError,
    RateLimitedError,
    ScriptMissError,
    ValidationError,
)
from .models import Severity
from .prompting import AssembledPrompt

logger = logging.getLogger(__name__)

ENV_BASE_URL = "SVA_LLM_BASE_URL"
ENV_MODEL = "SVA_LLM_MODEL"
ENV_API_KEY = "SVA_LLM_API_KEY"

_DEMO_LABEL_RE = re.compile(
    r"^Ground-truth severity:\s*(LOW|MEDIUM|HIGH|CRITICAL)\s*$", re.MULTILINE
)


@dataclass
class LlmConfig:
    base_url: str
    model_name: str
    api_key: str = ""
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 60.0

    def __post_init__(self):
        if not self.base_url:
            raise ConfigError("llm base_url must be non-empty")
        if not self.model_name:
            raise ConfigError("llm model_name must be non-empty")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")

    @classmethod
    def from_env(cls, **overrides) -> "LlmConfig":
        base_url = overrides.pop("base_url", None) or os.environ.get(ENV_BASE_URL)
        model_name = overrides.pop("model_name", None) or os.environ.get(ENV_MODEL)
        api_key = overrides.pop("api_key", None)
        if api_key is None:
            api_key = os.environ.get(ENV_API_KEY, "")
        if not base_url or not model_name:
            raise ConfigError(
                f"set {ENV_BASE_URL} and {ENV_MODEL} (or pass --llm-base-url/--llm-model) "
                "to use a real provider"
            )
        return cls(base_url=base_url, model_name=model_name, api_key=api_key, **overrides)


@dataclass(frozen=True)
class CompletionResult:
    reply: str
    input_tokens: int | None = None
    output_tokens: int | None = None


def prompt_sha256(prompt: AssembledPrompt) -> str:
    """Stable key over both message bodies; used by the scripted mock and
    the run manifest."""
    payload = prompt.system_text + "\x00" + prompt.user_text
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ChatCompletionClient:
    """POSTs to ``{base_url}/chat/completions`` with retry on transient
    failures. Retries use exponential backoff (1s * 2^attempt) with 20%
    jitter; 429 honors Retry-After; non-429 4xx never retries."""

    def __init__(self, config: LlmConfig, session=None, sleep=time.sleep, rng=None):
        self._config = config
        self._session = session or requests.Session()
        self._sleep = sleep
        self._rng = rng or random.Random()

    @property
    def provider_label(self) -> str:
        return self._config.model_name

    def complete(self, prompt: AssembledPrompt) -> CompletionResult:
        url = self._config.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": self._config.model_name,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
            "temperature": self._config.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self._config.api_key:
            headers["Authorization"] = f"Bearer {self._config.api_key}"

        attempt = 0
        while True:
            try:
                resp = self._session.post(
                    url, json=body, headers=headers, timeout=self._config.timeout
                )
            except requests.Timeout as exc:
                if attempt >= self._config.max_retries:
                    raise LlmTimeoutError(f"completion timed out after {attempt + 1} tries") from exc
                attempt = self._backoff(attempt)
                continue
            except requests.RequestException as exc:
                if attempt >= self._config.max_retries:
                    raise NetworkError(f"completion request failed: {exc}") from exc
                attempt = self._backoff(attempt)
                continue

            if resp.status_code == 200:
                return self._parse(resp)
            if resp.status_code == 429:
                if attempt >= self._config.max_retries:
                    raise RateLimitedError(
                        "provider rate limit persisted",
                        retry_after=_retry_after_seconds(resp),
                    )
                attempt = self._backoff(attempt, retry_after=_retry_after_seconds(resp))
                continue
            if resp.status_code in (401, 403):
                raise AuthFailedError(f"provider rejected credentials (HTTP {resp.status_code})")
            if 400 <= resp.status_code < 500:
                raise ProviderError(
                    f"provider returned HTTP {resp.status_code}",
                    status=resp.status_code,
                    body_excerpt=resp.text[:200],
                )
            # 5xx: transient on the provider side.
            if attempt >= self._config.max_retries:
                raise ProviderError(
                    f"provider returned HTTP {resp.status_code} after {attempt + 1} tries",
                    status=resp.status_code,
                    body_excerpt=resp.text[:200],
                )
            attempt = self._backoff(attempt)

    def _backoff(self, attempt: int, retry_after: float | None = None) -> int:
        if retry_after is not None:
            delay = retry_after
        else:
            delay = (2.0**attempt) * (1.0 + self._rng.uniform(-0.2, 0.2))
        logger.debug("retrying completion in %.2fs (attempt %d)", delay, attempt + 1)
        self._sleep(delay)
        return attempt + 1

    def _parse(self, resp) -> CompletionResult:
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ParseError("completion response is not JSON", resp.text[:200]) from exc
        try:
            reply = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ParseError(
                "completion response missing choices[0].message.content",
                json.dumps(payload)[:200],
            ) from exc
        usage = payload.get("usage") or {}
        return CompletionResult(
            reply=reply,
            input_tokens=_maybe_int(usage.get("prompt_tokens")),
            output_tokens=_maybe_int(usage.get("completion_tokens")),
        )


def _maybe_int(value) -> int | None:
    return int(value) if isinstance(value, (int, float)) else None


def _retry_after_seconds(resp) -> float | None:
    raw = resp.headers.get("Retry-After")
    if raw is None:
        return None
    try:
        return max(0.0, float(raw))
    except ValueError:
        return None


@dataclass
class MockCompleter:
    """Deterministic offline stand-in for the chat client.

    Policies:
      - echo_majority: reply with the modal demonstration label found in
        the prompt; ties resolve to the higher severity; no demonstrations
        resolve to MEDIUM.
      - fixed: always reply with ``fixed_label``.
      - script: replay recorded replies keyed by prompt sha256.
    """

    policy: str = "echo_majority"
    fixed_label: Severity | None = None
    transcript: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.policy not in ("echo_majority", "fixed", "script"):
            raise ConfigError(f"unknown mock policy: {self.policy!r}")
        if self.policy == "fixed" and self.fixed_label is None:
            raise ConfigError("fixed policy needs a label")

    @property
    def provider_label(self) -> str:
        if self.policy == "fixed":
            return f"mock:fixed:{self.fixed_label.label}"
        return f"mock:{self.policy}"

    @classmethod
    def from_script(cls, path: str) -> "MockCompleter":
        transcript: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    transcript[row["prompt_sha256"]] = row["reply"]
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValidationError(f"bad transcript line {line_no} in {path}") from exc
        return cls(policy="script", transcript=transcript)

    def complete(self, prompt: AssembledPrompt) -> CompletionResult:
        if self.policy == "fixed":
            return CompletionResult(reply=f"SEVERITY: {self.fixed_label.label}")
        if self.policy == "script":
            key = prompt_sha256(prompt)
            if key not in self.transcript:
                raise ScriptMissError(f"no scripted reply for prompt {key[:12]}...")
            return CompletionResult(reply=self.transcript[key])
        labels = [Severity.from_label(m) for m in _DEMO_LABEL_RE.findall(prompt.user_text)]
        if not labels:
            return CompletionResult(reply="SEVERITY: MEDIUM")
        counts: dict[Severity, int] = {}
        for label in labels:
            counts[label] = counts.get(label, 0) + 1
        best = max(counts.items(), key=lambda kv: (kv[1], kv[0].value))[0]
        return CompletionResult(reply=f"SEVERITY: {best.label}")


def mock_complete(prompt: AssembledPrompt, completer: MockCompleter) -> str:
    return completer.complete(prompt).reply


def make_completer(spec: str, llm_config: LlmConfig | None = None, **client_kwargs):
    """Build a completer from a CLI spec string.

    Accepted forms: ``mock:echo_majority``, ``mock:fixed:<LABEL>``,
    ``mock:script:<path>``, ``http``.
    """
    if spec == "http":
        config = llm_config or LlmConfig.from_env()
        return ChatCompletionClient(config, **client_kwargs)
    if spec in ("mock", "mock:echo_majority"):
        return MockCompleter(policy="echo_majority")
    if spec.startswith("mock:fixed:"):
        return MockCompleter(policy="fixed", fixed_label=Severity.from_label(spec.split(":", 2)[2]))
    if spec.startswith("mock:script:"):
        return MockCompleter.from_script(spec.split(":", 2)[2])
    raise ConfigError(f"unknown llm spec: {spec!r}")
