"""Uniform client for text-producing backends.

Two roles share one interface: the frozen code generator and the semantic
rewriter. Backends are either an OpenAI-compatible HTTP endpoint or a
deterministic scripted mock for hermetic tests.
"""
from __future__ import annotations

import json
import os
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path

from .errors import (
    AuthMissing,
    BackendTimeout,
    BackendUnavailable,
    MockRuleMissing,
    ParseError,
)
from .seeding import stable_hash


class Role(Enum):
    CODE_GENERATOR = "generator"
    REWRITER = "rewriter"


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 0.8
    top_p: float = 0.95
    max_new_tokens: int = 512

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be positive")


@dataclass(frozen=True)
class GenRequest:
    role: Role
    prompt: str
    decoding: DecodingParams = field(default_factory=DecodingParams)
    seed: int = 0

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass(frozen=True)
class GenResponse:
    raw_text: str
    backend_id: str
    latency_ms: int


@dataclass(frozen=True)
class HttpEndpoint:
    base_url: str
    model_name: str
    auth_env_var: str | None = None


@dataclass(frozen=True)
class ScriptedMock:
    script_path: str


@dataclass(frozen=True)
class BackendConfig:
    kind: HttpEndpoint | ScriptedMock
    timeout_ms: int = 30_000
    retry_limit: int = 2

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be non-negative")


@dataclass(frozen=True)
class MockRule:
    match: str
    role: Role | None
    responses: tuple[str, ...]


@lru_cache(maxsize=16)
def _load_mock_rules(script_path: str) -> tuple[MockRule, ...]:
    rules: list[MockRule] = []
    with Path(script_path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, str(exc)) from exc
            if "match" not in record:
                raise ParseError(line_no, "mock rule missing 'match'")
            if "response" in record:
                responses = (record["response"],)
            elif "response_pool" in record and record["response_pool"]:
                responses = tuple(record["response_pool"])
            else:
                raise ParseError(line_no, "mock rule needs 'response' or 'response_pool'")
            role = Role(record["role"]) if "role" in record else None
            rules.append(MockRule(match=record["match"], role=role, responses=responses))
    return tuple(rules)


def _mock_generate(req: GenRequest, mock: ScriptedMock) -> GenResponse:
    for rule in _load_mock_rules(mock.script_path):
        if rule.role is not None and rule.role != req.role:
            continue
        if rule.match in req.prompt:
            if len(rule.responses) == 1:
                text = rule.responses[0]
            else:
                pick = stable_hash(req.role.value, req.prompt, req.seed)
                text = rule.responses[pick % len(rule.responses)]
            backend_id = f"mock:{Path(mock.script_path).name}"
            return GenResponse(raw_text=text, backend_id=backend_id, latency_ms=0)
    raise MockRuleMissing(f"no {req.role.value} rule matches prompt: {req.prompt[:80]!r}")


def _http_generate(req: GenRequest, endpoint: HttpEndpoint, cfg: BackendConfig) -> GenResponse:
    payload = {
        "model": endpoint.model_name,
        "messages": [{"role": "user", "content": req.prompt}],
        "temperature": req.decoding.temperature,
        "top_p": req.decoding.top_p,
        "max_tokens": req.decoding.max_new_tokens,
        "seed": req.seed,
    }
    headers = {"Content-Type": "application/json"}
    if endpoint.auth_env_var:
        token = os.environ.get(endpoint.auth_env_var)
        if not token:
            raise AuthMissing(f"environment variable {endpoint.auth_env_var} is unset")
        headers["Authorization"] = f"Bearer {token}"
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    body = json.dumps(payload).encode("utf-8")
    timeout_s = cfg.timeout_ms / 1000.0

    last_error: Exception | None = None
    timed_out = False
    for attempt in range(cfg.retry_limit + 1):
        if attempt > 0:
            time.sleep(min(0.05 * 2 ** (attempt - 1), 2.0))
        request = urllib.request.Request(url, data=body, headers=headers, method="POST")
        started = time.monotonic()
        try:
            with urllib.request.urlopen(request, timeout=timeout_s) as resp:
                data = json.loads(resp.read().decode("utf-8"))
            text = data["choices"][0]["message"]["content"]
            latency = int((time.monotonic() - started) * 1000)
            return GenResponse(raw_text=text, backend_id=endpoint.model_name, latency_ms=latency)
        except urllib.error.HTTPError as exc:
            if exc.code in (429, 500, 502, 503, 504):
                last_error = exc
                continue
            raise BackendUnavailable(f"HTTP {exc.code} from {url}") from exc
        except TimeoutError as exc:
            last_error, timed_out = exc, True
            continue
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, TimeoutError):
                last_error, timed_out = exc, True
            else:
                last_error = exc
            continue
        except (KeyError, IndexError, json.JSONDecodeError) as exc:
            raise BackendUnavailable(f"malformed completion payload from {url}") from exc
    if timed_out:
        raise BackendTimeout(f"{url} timed out after {cfg.retry_limit + 1} attempts") from last_error
    raise BackendUnavailable(
        f"{url} unreachable after {cfg.retry_limit + 1} attempts: {last_error}"
    ) from last_error


def generate(req: GenRequest, cfg: BackendConfig) -> GenResponse:
    """Produce text for the request from the configured backend.

    The scripted mock is a pure function of (role, prompt, seed); the HTTP
    path retries transient failures up to retry_limit with backoff.
    """
    if isinstance(cfg.kind, ScriptedMock):
        return _mock_generate(req, cfg.kind)
    return _http_generate(req, cfg.kind, cfg)


_FENCE_RE = re.compile(r"^\s*```")
_DEF_RE = re.compile(r"^\s*(async\s+)?def\s+([A-Za-z_][A-Za-z0-9_]*)")


def _first_fenced_block(text: str) -> str | None:
    lines = text.splitlines()
    start = None
    for i, line in enumerate(lines):
        if _FENCE_RE.match(line):
            if start is None:
                start = i
            else:
                return "\n".join(lines[start + 1 : i])
    return None


def _def_suffix(text: str) -> str | None:
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if _DEF_RE.match(line):
            return "\n".join(lines[i:])
    return None


def extract_code(raw_text: str, entry_point: str | None = None) -> str:
    """Pull executable code out of backend prose.

    First fenced code block when present, else the suffix starting at the
    first function-definition line, else the raw text unchanged. Idempotent.
    entry_point is accepted for interface stability (language-specific
    extractors may use it) but does not affect selection.
    """
    block = _first_fenced_block(raw_text)
    candidate = block if block is not None else raw_text
    suffix = _def_suffix(candidate)
    return suffix if suffix is not None else candidate
