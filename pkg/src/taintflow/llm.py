"""Chat-completion client: config, transport with retry/backoff, and the
backend interface the labeling and filtering stages talk to."""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Protocol, Sequence


class ChatRole(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: ChatRole
    content: str

    def __post_init__(self) -> None:
        if not self.content:
            raise ValueError("message content must be non-empty")


def system(content: str) -> ChatMessage:
    return ChatMessage(ChatRole.SYSTEM, content)


def user(content: str) -> ChatMessage:
    return ChatMessage(ChatRole.USER, content)


@dataclass(frozen=True)
class LlmConfig:
    base_url: str = "https://api.openai.com/v1"
    model_id: str = "gpt-4"
    temperature: float = 0.0
    max_tokens: int = 2048
    top_p: float = 1.0
    seed: Optional[int] = None
    api_key_env: str = "LLM_API_KEY"
    retries: int = 3
    backoff_ms: int = 250
    timeout_s: float = 60.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")


class TransportError(Exception):
    """Transient transport failure, raised once retries are exhausted."""


class AuthError(Exception):
    """Missing or rejected credentials; never retried."""


class NonRetryableStatusError(Exception):
    """A 4xx response other than auth/rate-limit; never retried."""

    def __init__(self, status: int, body: str) -> None:
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class _Retryable(Exception):
    pass


# A transport takes (url, headers, payload) and returns the parsed response
# body; it raises _Retryable for transient failures.
Transport = Callable[[str, dict, dict], dict]


def http_transport(timeout_s: float = 60.0) -> Transport:
    import requests

    def send(url: str, headers: dict, payload: dict) -> dict:
        try:
            resp = requests.post(url, headers=headers, json=payload, timeout=timeout_s)
        except requests.RequestException as exc:
            raise _Retryable(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"HTTP {resp.status_code} from {url}")
        if resp.status_code in (408, 429) or resp.status_code >= 500:
            raise _Retryable(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise NonRetryableStatusError(resp.status_code, resp.text)
        try:
            return resp.json()
        except json.JSONDecodeError as exc:
            raise _Retryable(f"non-JSON response: {exc}") from exc

    return send


def build_payload(cfg: LlmConfig, messages: Sequence[ChatMessage]) -> dict:
    payload = {
        "model": cfg.model_id,
        "messages": [{"role": m.role.value, "content": m.content} for m in messages],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
        "top_p": cfg.top_p,
    }
    if cfg.seed is not None:
        payload["seed"] = cfg.seed
    return payload


def chat(cfg: LlmConfig, messages: Sequence[ChatMessage], transport: Optional[Transport] = None) -> str:
    """POST a chat completion and return the first choice's text.

    Transient failures are retried with exponential backoff up to
    cfg.retries additional attempts; auth and other 4xx failures are not.
    """
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(cfg.api_key_env, "")
    if transport is None:
        if not api_key:
            raise AuthError(f"no API key in ${cfg.api_key_env}")
        transport = http_transport(cfg.timeout_s)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    payload = build_payload(cfg, messages)
    last_error: Optional[Exception] = None
    for attempt in range(cfg.retries + 1):
        try:
            response = transport(url, headers, payload)
            return _first_choice(response)
        except _Retryable as exc:
            last_error = exc
            if attempt < cfg.retries:
                time.sleep(cfg.backoff_ms * (2**attempt) / 1000.0)
    raise TransportError(f"gave up after {cfg.retries + 1} attempts: {last_error}")


def _first_choice(response: dict) -> str:
    try:
        return response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed completion response: {exc}") from exc


class ChatBackend(Protocol):
    """What the labeling and filtering stages need from an LLM."""

    def complete(self, messages: Sequence[ChatMessage]) -> str: ...


class HttpChatBackend:
    def __init__(self, cfg: LlmConfig, transport: Optional[Transport] = None) -> None:
        self.cfg = cfg
        self.transport = transport

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        return chat(self.cfg, messages, self.transport)
