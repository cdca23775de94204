"""Chat-completion wire client with bounded retries and bounded concurrency."""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import httpx

from ..errors import BadStatus, JudgeUnavailable

log = logging.getLogger(__name__)

API_KEY_ENV = "GVCOT_JUDGE_API_KEY"
_RETRYABLE = {408, 409, 425, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "http://localhost:8000/v1"
    model_name: str = "judge"
    api_key: Optional[str] = field(default=None, repr=False)
    timeout: float = 120.0
    max_retries: int = 3
    max_in_flight: int = 8
    temperature: float = 0.0
    max_tokens: Optional[int] = None
    backoff_base: float = 1.0
    backoff_cap: float = 30.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    def resolved_api_key(self) -> Optional[str]:
        return self.api_key if self.api_key is not None else os.environ.get(API_KEY_ENV)


class JudgeClient:
    """Thread-safe client for one endpoint.

    At most ``max_in_flight`` requests are outstanding at once and each call
    makes at most ``max_retries + 1`` attempts.
    """

    def __init__(self, cfg: EndpointConfig, transport: Optional[httpx.BaseTransport] = None):
        self.cfg = cfg
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)
        headers = {"Content-Type": "application/json"}
        key = cfg.resolved_api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(timeout=cfg.timeout, headers=headers, transport=transport)
        self.attempts = 0
        self._lock = threading.Lock()

    @property
    def url(self) -> str:
        return self.cfg.base_url.rstrip("/") + "/chat/completions"

    def _payload(self, messages: list[dict]) -> dict:
        payload = {"model": self.cfg.model_name, "messages": messages, "temperature": self.cfg.temperature}
        if self.cfg.max_tokens is not None:
            payload["max_tokens"] = self.cfg.max_tokens
        return payload

    def _sleep(self, attempt: int) -> None:
        if self.cfg.backoff_base <= 0:
            return
        delay = min(self.cfg.backoff_cap, self.cfg.backoff_base * 2 ** attempt)
        time.sleep(delay * (0.5 + random.random() / 2))

    def complete(self, messages: list[dict]) -> str:
        payload = self._payload(messages)
        last_error: Optional[Exception] = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self._sleep(attempt - 1)
            with self._lock:
                self.attempts += 1
            try:
                with self._slots:
                    resp = self._http.post(self.url, json=payload)
            except httpx.TransportError as exc:
                log.warning("judge transport error (attempt %d): %s", attempt + 1, exc)
                last_error = exc
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise BadStatus(200, resp.text[:500]) from exc
            last_error = BadStatus(resp.status_code, resp.text[:500])
            if resp.status_code not in _RETRYABLE:
                break
            log.warning("judge returned %d (attempt %d)", resp.status_code, attempt + 1)
        if isinstance(last_error, BadStatus):
            raise last_error
        raise JudgeUnavailable(f"no response from {self.url}: {last_error}")

    def close(self) -> None:
        self._http.close()


_clients: dict[EndpointConfig, JudgeClient] = {}
_clients_lock = threading.Lock()


def query_judge(cfg: EndpointConfig, messages: list[dict]) -> str:
    """Send one chat-completion request through the shared client for ``cfg``."""
    with _clients_lock:
        client = _clients.get(cfg)
        if client is None:
            client = _clients[cfg] = JudgeClient(cfg)
    return client.complete(messages)
