"""Model clients: the HTTP wire client and a scripted stand-in for tests."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Protocol, Sequence

import httpx

URL_ENV = "TRACER_MODEL_URL"
KEY_ENV = "TRACER_MODEL_KEY"


class ClientFailure(Exception):
    pass


@dataclass(frozen=True)
class ModelReply:
    text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None

    @property
    def total_tokens(self) -> int | None:
        if self.prompt_tokens is None and self.completion_tokens is None:
            return None
        return (self.prompt_tokens or 0) + (self.completion_tokens or 0)


class ModelClient(Protocol):
    # False means the client may be called from several sessions at once
    serial: bool

    def complete(self, system: str, messages: Sequence[Mapping[str, str]]) -> ModelReply: ...


class HttpModelClient:
    """POSTs ``{"system", "messages"}`` and expects ``{"text", "usage": {...}}`` back."""

    serial = False

    def __init__(
        self, url: str, key: str | None = None, timeout: float = 120.0, transport: httpx.BaseTransport | None = None
    ) -> None:
        self.url = url
        self._headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = httpx.Client(timeout=timeout, transport=transport)

    @classmethod
    def from_env(cls, url: str | None = None, key_env: str = KEY_ENV) -> HttpModelClient:
        url = url or os.environ.get(URL_ENV)
        if not url:
            raise ClientFailure(f"{URL_ENV} is not set")
        return cls(url, os.environ.get(key_env))

    def complete(self, system: str, messages: Sequence[Mapping[str, str]]) -> ModelReply:
        payload = {"system": system, "messages": [dict(m) for m in messages]}
        try:
            resp = self._client.post(self.url, json=payload, headers=self._headers)
            resp.raise_for_status()
            body: Any = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise ClientFailure(f"model endpoint error: {exc}") from exc
        if not isinstance(body, Mapping) or not isinstance(body.get("text"), str):
            raise ClientFailure("model endpoint returned no 'text' field")
        usage = body.get("usage") or {}
        return ModelReply(body["text"], usage.get("prompt_tokens"), usage.get("completion_tokens"))

    def close(self) -> None:
        self._client.close()


class ScriptedClient:
    """Replays canned responses in order; raises ``ClientFailure`` when it runs dry."""

    serial = True

    def __init__(self, replies: Iterable[str | ModelReply]) -> None:
        self._replies = [r if isinstance(r, ModelReply) else ModelReply(r) for r in replies]
        self.calls: list[tuple[str, list[dict[str, str]]]] = []

    def complete(self, system: str, messages: Sequence[Mapping[str, str]]) -> ModelReply:
        index = len(self.calls)
        self.calls.append((system, [dict(m) for m in messages]))
        if index >= len(self._replies):
            raise ClientFailure("scripted client has no more replies")
        return self._replies[index]


def bash(command: str, thought: str = "Next step.") -> str:
    """Wrap ``command`` the way a well-behaved model reply would."""
    return f"{thought}\n\n```bash\n{command}\n```"
