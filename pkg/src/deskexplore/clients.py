"""Text-generation backends.

All backends expose ``generate(prompt, params) -> str``. The HTTP client posts
``{"prompt", "temperature", "max_tokens", "top_p"}`` and expects ``{"text"}``.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

from .errors import ClientError


@dataclass(frozen=True)
class GenParams:
    temperature: float = 0.7
    max_tokens: int = 4096
    top_p: float = 0.95


DEFAULT_PARAMS = GenParams()


class TextGenClient(Protocol):
    def generate(self, prompt: str, params: GenParams = DEFAULT_PARAMS) -> str: ...


@dataclass
class MockGen:
    """Scripted in-process generator.

    ``responses`` is consumed in order first (stateful); once exhausted,
    ``rules`` are tried in order and the first whose keyword occurs in the
    prompt answers; otherwise ``default``. With no queue the mock is a pure
    function of the prompt. Temperature and the other params are ignored.
    """

    responses: list = field(default_factory=list)
    rules: list = field(default_factory=list)
    default: Optional[str] = None
    calls: list = field(default_factory=list)

    def generate(self, prompt: str, params: GenParams = DEFAULT_PARAMS) -> str:
        self.calls.append(prompt)
        if self.responses:
            return self.responses.pop(0)
        for keyword, response in self.rules:
            if keyword in prompt:
                return response
        if self.default is not None:
            return self.default
        raise ClientError("mock script has no response for this prompt")

    @classmethod
    def from_script(cls, script: dict) -> "MockGen":
        rules = [(r["match"], r["response"]) for r in script.get("rules", [])]
        return cls(list(script.get("responses", [])), rules, script.get("default"))

    @classmethod
    def from_file(cls, path) -> "MockGen":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if isinstance(data, list):
            data = {"responses": data}
        return cls.from_script(data)


@dataclass
class FunctionGen:
    """Wraps a plain ``prompt -> text`` function."""

    fn: Callable[[str], str]
    calls: list = field(default_factory=list)

    def generate(self, prompt: str, params: GenParams = DEFAULT_PARAMS) -> str:
        self.calls.append(prompt)
        return self.fn(prompt)


class CountingClient:
    """Transparent wrapper recording every prompt sent to ``inner``."""

    def __init__(self, inner):
        self.inner = inner
        self.calls: list[str] = []

    def generate(self, prompt: str, params: GenParams = DEFAULT_PARAMS) -> str:
        self.calls.append(prompt)
        return self.inner.generate(prompt, params)


def post_json(url: str, payload: dict, timeout: float = 120.0) -> dict:
    data = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(url, data=data, headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise ClientError(f"request to {url} failed: {exc}") from exc


@dataclass
class HttpTextGen:
    url: str
    timeout: float = 120.0

    def generate(self, prompt: str, params: GenParams = DEFAULT_PARAMS) -> str:
        body = post_json(
            self.url,
            {"prompt": prompt, "temperature": params.temperature, "max_tokens": params.max_tokens, "top_p": params.top_p},
            self.timeout,
        )
        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str):
            raise ClientError("response JSON lacks a 'text' string")
        return text


def ordered(responses: Sequence[str]) -> MockGen:
    return MockGen(responses=list(responses))
