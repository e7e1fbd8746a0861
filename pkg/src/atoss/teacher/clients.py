"""Teacher LLM clients: remote API, on-disk replay cache, scripted fake."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from pathlib import Path
from typing import Callable, Protocol, Sequence, runtime_checkable

import httpx

from ..data import atomic_write_text

log = logging.getLogger(__name__)


class TeacherUnavailable(RuntimeError):
    """The teacher could not produce completions (transport failure, cold cache offline)."""


@runtime_checkable
class TeacherClient(Protocol):
    def generate(self, prompt: str, n: int, temperature: float) -> list[str]:
        ...


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ScriptedTeacher:
    """Deterministic fake.

    ``script`` is either a fixed list of completions (cycled to length n) or a
    callable ``script(prompt, n, temperature) -> list[str]``.
    """

    def __init__(self, script: Sequence[str] | Callable[[str, int, float], list[str]]):
        self.script = script
        self.calls = 0

    def generate(self, prompt, n, temperature=1.0):
        self.calls += 1
        if callable(self.script):
            out = list(self.script(prompt, n, temperature))
        else:
            if not self.script:
                raise TeacherUnavailable("empty script")
            out = [self.script[i % len(self.script)] for i in range(n)]
        if len(out) != n:
            raise TeacherUnavailable(f"script returned {len(out)} completions, expected {n}")
        return out


class RemoteTeacher:
    """OpenAI-compatible chat-completions client with bounded retries.

    The API key is read from the environment variable named by ``api_key_env``
    at call time; it never appears in config files.
    """

    def __init__(self, endpoint: str, model: str, api_key_env: str = "OPENAI_API_KEY",
                 max_retries: int = 3, backoff: float = 1.0, timeout: float = 60.0,
                 transport: httpx.BaseTransport | None = None, sleep=time.sleep):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.max_retries = max_retries
        self.backoff = backoff
        self.sleep = sleep
        self._http = httpx.Client(timeout=timeout, transport=transport)

    def _post(self, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._http.post(f"{self.endpoint}/chat/completions", json=payload, headers=headers)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request, response=resp)
                resp.raise_for_status()
                return resp.json()
            except (httpx.TransportError, httpx.HTTPStatusError, ValueError) as exc:
                last = exc
                status = getattr(getattr(exc, "response", None), "status_code", None)
                if status is not None and 400 <= status < 500 and status != 429:
                    break
                if attempt < self.max_retries:
                    delay = self.backoff * 2 ** attempt
                    log.warning("teacher request failed (%s); retrying in %.1fs", exc, delay)
                    self.sleep(delay)
        raise TeacherUnavailable(f"teacher request failed after {self.max_retries + 1} attempts: {last}")

    def generate(self, prompt, n, temperature=1.0):
        out: list[str] = []
        # providers may cap n per request
        for _ in range(n):
            if len(out) >= n:
                break
            payload = {"model": self.model, "messages": [{"role": "user", "content": prompt}],
                       "n": n - len(out), "temperature": temperature}
            data = self._post(payload)
            choices = data.get("choices") or []
            out.extend(c["message"]["content"] for c in choices)
            if not choices:
                break
        if len(out) < n:
            raise TeacherUnavailable(f"teacher returned {len(out)} of {n} completions")
        return out[:n]


class ReplayCacheTeacher:
    """Content-addressed on-disk cache in front of another client.

    One JSON file per prompt digest holding
    ``{prompt_digest, prompt, completions, timestamp}``.  With ``inner=None``
    the cache is read-only and a miss raises :class:`TeacherUnavailable`.
    """

    def __init__(self, cache_dir, inner: TeacherClient | None = None):
        self.cache_dir = Path(cache_dir)
        self.inner = inner
        self.hits = 0
        self.misses = 0
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def path_for(self, digest: str) -> Path:
        return self.cache_dir / digest[:2] / f"{digest}.json"

    def _lock(self, digest):
        with self._guard:
            return self._locks.setdefault(digest, threading.Lock())

    def lookup(self, prompt: str) -> dict | None:
        path = self.path_for(prompt_digest(prompt))
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as f:
            record = json.load(f)
        return record if record.get("prompt") == prompt else None

    def generate(self, prompt, n, temperature=1.0):
        digest = prompt_digest(prompt)
        with self._lock(digest):
            record = self.lookup(prompt)
            if record is not None and len(record["completions"]) >= n:
                self.hits += 1
                return list(record["completions"][:n])
            self.misses += 1
            if self.inner is None:
                raise TeacherUnavailable(f"no cached completions for prompt {digest[:12]} and no live teacher")
            completions = list(self.inner.generate(prompt, n, temperature))
            record = {"prompt_digest": digest, "prompt": prompt, "completions": completions,
                      "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
            atomic_write_text(self.path_for(digest), json.dumps(record, ensure_ascii=False, indent=1))
            return completions
