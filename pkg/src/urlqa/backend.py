"""Text-completion backends: a live HTTP client and a recorded-fixture replay.

The live backend speaks a completions-style wire format ({model, prompt,
temperature, max_tokens, stop} in, generated text out) so it stays
provider-agnostic. The fixture backend replays outputs recorded by prompt
digest, which makes the whole pipeline runnable offline and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

LIVE = "live"
FIXTURE = "fixture"

ENV_PREFIX = "URLQA_"


class CompletionError(Exception):
    """Base class for backend failures."""


class CompletionTimeout(CompletionError):
    """All attempts exceeded the request timeout."""


class RateLimited(CompletionError):
    """Retries exhausted on throttle responses."""


class MissingFixture(CompletionError):
    """The fixture store has no entry for this prompt."""


class MalformedResponse(CompletionError):
    """The endpoint answered, but no completion text could be found."""


def prompt_digest(prompt: str) -> str:
    """Content hash keying recorded completions; any prompt change, however
    small, maps to a different fixture entry."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass
class LlmParams:
    model_name: str = "text-davinci-003"
    temperature: float = 0.0
    max_output_tokens: int = 256
    stop_sequences: list[str] = field(default_factory=list)
    request_timeout: float = 30.0
    max_retries: int = 3

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


@dataclass(frozen=True)
class Completion:
    prompt_text: str
    output_text: str
    backend_id: str
    latency: float


class FixtureStore:
    """prompt digest -> recorded output, loaded wholesale from a JSONL file."""

    def __init__(self, entries: dict[str, str] | None = None):
        self.entries: dict[str, str] = dict(entries or {})

    @classmethod
    def load(cls, path) -> "FixtureStore":
        entries: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                entries[rec["prompt_sha256"]] = rec["output"]
        return cls(entries)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for digest in sorted(self.entries):
                fh.write(json.dumps({"prompt_sha256": digest, "output": self.entries[digest]}))
                fh.write("\n")

    def get(self, digest: str) -> str | None:
        return self.entries.get(digest)

    def __len__(self) -> int:
        return len(self.entries)


def record_fixture(prompt: str, output: str, store: FixtureStore) -> FixtureStore:
    """Record (or overwrite) the canned output for a prompt."""
    store.entries[prompt_digest(prompt)] = output
    return store


class FixtureBackend:
    """Pure lookup: identical prompts always return identical outputs."""

    backend_id = FIXTURE

    def __init__(self, store: FixtureStore):
        self.store = store

    def complete(self, prompt: str, params: LlmParams) -> Completion:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        started = time.monotonic()
        digest = prompt_digest(prompt)
        output = self.store.get(digest)
        if output is None:
            raise MissingFixture(f"no recorded output for prompt digest {digest[:12]}")
        return Completion(prompt, output, FIXTURE, time.monotonic() - started)


@dataclass
class BackendConfig:
    endpoint: str = ""
    api_key: str = ""
    model_name: str = "text-davinci-003"
    concurrency: int = 4

    @classmethod
    def load(cls, config_path=None, env=None) -> "BackendConfig":
        """Defaults, then the JSON config file, then environment overrides
        (URLQA_ENDPOINT, URLQA_API_KEY, URLQA_MODEL, URLQA_CONCURRENCY)."""
        env = os.environ if env is None else env
        cfg = cls()
        if config_path:
            data = json.loads(Path(config_path).read_text(encoding="utf-8"))
            for key in ("endpoint", "api_key", "model_name", "concurrency"):
                if key in data:
                    setattr(cfg, key, data[key])
        if env.get(ENV_PREFIX + "ENDPOINT"):
            cfg.endpoint = env[ENV_PREFIX + "ENDPOINT"]
        if env.get(ENV_PREFIX + "API_KEY"):
            cfg.api_key = env[ENV_PREFIX + "API_KEY"]
        if env.get(ENV_PREFIX + "MODEL"):
            cfg.model_name = env[ENV_PREFIX + "MODEL"]
        if env.get(ENV_PREFIX + "CONCURRENCY"):
            cfg.concurrency = int(env[ENV_PREFIX + "CONCURRENCY"])
        return cfg


class LiveBackend:
    """HTTP completions client with bounded concurrency and retry/backoff.

    One POST per attempt; transport errors, 429s and 5xx responses are
    retried with exponential backoff (base 1 s, doubling, small jitter) up
    to params.max_retries extra attempts. The prompt is sent exactly as
    given, so fixtures recorded from live runs replay byte-for-byte.
    """

    backend_id = LIVE

    def __init__(self, config: BackendConfig, session=None, sleep=time.sleep, rng=None):
        if not config.endpoint:
            raise ValueError("live backend requires an endpoint URL (config or URLQA_ENDPOINT)")
        self.config = config
        self.session = session if session is not None else requests.Session()
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._slots = threading.BoundedSemaphore(max(1, config.concurrency))
        self._lock = threading.Lock()
        self.request_count = 0

    def complete(self, prompt: str, params: LlmParams) -> Completion:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        body = {
            "model": params.model_name,
            "prompt": prompt,
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
            "stop": params.stop_sequences or None,
        }
        headers = {}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        started = time.monotonic()
        attempts = 1 + max(0, params.max_retries)
        last_error: CompletionError = CompletionError("no attempts made")
        for attempt in range(attempts):
            if attempt:
                self._sleep(self._backoff(attempt))
            try:
                with self._slots:
                    with self._lock:
                        self.request_count += 1
                    resp = self.session.post(
                        self.config.endpoint, json=body, headers=headers,
                        timeout=params.request_timeout)
            except requests.exceptions.Timeout as exc:
                last_error = CompletionTimeout(str(exc))
                continue
            except requests.exceptions.RequestException as exc:
                last_error = CompletionError(f"transport error: {exc}")
                continue
            if resp.status_code == 429:
                last_error = RateLimited("endpoint returned HTTP 429")
                continue
            if resp.status_code >= 500:
                last_error = CompletionError(f"endpoint returned HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise CompletionError(f"endpoint returned HTTP {resp.status_code}")
            return Completion(prompt, self._completion_text(resp), LIVE,
                              time.monotonic() - started)
        raise last_error

    def _backoff(self, attempt: int) -> float:
        return (2.0 ** (attempt - 1)) * (1.0 + 0.1 * self._rng.random())

    @staticmethod
    def _completion_text(resp) -> str:
        try:
            data = resp.json()
        except ValueError as exc:
            raise MalformedResponse("response body is not JSON") from exc
        choices = data.get("choices") if isinstance(data, dict) else None
        if isinstance(choices, list) and choices and isinstance(choices[0], dict):
            text = choices[0].get("text")
            if isinstance(text, str):
                return text
        if isinstance(data, dict):
            for key in ("text", "completion"):
                if isinstance(data.get(key), str):
                    return data[key]
        raise MalformedResponse("no completion text field in response")
