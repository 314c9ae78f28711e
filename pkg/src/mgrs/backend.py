"""LLM access layer: a deterministic scripted backend and an OpenAI-compatible HTTP client.

Both backends share a completion-ordered call log so that pipeline stages can
be accounted for call-by-call.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass

import requests

from .errors import BackendUnavailable, MalformedResponse, ScriptMiss

ENV_API_BASE = "MGRS_API_BASE"
ENV_API_KEY = "MGRS_API_KEY"

# Statuses worth retrying; every other 4xx is a semantic failure.
_TRANSIENT_STATUSES = frozenset({408, 429, 500, 502, 503, 504})


def fingerprint(prompt: str, temperature: float, seed: int | None) -> str:
    """Stable identity of a sampling request.

    Hashes the prompt bytes, the temperature at 1e-6 resolution, and the seed,
    so replay tables are independent of in-memory ordering.
    """
    h = hashlib.sha256()
    h.update(prompt.encode("utf-8"))
    h.update(b"\x1f")
    h.update(f"{round(temperature, 6):.6f}".encode("ascii"))
    h.update(b"\x1f")
    h.update(b"none" if seed is None else str(seed).encode("ascii"))
    return h.hexdigest()


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    sampling_temperature: float = 0.7
    max_tokens: int = 512
    want_logprobs: bool = False
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.sampling_temperature < 0:
            raise ValueError("sampling_temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def fingerprint(self) -> str:
        return fingerprint(self.prompt, self.sampling_temperature, self.seed)


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    token_logprobs: tuple[tuple[str, float], ...] | None = None
    backend_id: str = "unknown"
    latency_ms: int = 0

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")
        if self.token_logprobs is not None:
            for token, logprob in self.token_logprobs:
                if logprob > 0:
                    raise ValueError(f"logprob for token {token!r} must be <= 0")


class Backend:
    """Base completion backend with a thread-safe, completion-ordered call log.

    Failed attempts are logged with a None response so the log length equals
    the number of completed `complete` invocations, successful or not.
    """

    backend_id = "backend"

    def __init__(self) -> None:
        self._log: list[tuple[CompletionRequest, CompletionResponse | None]] = []
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError

    def call_log(self) -> list[tuple[CompletionRequest, CompletionResponse | None]]:
        with self._lock:
            return list(self._log)

    def call_count(self) -> int:
        with self._lock:
            return len(self._log)

    def latency_total_ms(self, start: int = 0) -> int:
        with self._lock:
            return sum(r.latency_ms for _, r in self._log[start:] if r is not None)

    def _record(self, request: CompletionRequest, response: CompletionResponse | None) -> None:
        with self._lock:
            self._log.append((request, response))


class ScriptedTable:
    """Fingerprint-keyed table of canned responses.

    The JSON file format is either a bare array of entries or an object
    {"entries": [...], "default_response": {...}}, where each entry is
    {"fingerprint_inputs": {"prompt", "temperature", "seed"},
     "response": {"text", "token_logprobs", "latency_ms"}}.
    """

    def __init__(self, default_response: CompletionResponse | None = None) -> None:
        self.entries: dict[str, CompletionResponse] = {}
        self.default_response = default_response
        self._inputs: list[dict] = []

    def add(
        self,
        prompt: str,
        temperature: float,
        seed: int | None,
        text: str,
        token_logprobs: list[tuple[str, float]] | None = None,
        latency_ms: int = 0,
    ) -> None:
        response = CompletionResponse(
            text=text,
            token_logprobs=tuple((t, lp) for t, lp in token_logprobs) if token_logprobs else None,
            backend_id="scripted",
            latency_ms=latency_ms,
        )
        self.entries[fingerprint(prompt, temperature, seed)] = response
        self._inputs.append(
            {
                "fingerprint_inputs": {"prompt": prompt, "temperature": temperature, "seed": seed},
                "response": {
                    "text": text,
                    "token_logprobs": [[t, lp] for t, lp in token_logprobs] if token_logprobs else None,
                    "latency_ms": latency_ms,
                },
            }
        )

    def lookup(self, fp: str) -> CompletionResponse | None:
        hit = self.entries.get(fp)
        if hit is not None:
            return hit
        return self.default_response

    @staticmethod
    def _response_from_dict(raw: dict) -> CompletionResponse:
        lps = raw.get("token_logprobs")
        return CompletionResponse(
            text=raw["text"],
            token_logprobs=tuple((t, float(lp)) for t, lp in lps) if lps else None,
            backend_id="scripted",
            latency_ms=int(raw.get("latency_ms", 0)),
        )

    @classmethod
    def from_file(cls, path: str) -> "ScriptedTable":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if isinstance(data, list):
            raw_entries, default = data, None
        else:
            raw_entries = data.get("entries", [])
            default = data.get("default_response")
        table = cls(default_response=cls._response_from_dict(default) if default else None)
        for entry in raw_entries:
            fp_in = entry["fingerprint_inputs"]
            resp = entry["response"]
            table.add(
                prompt=fp_in["prompt"],
                temperature=float(fp_in["temperature"]),
                seed=fp_in.get("seed"),
                text=resp["text"],
                token_logprobs=[(t, float(lp)) for t, lp in resp["token_logprobs"]]
                if resp.get("token_logprobs")
                else None,
                latency_ms=int(resp.get("latency_ms", 0)),
            )
        return table

    def to_file(self, path: str) -> None:
        data: dict = {"entries": self._inputs}
        if self.default_response is not None:
            data["default_response"] = {
                "text": self.default_response.text,
                "token_logprobs": [[t, lp] for t, lp in self.default_response.token_logprobs]
                if self.default_response.token_logprobs
                else None,
                "latency_ms": self.default_response.latency_ms,
            }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)


class ScriptedBackend(Backend):
    """Referentially transparent replay backend: same fingerprint, same bytes."""

    backend_id = "scripted"

    def __init__(self, table: ScriptedTable) -> None:
        super().__init__()
        self.table = table

    @classmethod
    def from_file(cls, path: str) -> "ScriptedBackend":
        return cls(ScriptedTable.from_file(path))

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        response = self.table.lookup(request.fingerprint())
        if response is None:
            self._record(request, None)
            raise ScriptMiss(
                f"no scripted entry for fingerprint {request.fingerprint()[:12]}… "
                f"(prompt starts {request.prompt[:60]!r})"
            )
        self._record(request, response)
        return response


class HttpBackend(Backend):
    """OpenAI-compatible chat-completions client with bounded retries.

    Transient failures (connection errors, 408/429/5xx) are retried up to
    `max_retries` attempts with exponential backoff and ±20% jitter; semantic
    4xx responses fail immediately.
    """

    backend_id = "http"

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str = "default",
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_ms: int = 250,
        session: requests.Session | None = None,
    ) -> None:
        super().__init__()
        base_url = base_url or os.environ.get(ENV_API_BASE)
        api_key = api_key or os.environ.get(ENV_API_KEY)
        if not base_url:
            raise BackendUnavailable(
                f"no API base URL: pass --api-base or set {ENV_API_BASE}"
            )
        if not api_key:
            raise BackendUnavailable(f"no API key: pass api_key or set {ENV_API_KEY}")
        self.url = (
            base_url
            if base_url.rstrip("/").endswith("/chat/completions")
            else base_url.rstrip("/") + "/chat/completions"
        )
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_ms = backoff_ms
        self._session = session or requests.Session()
        self._rng = random.Random()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        payload: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.sampling_temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        if request.want_logprobs:
            payload["logprobs"] = True
        headers = {"Authorization": f"Bearer {self.api_key}"}

        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            start = time.monotonic()
            try:
                http = self._session.post(
                    self.url, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
            else:
                latency_ms = int((time.monotonic() - start) * 1000)
                if http.status_code < 300:
                    try:
                        response = self._parse(http.json(), latency_ms)
                    except MalformedResponse:
                        self._record(request, None)
                        raise
                    self._record(request, response)
                    return response
                if http.status_code not in _TRANSIENT_STATUSES:
                    self._record(request, None)
                    raise BackendUnavailable(
                        f"endpoint rejected request: HTTP {http.status_code} {http.text[:200]}"
                    )
                last_error = BackendUnavailable(f"HTTP {http.status_code}")
            if attempt + 1 < self.max_retries:
                delay = self.backoff_ms / 1000.0 * (2**attempt)
                time.sleep(delay * self._rng.uniform(0.8, 1.2))
        self._record(request, None)
        raise BackendUnavailable(
            f"gave up after {self.max_retries} attempts: {last_error}"
        )

    def _parse(self, data: dict, latency_ms: int) -> CompletionResponse:
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"]
            if not isinstance(text, str):
                raise TypeError("content is not a string")
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected completion payload: {exc}") from exc
        token_logprobs = None
        lp_block = choice.get("logprobs")
        if isinstance(lp_block, dict) and lp_block.get("content"):
            try:
                # Some servers emit tiny positive logprobs; clamp to keep the
                # response type's invariant.
                token_logprobs = tuple(
                    (item["token"], min(0.0, float(item["logprob"])))
                    for item in lp_block["content"]
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedResponse(f"unparseable logprobs block: {exc}") from exc
        return CompletionResponse(
            text=text,
            token_logprobs=token_logprobs,
            backend_id=self.backend_id,
            latency_ms=latency_ms,
        )
