"""Uniform interface to completion and embedding backends.

Three interchangeable backends: a live OpenAI-compatible HTTP backend, a
deterministic scripted backend whose policy doubles as a testing oracle, and a
record/replay backend driven by a cassette file. Live calls are journaled in
cassette format, so any live run can be replayed later.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import requests

from .errors import ConfigError, GatewayError, ValidationError
from .retrieval import BOW_DIM, EmbeddingVector, hashed_bow_embedding

API_KEY_ENV = "EXPCOPILOT_API_KEY"

ELICITATION_MARKER = "what patterns can we observe"

_CONFIG_LINE = re.compile(r"^\s*configuration\s+\d+\s*:\s*(?P<body>.*\S)\s*$", re.IGNORECASE)


def estimate_tokens(text: str, chars_per_token: int = 4) -> int:
    """Token-count heuristic used for prompt budgeting: ceil(chars / 4)."""
    if chars_per_token < 1:
        raise ValidationError("chars_per_token must be at least 1")
    return -(-len(text) // chars_per_token)


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 512
    stop_sequences: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ValidationError("prompt must be non-empty")
        if not (0.0 <= self.temperature <= 1.0) or not math.isfinite(self.temperature):
            raise ValidationError("temperature must be within [0, 1]")
        if self.max_tokens < 1:
            raise ValidationError("max_tokens must be at least 1")
        if self.stop_sequences is not None:
            object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))


def prompt_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class NearestNeighborPolicy:
    """Scripted completion policy that echoes the most similar task's configurations.

    Suggestion prompts get the first demonstrated task's configuration lines
    back verbatim (renumbered), which turns the whole pipeline into a
    nearest-neighbor recommender with an exact oracle. Elicitation prompts get
    a fixed knowledge template parameterized by the prompt hash.
    """

    def __init__(self, default_completion: str | None = None):
        self.default_completion = default_completion

    def __call__(self, prompt: str, temperature: float) -> str:
        if self._is_elicitation(prompt):
            digest = prompt_sha256(prompt)[:12]
            return (
                "1. Reuse configurations that performed best on the most similar "
                f"datasets. (analysis {digest})"
            )
        configs = self._first_demo_configs(prompt)
        if not configs:
            return self.default_completion or ""
        return "\n".join(f"Configuration {i}: {body}" for i, body in enumerate(configs, start=1))

    @staticmethod
    def _is_elicitation(prompt: str) -> bool:
        lowered = prompt.lower()
        if ELICITATION_MARKER in lowered:
            return True
        lines = [ln.strip() for ln in prompt.splitlines() if ln.strip()]
        return bool(lines) and lines[-1].lower().startswith("q:")

    @staticmethod
    def _first_demo_configs(prompt: str) -> list[str]:
        configs: list[str] = []
        in_block = False
        for line in prompt.splitlines():
            if line.startswith("Dataset: "):
                if configs:
                    break
                in_block = True
                continue
            m = _CONFIG_LINE.match(line)
            if in_block and m:
                configs.append(m.group("body"))
            elif configs:
                break
        return configs


class ScriptedBackend:
    """Deterministic backend: completions from a policy, embeddings from hashed BoW."""

    def __init__(self, policy: Callable[[str, float], str] | None = None, embed_dim: int = BOW_DIM):
        self.policy = policy if policy is not None else NearestNeighborPolicy()
        self.embed_dim = embed_dim
        self.completion_calls = 0
        self.embed_calls = 0
        self._lock = threading.Lock()

    @property
    def embed_model_tag(self) -> str:
        return f"hashed-bow-{self.embed_dim}"

    def complete(self, req: CompletionRequest) -> str:
        with self._lock:
            self.completion_calls += 1
        return self.policy(req.prompt, req.temperature)

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise GatewayError("cannot embed empty text")
        with self._lock:
            self.embed_calls += 1
        return hashed_bow_embedding(text, self.embed_dim)


class ReplayBackend:
    """Backend replaying recorded responses from a cassette file."""

    def __init__(self, cassette_path: str | Path):
        path = Path(cassette_path)
        if not path.exists():
            raise ConfigError(f"replay cassette not found: {path}")
        self._responses: dict[tuple[str, str], object] = {}
        self._tags: dict[str, str] = {}
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                kind = entry["request"].get("kind", "complete")
                self._responses[(kind, entry["prompt_sha256"])] = entry["response"]
                if kind == "embed":
                    self._tags[entry["prompt_sha256"]] = entry["request"].get("model", "replay")

    def complete(self, req: CompletionRequest) -> str:
        key = ("complete", prompt_sha256(req.prompt))
        if key not in self._responses:
            raise GatewayError(f"replay miss: no recorded completion for prompt sha256={key[1]}")
        return str(self._responses[key])

    def embed(self, text: str) -> EmbeddingVector:
        sha = prompt_sha256(text)
        key = ("embed", sha)
        if key not in self._responses:
            raise GatewayError(f"replay miss: no recorded embedding for prompt sha256={sha}")
        values = self._responses[key]
        return EmbeddingVector(values=tuple(values), model_tag=self._tags.get(sha, "replay"))


class HttpBackend:
    """OpenAI-compatible completions/embeddings client with retries and journaling."""

    RETRYABLE = {429}

    def __init__(
        self,
        endpoint: str,
        model: str,
        embed_model: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_attempts: int = 3,
        backoff: Sequence[float] = (1.0, 2.0, 4.0),
        max_in_flight: int = 4,
        journal_path: str | Path | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.embed_model = embed_model
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not key:
            raise ConfigError(f"http backend requires an API key (set {API_KEY_ENV})")
        self._key = key
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = tuple(backoff)
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self._journal_path = Path(journal_path) if journal_path else None
        self._journal_lock = threading.Lock()

    def complete(self, req: CompletionRequest) -> str:
        body: dict = {
            "model": self.model,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.stop_sequences:
            body["stop"] = list(req.stop_sequences)
        data = self._post("/completions", body)
        try:
            text = data["choices"][0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed completion response: {exc}") from exc
        self._journal(
            kind="complete",
            sha=prompt_sha256(req.prompt),
            request={
                "kind": "complete",
                "model": self.model,
                "temperature": req.temperature,
                "max_tokens": req.max_tokens,
                "stop": list(req.stop_sequences) if req.stop_sequences else None,
            },
            response=text,
        )
        return text

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise GatewayError("cannot embed empty text")
        data = self._post("/embeddings", {"model": self.embed_model, "input": text})
        try:
            values = tuple(data["data"][0]["embedding"])
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed embedding response: {exc}") from exc
        self._journal(
            kind="embed",
            sha=prompt_sha256(text),
            request={"kind": "embed", "model": self.embed_model},
            response=list(values),
        )
        return EmbeddingVector(values=values, model_tag=self.embed_model)

    def _post(self, route: str, body: dict) -> dict:
        url = self.endpoint + route
        headers = {"Authorization": f"Bearer {self._key}", "Content-Type": "application/json"}
        last_detail = "no attempts made"
        for attempt in range(self.max_attempts):
            try:
                with self._sem:
                    resp = requests.post(url, json=body, headers=headers, timeout=self.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_detail = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code < 400:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise GatewayError(f"non-JSON response from {url}: {exc}") from exc
                last_detail = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if not (resp.status_code in self.RETRYABLE or resp.status_code >= 500):
                    raise GatewayError(f"request to {url} failed ({last_detail})")
            if attempt + 1 < self.max_attempts:
                time.sleep(self.backoff[min(attempt, len(self.backoff) - 1)])
        raise GatewayError(f"request to {url} failed after {self.max_attempts} attempts ({last_detail})")

    def _journal(self, kind: str, sha: str, request: dict, response: object) -> None:
        if self._journal_path is None:
            return
        line = json.dumps(
            {"prompt_sha256": sha, "request": request, "response": response},
            sort_keys=True,
        )
        with self._journal_lock:
            with self._journal_path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def embed_batch(backend, texts: Sequence[str], max_workers: int = 4) -> list[EmbeddingVector]:
    """Embed many texts, preserving input order; concurrent for live backends."""
    texts = list(texts)
    if isinstance(backend, HttpBackend) and len(texts) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(backend.embed, texts))
    return [backend.embed(text) for text in texts]


def backend_from_config(cfg: dict) -> ScriptedBackend | ReplayBackend | HttpBackend:
    """Build a backend from its config mapping ({"kind": ..., ...})."""
    kind = cfg.get("kind")
    if kind == "scripted":
        policy = NearestNeighborPolicy(default_completion=cfg.get("default_completion"))
        return ScriptedBackend(policy=policy, embed_dim=int(cfg.get("embed_dim", BOW_DIM)))
    if kind == "replay":
        if "cassette" not in cfg:
            raise ConfigError("replay backend requires a 'cassette' path")
        return ReplayBackend(cfg["cassette"])
    if kind == "http":
        missing = [k for k in ("endpoint", "model", "embed_model") if k not in cfg]
        if missing:
            raise ConfigError(f"http backend config missing {missing}")
        return HttpBackend(
            endpoint=cfg["endpoint"],
            model=cfg["model"],
            embed_model=cfg["embed_model"],
            timeout=float(cfg.get("timeout", 30.0)),
            max_attempts=int(cfg.get("max_attempts", 3)),
            max_in_flight=int(cfg.get("max_in_flight", 4)),
            journal_path=cfg.get("journal"),
        )
    raise ConfigError(f"unknown backend kind: {kind!r}")
