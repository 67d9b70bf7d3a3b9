"""Chat-completion clients: HTTP transport, scripted mock, token ledger.

Every stage talks to an :class:`LlmClient`. The client owns the temperature
policy (generation stages at one setting, repair at another), rate limiting,
retries and the :class:`UsageLedger`. :class:`ScriptedLlm` answers from a JSON
script so the whole pipeline runs offline and deterministically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import LlmUnavailable, MalformedScript, ProviderError, ScriptMiss

log = logging.getLogger(__name__)

STAGES = ("describe", "opmap", "synth", "repair")
GENERATION_STAGES = ("describe", "opmap", "synth")


@dataclass(frozen=True)
class ChatRequest:
    stage: str
    messages: tuple[tuple[str, str], ...]
    temperature: float
    max_output_tokens: int
    model_id: str
    function: str = ""
    tag: str = ""

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.stage, self.messages)

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "function": self.function,
            "tag": self.tag,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "model": self.model_id,
            "fingerprint": self.fingerprint,
        }


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def usage(self) -> tuple[int, int]:
        return self.prompt_tokens, self.completion_tokens


_WS = re.compile(r"\s+")


def fingerprint(stage: str, messages: Iterable[tuple[str, str]]) -> str:
    """Stable hash of the stage and whitespace-normalized message texts."""
    h = hashlib.sha256(stage.encode())
    for role, content in messages:
        h.update(b"\x00" + role.encode() + b"\x01" + _WS.sub(" ", content).strip().encode())
    return h.hexdigest()[:16]


class UsageLedger:
    """Requests and tokens per stage and per function, updated under a lock."""

    def __init__(self):
        self._lock = threading.Lock()
        self.per_stage: dict[str, list[int]] = {}
        self.per_function: dict[str, list[int]] = {}

    def record(self, stage: str, function: str, prompt_tokens: int, completion_tokens: int) -> None:
        with self._lock:
            for table, key in ((self.per_stage, stage), (self.per_function, function or "<none>")):
                row = table.setdefault(key, [0, 0, 0])
                row[0] += 1
                row[1] += prompt_tokens
                row[2] += completion_tokens

    def totals(self) -> tuple[int, int, int]:
        with self._lock:
            return tuple(sum(r[i] for r in self.per_stage.values()) for i in range(3))  # type: ignore[return-value]

    def to_json(self) -> dict:
        def table(t):
            return {k: {"requests": v[0], "prompt_tokens": v[1], "completion_tokens": v[2]} for k, v in sorted(t.items())}

        with self._lock:
            per_stage, per_function = table(self.per_stage), table(self.per_function)
        req, pt, ct = self.totals()
        return {"per_stage": per_stage, "per_function": per_function,
                "total": {"requests": req, "prompt_tokens": pt, "completion_tokens": ct}}

    def merge_json(self, data: dict) -> None:
        """Fold a previously written ledger back in (resumed runs)."""
        with self._lock:
            for name, table in (("per_stage", self.per_stage), ("per_function", self.per_function)):
                for key, v in data.get(name, {}).items():
                    row = table.setdefault(key, [0, 0, 0])
                    row[0] += v["requests"]
                    row[1] += v["prompt_tokens"]
                    row[2] += v["completion_tokens"]


class TokenBucket:
    """Blocking rate limiter: ``rate`` requests per minute, burst of ``capacity``."""

    def __init__(self, rate_per_minute: float, capacity: float | None = None):
        self.rate = rate_per_minute / 60.0
        self.capacity = capacity if capacity is not None else max(1.0, rate_per_minute / 60.0)
        self.tokens = self.capacity
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate <= 0:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            time.sleep(wait)


class TransientError(Exception):
    """Transport hiccup worth retrying."""


class LlmClient:
    """Base client. Subclasses implement :meth:`_send`."""

    def __init__(self, model_id: str = "mock", *, generation_temperature: float = 0.0,
                 repair_temperature: float = 0.1, max_output_tokens: int = 8192,
                 requests_per_minute: float = 0.0, max_retries: int = 3, backoff: float = 0.5,
                 ledger: UsageLedger | None = None):
        self.model_id = model_id
        self.generation_temperature = generation_temperature
        self.repair_temperature = repair_temperature
        self.max_output_tokens = max_output_tokens
        self.max_retries = max_retries
        self.backoff = backoff
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.limiter = TokenBucket(requests_per_minute) if requests_per_minute > 0 else None
        self.log: list[ChatRequest] = []
        self._log_lock = threading.Lock()

    def temperature_for(self, stage: str) -> float:
        return self.repair_temperature if stage == "repair" else self.generation_temperature

    def request(self, stage: str, messages: Sequence[tuple[str, str]], *, function: str = "",
                tag: str = "") -> ChatRequest:
        return ChatRequest(stage, tuple((r, c) for r, c in messages), self.temperature_for(stage),
                           self.max_output_tokens, self.model_id, function, tag)

    def complete(self, stage: str, messages: Sequence[tuple[str, str]], *, function: str = "",
                 tag: str = "") -> ChatResponse:
        return self.chat(self.request(stage, messages, function=function, tag=tag))

    def chat(self, req: ChatRequest) -> ChatResponse:
        if req.temperature != self.temperature_for(req.stage):
            raise ValueError(f"{req.stage} request at temperature {req.temperature}, "
                             f"policy requires {self.temperature_for(req.stage)}")
        with self._log_lock:
            self.log.append(req)
        attempt = 0
        while True:
            if self.limiter is not None:
                self.limiter.acquire()
            try:
                resp = self._send(req)
                break
            except TransientError as exc:
                attempt += 1
                if attempt > self.max_retries:
                    raise LlmUnavailable(f"{req.stage}: {exc} after {self.max_retries} retries") from exc
                delay = self.backoff * (2 ** (attempt - 1)) * (1 + random.random() * 0.1)
                log.warning("transient LLM failure (%s); retrying in %.1fs", exc, delay)
                time.sleep(delay)
        self.ledger.record(req.stage, req.function, resp.prompt_tokens, resp.completion_tokens)
        return resp

    def _send(self, req: ChatRequest) -> ChatResponse:  # pragma: no cover - abstract
        raise NotImplementedError


class HttpChatClient(LlmClient):
    """Any endpoint speaking the chat-completions JSON shape."""

    def __init__(self, base_url: str, api_key: str | None, model_id: str, *, timeout: float = 120.0, **kw):
        super().__init__(model_id, **kw)
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout

    def _send(self, req: ChatRequest) -> ChatResponse:
        import httpx

        body = {
            "model": req.model_id,
            "messages": [{"role": r, "content": c} for r, c in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            r = httpx.post(f"{self.base_url}/chat/completions", json=body, headers=headers, timeout=self.timeout)
        except httpx.TransportError as exc:
            raise TransientError(str(exc)) from exc
        if r.status_code == 429 or r.status_code >= 500:
            raise TransientError(f"HTTP {r.status_code}")
        if r.status_code != 200:
            raise ProviderError(r.status_code, r.text)
        try:
            data = r.json()
            text = data["choices"][0]["message"]["content"] or ""
            usage = data.get("usage") or {}
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(r.status_code, r.text) from exc
        return ChatResponse(text, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))


def estimate_tokens(text: str) -> int:
    return max(1, len(text) // 4) if text else 0


@dataclass
class _Entry:
    responses: list[str]
    usage: tuple[int, int] | None = None
    served: int = 0

    def next(self) -> str:
        text = self.responses[min(self.served, len(self.responses) - 1)]
        self.served += 1
        return text


@dataclass
class Script:
    by_fingerprint: dict[tuple[str, str], _Entry] = field(default_factory=dict)
    by_tag: dict[tuple[str, str], _Entry] = field(default_factory=dict)
    queues: dict[str, deque] = field(default_factory=dict)


class ScriptedLlm(LlmClient):
    """Deterministic mock answering from a script; unscripted requests raise :class:`ScriptMiss`.

    Lookup order: exact prompt fingerprint, then request tag, then the stage's
    fallback queue. Entries holding a list of responses serve them in order and
    then repeat the last one.
    """

    def __init__(self, script: Script | None = None, **kw):
        kw.setdefault("model_id", "scripted")
        super().__init__(**kw)
        self.script = script or Script()
        self._lock = threading.Lock()
        self.misses: list[ChatRequest] = []

    def _send(self, req: ChatRequest) -> ChatResponse:
        prompt_text = "\n".join(c for _, c in req.messages)
        with self._lock:
            entry = self.script.by_fingerprint.get((req.stage, req.fingerprint))
            if entry is None and req.tag:
                entry = self.script.by_tag.get((req.stage, req.tag))
            if entry is not None:
                text, usage = entry.next(), entry.usage
            else:
                queue = self.script.queues.get(req.stage)
                if not queue:
                    self.misses.append(req)
                    raise ScriptMiss(req.fingerprint, req.stage, req.tag)
                item = queue.popleft()
                text, usage = item if isinstance(item, tuple) else (item, None)
        if usage is None:
            usage = (estimate_tokens(prompt_text), estimate_tokens(text))
        return ChatResponse(text, *usage)

    def add(self, stage: str, response: str | list[str], *, tag: str | None = None,
            messages: Sequence[tuple[str, str]] | None = None, usage: tuple[int, int] | None = None) -> None:
        entry = _Entry([response] if isinstance(response, str) else list(response), usage)
        if messages is not None:
            self.script.by_fingerprint[(stage, fingerprint(stage, messages))] = entry
        elif tag is not None:
            self.script.by_tag[(stage, tag)] = entry
        else:
            self.script.queues.setdefault(stage, deque()).extend(entry.responses)


def _load_response(item: dict, base: Path) -> list[str]:
    if "response" in item:
        r = item["response"]
        return [r] if isinstance(r, str) else list(r)
    if "response_file" in item:
        files = item["response_file"]
        files = [files] if isinstance(files, str) else files
        return [(base / f).read_text(encoding="utf-8") for f in files]
    raise MalformedScript(f"entry without response: {item}")


_DIR_RULES = (
    # (stage, glob, tag builder from the path parts relative to the stage directory)
    ("describe", "describe/*.txt", lambda p: f"describe:{p.stem}"),
    ("opmap", "opmap/*.json", lambda p: f"opmap:{p.stem.replace('.retry', '')}" + (":retry" if p.stem.endswith(".retry") else "")),
    ("synth", "synth/*/*.c", lambda p: f"synth:{p.parent.name}:{p.stem.replace('.retry', '')}"
                                       + (":retry" if p.stem.endswith(".retry") else "")),
    ("repair", "repair/*/*.txt", lambda p: "repair:{}:{}:{}".format(p.parent.name, *p.stem.split(".", 1))),
    ("repair", "repair/*/*.c", lambda p: "repair:{}:{}:{}".format(p.parent.name, *p.stem.split(".", 1))),
)


def _load_into(script: Script, path: Path, seen: set[Path]) -> None:
    path = path.resolve()
    if path in seen:
        raise MalformedScript(f"script include cycle at {path}")
    seen.add(path)
    if path.is_dir():
        index = path / "script.json"
        data = _read_script_json(index) if index.exists() else {}
        for inc in data.get("include", []):
            _load_into(script, path / inc, seen)
        for stage, pattern, tag_of in _DIR_RULES:
            for f in sorted(path.glob(pattern)):
                script.by_tag[(stage, tag_of(f))] = _Entry([f.read_text(encoding="utf-8")])
        _apply_json(script, data, path)
    else:
        data = _read_script_json(path)
        for inc in data.get("include", []):
            _load_into(script, path.parent / inc, seen)
        _apply_json(script, data, path.parent)


def _read_script_json(path: Path) -> dict:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedScript(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedScript(f"{path}: root must be an object")
    return data


def _apply_json(script: Script, data: dict, base: Path) -> None:
    for item in data.get("entries", []):
        if not isinstance(item, dict) or item.get("stage") not in STAGES:
            raise MalformedScript(f"bad entry {item!r}")
        usage = tuple(item["usage"]) if "usage" in item else None
        if usage is not None and (len(usage) != 2 or min(usage) < 0):
            raise MalformedScript(f"bad usage in {item!r}")
        entry = _Entry(_load_response(item, base), usage)
        if "fingerprint" in item:
            script.by_fingerprint[(item["stage"], item["fingerprint"])] = entry
        elif "tag" in item:
            script.by_tag[(item["stage"], item["tag"])] = entry
        else:
            raise MalformedScript(f"entry needs a fingerprint or a tag: {item!r}")
    for stage, items in data.get("queues", {}).items():
        if stage not in STAGES or not isinstance(items, list):
            raise MalformedScript(f"bad queue for stage {stage!r}")
        q = script.queues.setdefault(stage, deque())
        for it in items:
            if isinstance(it, str):
                q.append(it)
            elif isinstance(it, dict):
                usage = tuple(it["usage"]) if "usage" in it else None
                q.extend((r, usage) for r in _load_response(it, base))
            else:
                raise MalformedScript(f"bad queue item {it!r}")


def load_script(path: str | Path, **client_kw) -> ScriptedLlm:
    """Build a :class:`ScriptedLlm` from a JSON script file or a script directory.

    JSON format::

        {"include": ["../base_script"],
         "entries": [{"stage": "synth", "fingerprint": "...", "response": "..."},
                     {"stage": "repair", "tag": "repair:insert:path2:iter1",
                      "response_file": "responses/fix.c", "usage": [100, 50]}],
         "queues": {"repair": ["...", "..."]}}

    A directory is read by convention (``describe/<fn>.txt``,
    ``opmap/<fn>[.retry].json``, ``synth/<fn>/path<id>[.retry].c``,
    ``repair/<fn>/path<id>.iter<n>.{c,txt}``) plus an optional ``script.json``
    whose entries take precedence. Included scripts load first and are
    overridden by the including one.
    """
    path = Path(path)
    if not path.exists():
        raise MalformedScript(f"{path}: no such script")
    script = Script()
    _load_into(script, path, set())
    return ScriptedLlm(script, **client_kw)


def client_from_config(cfg, mock_script: str | Path | None = None, ledger: UsageLedger | None = None) -> LlmClient:
    common = dict(
        generation_temperature=cfg.repair.generation_temperature,
        repair_temperature=cfg.repair.repair_temperature,
        max_output_tokens=cfg.llm.max_output_tokens,
        ledger=ledger,
    )
    if mock_script is not None:
        return load_script(mock_script, **common)
    return HttpChatClient(cfg.llm.base_url, os.environ.get(cfg.llm.api_key_env), cfg.llm.model,
                          timeout=cfg.llm.timeout, requests_per_minute=cfg.llm.requests_per_minute,
                          max_retries=cfg.llm.max_retries, **common)
