"""Helper pool, embeddings and similarity-threshold retrieval."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .csource import FunctionUnit, Signature
from .errors import DimensionMismatch, EmbedderUnavailable, PipelineError, ZeroVector
from .util import content_hash, write_json

log = logging.getLogger(__name__)

DEFAULT_DIM = 256
INDEX_NAME = "helpers_index.json"


@dataclass(frozen=True)
class Helper:
    name: str
    signature: Signature
    desc: str
    impl: str | None = None
    origin: str = "pool"  # pool | created

    def __post_init__(self):
        if not self.desc.strip():
            raise ValueError(f"helper {self.name} has an empty description")
        if self.origin not in ("pool", "created"):
            raise ValueError(f"bad origin {self.origin!r}")

    @property
    def prototype(self) -> str:
        return self.signature.prototype(self.name)

    def stripped(self) -> "Helper":
        return replace(self, impl=None)

    def to_json(self, with_impl: bool = True) -> dict:
        d = {"name": self.name, "signature": self.signature.to_json(), "desc": self.desc, "origin": self.origin}
        if with_impl and self.impl is not None:
            d["impl"] = self.impl
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Helper":
        return cls(d["name"], Signature.from_json(d["signature"]), d["desc"], d.get("impl"), d.get("origin", "pool"))


@dataclass
class HelperCatalog:
    entries: list[tuple[Helper, float]] = field(default_factory=list)

    @property
    def names(self) -> list[str]:
        return [h.name for h, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def to_json(self) -> list[dict]:
        return [dict(h.to_json(with_impl=False), score=round(s, 6)) for h, s in self.entries]

    @classmethod
    def from_json(cls, d: list[dict]) -> "HelperCatalog":
        return cls([(Helper.from_json(e), float(e["score"])) for e in d])


# ---------------------------------------------------------------------------
# embedders


class Embedder(Protocol):
    dim: int
    key: str

    def embed_many(self, texts: Sequence[str]) -> np.ndarray: ...


_C_WORDS = frozenset(
    """
    auto break case char const continue default do double else enum extern float for goto if inline
    int long register restrict return short signed sizeof static struct switch typedef union unsigned
    void volatile while null true false bool size_t define include
    a an the of to in on for and or is are be by with this that it as at from into its if then
    """.split()
)
_IDENT = re.compile(r"[A-Za-z][A-Za-z0-9]*")
_CAMEL = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


_SYNONYMS = {
    "malloc": "alloc", "calloc": "alloc", "realloc": "alloc", "allocate": "alloc", "allocation": "alloc",
    "allocated": "alloc", "allocator": "alloc", "allocs": "alloc", "dealloc": "free", "release": "free",
    "cleanup": "free", "destroy": "free", "strcmp": "string", "strlen": "string", "str": "string",
    "arr": "array", "len": "length", "cnt": "count", "init": "initialize", "eq": "equal",
}


def _stem(word: str) -> str:
    word = _SYNONYMS.get(word, word)
    for suffix in ("ations", "ation", "ings", "ing", "ed", "es", "s"):
        if word.endswith(suffix) and len(word) - len(suffix) >= 4:
            word = word[: -len(suffix)]
            break
    return _SYNONYMS.get(word, word)


def text_tokens(text: str) -> list[str]:
    """Identifier-aware word split: snake_case and camelCase parts, lowercased, lightly stemmed."""
    out = []
    for word in _IDENT.findall(text.replace("_", " ")):
        for part in _CAMEL.findall(word):
            p = part.lower()
            if len(p) > 1 and p not in _C_WORDS and not p.isdigit():
                out.append(_stem(p))
    return out


class HashingEmbedder:
    """Deterministic offline embedder: hashed bag of identifier tokens, unit L2 norm.

    Term weights are sublinear (1 + ln tf) so an identifier repeated throughout
    a function body does not drown out the rest of its vocabulary.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.key = f"hash-v2-{dim}"

    def _bucket(self, token: str) -> int:
        h = hashlib.blake2b(token.encode(), digest_size=8).digest()
        return int.from_bytes(h, "little") % self.dim

    def embed_one(self, text: str) -> np.ndarray:
        counts: dict[int, int] = {}
        for t in text_tokens(text) or [text]:
            b = self._bucket(t)
            counts[b] = counts.get(b, 0) + 1
        vec = np.zeros(self.dim)
        for b, tf in counts.items():
            vec[b] = 1.0 + math.log(tf)
        return vec / np.linalg.norm(vec)

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.embed_one(t) for t in texts]) if texts else np.zeros((0, self.dim))


class RemoteEmbedder:
    """Client for an embeddings endpoint: {model, input: [..]} -> {data: [{embedding}]}."""

    def __init__(self, base_url: str, model: str, dim: int, api_key: str | None = None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.api_key = api_key
        self.timeout = timeout
        self.key = f"remote-{model}-{dim}"

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        import httpx

        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            r = httpx.post(f"{self.base_url}/embeddings", json={"model": self.model, "input": list(texts)},
                           headers=headers, timeout=self.timeout)
            r.raise_for_status()
            rows = [d["embedding"] for d in r.json()["data"]]
        except (httpx.HTTPError, KeyError, ValueError, TypeError) as exc:
            raise EmbedderUnavailable(f"embedding request failed: {exc}") from exc
        arr = np.asarray(rows, dtype=float)
        if arr.shape != (len(texts), self.dim):
            raise DimensionMismatch(f"expected {len(texts)}x{self.dim} embeddings, got {arr.shape}")
        return arr


def make_embedder(cfg) -> Embedder:
    if cfg.backend == "hash":
        return HashingEmbedder(cfg.dim)
    if cfg.backend == "remote":
        if not cfg.base_url or not cfg.model:
            raise EmbedderUnavailable("remote embedder needs base_url and model")
        return RemoteEmbedder(cfg.base_url, cfg.model, cfg.dim, os.environ.get(cfg.api_key_env))
    raise EmbedderUnavailable(f"unknown embedder backend {cfg.backend!r}")


def embed(text: str, embedder: Embedder) -> np.ndarray:
    if not text:
        raise ValueError("cannot embed empty text")
    vec = embedder.embed_many([text])[0]
    if vec.shape != (embedder.dim,):
        raise DimensionMismatch(f"embedding has shape {vec.shape}, store dimension is {embedder.dim}")
    return vec


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity of an all-zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


# ---------------------------------------------------------------------------
# pool


def load_pool(pool_dir: str | Path) -> list[Helper]:
    """Read ``<pool>/<helper>/{impl.c,meta.json}`` entries, sorted by name."""
    pool_dir = Path(pool_dir)
    helpers = []
    if not pool_dir.is_dir():
        return helpers
    for d in sorted(p for p in pool_dir.iterdir() if p.is_dir()):
        meta_path, impl_path = d / "meta.json", d / "impl.c"
        if not meta_path.exists():
            continue
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        impl = impl_path.read_text(encoding="utf-8") if impl_path.exists() else ""
        if not impl.strip():
            raise PipelineError(f"pool helper {d.name} has no implementation")
        helpers.append(Helper(meta["name"], Signature.from_json(meta["signature"]), meta["desc"], impl, "pool"))
    return helpers


def _helper_text(h: Helper) -> str:
    return f"{h.name} {h.desc}"


class HelperStore:
    """Pool helpers with their embeddings; read-only after construction."""

    def __init__(self, helpers: Iterable[Helper], embedder: Embedder, cache_path: Path | None = None):
        self.helpers = list(helpers)
        self.embedder = embedder
        self.vectors = self._vectors(cache_path)

    def _vectors(self, cache_path: Path | None) -> np.ndarray:
        key = content_hash(self.embedder.key, *(_helper_text(h) for h in self.helpers))
        if cache_path is not None and cache_path.exists():
            try:
                data = json.loads(cache_path.read_text())
                if data.get("key") == key:
                    return np.asarray(data["vectors"], dtype=float).reshape(len(self.helpers), self.embedder.dim)
            except (ValueError, KeyError):
                log.warning("ignoring unreadable %s", cache_path)
        vecs = self.embedder.embed_many([_helper_text(h) for h in self.helpers]).reshape(-1, self.embedder.dim)
        if cache_path is not None:
            write_json(cache_path, {"key": key, "names": [h.name for h in self.helpers],
                                    "vectors": vecs.tolist()})
        return vecs

    def by_name(self) -> dict[str, Helper]:
        return {h.name: h for h in self.helpers}

    def scores(self, text: str) -> list[float]:
        q = embed(text, self.embedder)
        return [cosine_similarity(q, v) if np.any(v) else 0.0 for v in self.vectors]

    def retrieve_text(self, text: str, theta: float) -> HelperCatalog:
        if not 0.0 <= theta < 1.0:
            raise ValueError("theta must be in [0, 1)")
        scored = [(h.stripped(), s) for h, s in zip(self.helpers, self.scores(text)) if s > theta]
        scored.sort(key=lambda e: (-e[1], e[0].name))
        return HelperCatalog(scored)


def retrieve(fn: FunctionUnit, store: HelperStore, theta: float) -> HelperCatalog:
    """Helpers whose description embedding scores strictly above ``theta`` against the function source."""
    return store.retrieve_text(f"{fn.name}\n{fn.body}", theta)
