"""Prompt-to-state embedding.

The policy observes prompts as fixed-dimension unit vectors. A remote
provider (sentence-transformer service) and a deterministic local fallback
(signed feature hashing of character trigrams) are interchangeable because
both normalize to the same dimension.
"""
from __future__ import annotations

import hashlib
import json
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmbeddingServiceUnavailable

DEFAULT_DIM = 384
_NGRAM = 3


class EmbeddingSource(Enum):
    REMOTE = "remote"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class StateVector:
    values: np.ndarray
    source: EmbeddingSource

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("state vector has non-finite entries")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        basis = np.zeros_like(vec)
        basis[0] = 1.0
        return basis
    return vec / norm


def fallback_embed(prompt: str, dim: int = DEFAULT_DIM) -> StateVector:
    """Hash character trigrams into signed buckets, then L2-normalize.

    Inputs with no trigram after trimming map to the first basis vector.
    Pure function of (prompt, dim).
    """
    if dim < 8:
        raise ValueError(f"dim must be >= 8, got {dim}")
    text = prompt.strip()
    vec = np.zeros(dim, dtype=np.float64)
    if len(text) < _NGRAM:
        vec[0] = 1.0
        return StateVector(values=vec, source=EmbeddingSource.FALLBACK)
    for i in range(len(text) - _NGRAM + 1):
        gram = text[i : i + _NGRAM]
        h = int.from_bytes(
            hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest(), "big"
        )
        bucket = h % dim
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        vec[bucket] += sign
    return StateVector(values=_normalize(vec), source=EmbeddingSource.FALLBACK)


class FallbackEmbedder:
    """Hermetic provider: trigram feature hashing, no network."""

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim

    def embed(self, prompt: str) -> StateVector:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        return fallback_embed(prompt, self.dim)


class RemoteEmbedder:
    """JSON POST {input} -> {embedding}; output re-normalized locally."""

    def __init__(self, base_url: str, dim: int = DEFAULT_DIM, timeout_ms: int = 10_000):
        self.base_url = base_url
        self.dim = dim
        self.timeout_ms = timeout_ms

    def embed(self, prompt: str) -> StateVector:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        body = json.dumps({"input": prompt}).encode("utf-8")
        request = urllib.request.Request(
            self.base_url,
            data=body,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout_ms / 1000.0) as resp:
                data = json.loads(resp.read().decode("utf-8"))
            raw = np.asarray(data["embedding"], dtype=np.float64)
        except (urllib.error.URLError, TimeoutError, KeyError, ValueError) as exc:
            raise EmbeddingServiceUnavailable(str(exc)) from exc
        if raw.shape != (self.dim,):
            raise EmbeddingServiceUnavailable(
                f"provider returned shape {raw.shape}, expected ({self.dim},)"
            )
        if not np.all(np.isfinite(raw)):
            raise EmbeddingServiceUnavailable("provider returned non-finite entries")
        return StateVector(values=_normalize(raw), source=EmbeddingSource.REMOTE)


class ResilientEmbedder:
    """Remote provider with optional fallback on service failure."""

    def __init__(self, remote: RemoteEmbedder, fall_back_on_error: bool = True):
        self.remote = remote
        self.fall_back_on_error = fall_back_on_error
        self.dim = remote.dim

    def embed(self, prompt: str) -> StateVector:
        try:
            return self.remote.embed(prompt)
        except EmbeddingServiceUnavailable:
            if not self.fall_back_on_error:
                raise
            return fallback_embed(prompt, self.dim)


class CachingEmbedder:
    """In-memory memoization wrapper, safe under concurrent readers."""

    def __init__(self, inner):
        self.inner = inner
        self.dim = inner.dim
        self._cache: dict[str, StateVector] = {}
        self._lock = threading.Lock()

    def embed(self, prompt: str) -> StateVector:
        with self._lock:
            hit = self._cache.get(prompt)
        if hit is not None:
            return hit
        vec = self.inner.embed(prompt)
        with self._lock:
            self._cache[prompt] = vec
        return vec
