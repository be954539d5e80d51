"""
Embedding providers and vector math.

Every vector leaving embed_batch is L2-normalized, so cosine against a normalized query is a dot
product. Two providers exist: an HTTP client for an OpenAI-compatible embeddings endpoint and a
deterministic hash embedder used offline and in tests.
"""

import hashlib
import logging
from functools import lru_cache
from typing import Optional, Protocol

import numpy as np
import numpy.typing as npt
import requests

from src.errors import DimensionError, PreconditionError, ProviderError, ZeroVectorError
from src.infra.dict import get_nested
from src.infra.http import build_session, check_base_url, post_json
from src.infra.text import terms
from src.settings import Settings

logger = logging.getLogger(__name__)

Vector = npt.NDArray[np.float64]

# Golden vectors in tests depend on this key, changing it changes every test embedding
TEST_EMBED_SEED = b"convsoap-test-embedder-v1"


class EmbeddingProvider(Protocol):
    """Maps texts to vectors of a fixed dim, the same text always maps to the same vector."""

    name: str
    dim: int

    def embed(self, texts: list[str]) -> list[Vector]: ...


# ==== Vector math


def norm(vector: Vector) -> float:
    return float(np.linalg.norm(vector))


def is_zero(vector: Vector) -> bool:
    return not np.any(vector)


def normalize(vector: Vector) -> Vector:
    """Unit-length copy, a zero vector comes back as zeros."""
    length = norm(vector)
    if length == 0.0:
        return np.zeros_like(vector, dtype=np.float64)
    return np.asarray(vector, dtype=np.float64) / length


def cosine(a: Vector, b: Vector) -> float:
    if a.shape != b.shape:
        raise DimensionError(f"Cannot compare vectors of dims {a.shape[-1]} and {b.shape[-1]}")
    a_norm, b_norm = norm(a), norm(b)
    if a_norm == 0.0 or b_norm == 0.0:
        raise ZeroVectorError("Cosine is undefined for the zero vector")
    return float(np.clip(np.dot(a, b) / (a_norm * b_norm), -1.0, 1.0))


# ==== Providers


def embed_batch(provider: EmbeddingProvider, texts: list[str]) -> list[Vector]:
    if not texts:
        raise PreconditionError("Cannot embed an empty batch")
    if any(not text for text in texts):
        raise PreconditionError("Cannot embed an empty text")

    vectors = provider.embed(texts)
    if len(vectors) != len(texts):
        raise ProviderError(f"Provider '{provider.name}' returned {len(vectors)} vectors for {len(texts)} texts")

    normalized = []
    for text, vector in zip(texts, vectors):
        if vector.shape != (provider.dim,):
            raise DimensionError(f"Provider '{provider.name}' returned dim {vector.shape} instead of {provider.dim}")
        if is_zero(vector):
            logger.warning("Zero embedding for %r, it will never match a dense query", text[:40])
        normalized.append(normalize(vector))
    return normalized


def test_embed(text: str, dim: int) -> Vector:
    """Averages a seeded pseudo-random unit vector per lowercase term, then L2-normalizes.

    Text without terms yields the zero vector.
    """
    if dim < 2:
        raise PreconditionError(f"Embedding dim must be at least 2, got {dim}")

    text_terms = terms(text)
    if not text_terms:
        return np.zeros(dim, dtype=np.float64)

    mean = np.mean([_term_vector(term, dim) for term in text_terms], axis=0)
    return normalize(mean)


# Not a pytest test, the name comes from the provider kind
test_embed.__test__ = False


@lru_cache(maxsize=65536)
def _term_vector(term: str, dim: int) -> Vector:
    digest = hashlib.blake2b(term.encode("utf-8"), digest_size=8, key=TEST_EMBED_SEED).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    vector = normalize(rng.standard_normal(dim))
    vector.setflags(write=False)
    return vector


class TestEmbedder:
    """Offline provider backed by test_embed."""

    __test__ = False

    def __init__(self, dim: int = 64):
        if dim < 2:
            raise PreconditionError(f"Embedding dim must be at least 2, got {dim}")
        self.dim = dim
        self.name = f"test-hash-{dim}"

    def embed(self, texts: list[str]) -> list[Vector]:
        return [test_embed(text, self.dim) for text in texts]


class HttpEmbeddingProvider:
    """Client for POST {base_url}/v1/embeddings. The session is shared, requests keep no other state."""

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int,
        api_key: Optional[str] = None,
        timeout: Optional[float] = None,
    ):
        self.base_url = check_base_url(base_url)
        self.model = model
        self.dim = dim
        self.name = f"http:{model}"
        self.api_key = api_key if api_key is not None else Settings.embed_api_key
        self.timeout = timeout or Settings.http_timeout_seconds
        self._session = build_session()

    def embed(self, texts: list[str]) -> list[Vector]:
        url = self.base_url + Settings.embeddings_path
        try:
            json = post_json(self._session, url, {"model": self.model, "input": texts}, self.api_key, self.timeout)
        except requests.RequestException as err:
            raise ProviderError(f"Embedding request to {url} failed: {err}") from err

        data = get_nested(json, ["data"])
        if not isinstance(data, list) or len(data) != len(texts):
            raise ProviderError(f"Embedding response from {url} has no data for {len(texts)} inputs")

        by_index = {}
        for position, item in enumerate(data):
            embedding = get_nested(item, ["embedding"])
            if not isinstance(embedding, list):
                raise ProviderError(f"Embedding response item {position} has no embedding list")
            index = get_nested(item, ["index"])
            by_index[index if isinstance(index, int) else position] = embedding

        if sorted(by_index) != list(range(len(texts))):
            raise ProviderError("Embedding response indices do not cover the request")

        vectors = []
        for i in range(len(texts)):
            try:
                vector = np.asarray(by_index[i], dtype=np.float64)
            except (TypeError, ValueError) as err:
                raise ProviderError(f"Embedding {i} holds non-numeric values") from err
            if vector.ndim != 1 or not np.all(np.isfinite(vector)):
                raise ProviderError(f"Embedding {i} is not a finite 1-d vector")
            vectors.append(vector)
        return vectors
