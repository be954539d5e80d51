import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import numpy.typing as npt

from src.errors import ConfigError
from src.models.transcript import Chunk

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75
DEFAULT_RRF_LAMBDA = 60.0
DEFAULT_QUERY = "Extract subjective, objective, assessment, and plan details from a given transcript"


@dataclass(frozen=True)
class Bm25Stats:
    """Okapi BM25 corpus statistics over the chunks of one transcript."""

    doc_freq: dict[str, int]
    doc_len: list[int]
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    @property
    def n_docs(self) -> int:
        return len(self.doc_len)

    @property
    def avgdl(self) -> float:
        return sum(self.doc_len) / len(self.doc_len) if self.doc_len else 0.0


@dataclass(frozen=True, eq=False)
class ChunkIndex:
    """
    ChunkIndex

    Chunk texts, their embeddings and BM25 statistics for a single transcript. Immutable after build.

    Attributes:
        transcript_id (str):
            Transcript the chunks were split from.
        chunks (list[Chunk]):
            Chunks ordered by ord.
        vectors (np.ndarray):
            Row i is the L2-normalized embedding of chunks[i], shape (len(chunks), dim).
        bm25 (Bm25Stats):
            Term statistics for sparse scoring.
        provider_name (str), dim (int):
            Recorded so a query is never scored against vectors from another embedding space.
    """

    transcript_id: str
    chunks: list[Chunk]
    vectors: npt.NDArray[np.float64]
    bm25: Bm25Stats
    provider_name: str
    dim: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ChunkIndex):
            return NotImplemented
        return (
            self.transcript_id == other.transcript_id
            and self.chunks == other.chunks
            and self.provider_name == other.provider_name
            and self.dim == other.dim
            and self.bm25 == other.bm25
            and self.vectors.shape == other.vectors.shape
            and bool(np.array_equal(self.vectors, other.vectors))
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def n_docs(self) -> int:
        return len(self.chunks)


@dataclass
class RetrievalQuery:
    """Retrieval prompt, its vector is embedded on first use and cached."""

    text: str = DEFAULT_QUERY
    vector: Optional[npt.NDArray[np.float64]] = None


@dataclass(frozen=True)
class FusionConfig:
    w_sparse: float = 0.5
    w_dense: float = 0.5
    rrf_lambda: float = DEFAULT_RRF_LAMBDA
    top_k_per_retriever: int = 15
    top_k_final: int = 17

    def validate(self) -> "FusionConfig":
        for name in ("w_sparse", "w_dense"):
            weight = getattr(self, name)
            if not 0.0 <= weight <= 1.0:
                raise ConfigError(f"{name} must be within [0, 1], got {weight}")
        if not math.isclose(self.w_sparse + self.w_dense, 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ConfigError(f"w_sparse + w_dense must equal 1, got {self.w_sparse + self.w_dense}")
        if not self.rrf_lambda > 0:
            raise ConfigError(f"rrf_lambda must be positive, got {self.rrf_lambda}")
        if self.top_k_per_retriever < 1:
            raise ConfigError(f"top_k_per_retriever must be at least 1, got {self.top_k_per_retriever}")
        if self.top_k_final < 1:
            raise ConfigError(f"top_k_final must be at least 1, got {self.top_k_final}")
        return self


@dataclass(frozen=True)
class Hit:
    """One entry of a single retriever's ranked list, rank is 1-based."""

    chunk_ord: int
    score: float
    rank: int


@dataclass(frozen=True)
class RankedCandidate:
    chunk_ord: int
    fused_score: float
    sparse_rank: Optional[int] = None
    dense_rank: Optional[int] = None
    sparse_score: Optional[float] = None
    dense_score: Optional[float] = None


@dataclass(frozen=True)
class FusedContext:
    """Selected chunks in transcript order, plus every fused candidate for auditing."""

    selected: list[Chunk]
    concatenated_text: str
    candidates: list[RankedCandidate] = field(default_factory=list)

    @property
    def selected_ords(self) -> list[int]:
        return [chunk.ord for chunk in self.selected]
