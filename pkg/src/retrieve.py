"""
Retriever-based filtering of a transcript before generation.

A sparse (BM25) and a dense (cosine) retriever each rank the chunks of one transcript against the
retrieval query. Their ranked lists are fused with weighted Reciprocal Rank Fusion:

    fused(c) = w_sparse / (lambda + sparse_rank(c)) + w_dense / (lambda + dense_rank(c))

where a retriever that did not return c contributes 0. The fused order depends on scores only
through ranks, raw scores are kept on each candidate for auditing. The top candidates are put
back into transcript order and concatenated into the generation context.

Ties are broken by ascending chunk ord everywhere.
"""

import logging
import math
from collections import Counter

import numpy as np
import numpy.typing as npt

from src.embed import EmbeddingProvider, embed_batch
from src.errors import ConfigError, DimensionError, PreconditionError, ZeroVectorError
from src.index import build_index
from src.infra.text import terms
from src.models.retrieval import (
    DEFAULT_B,
    DEFAULT_K1,
    ChunkIndex,
    FusedContext,
    FusionConfig,
    Hit,
    RankedCandidate,
    RetrievalQuery,
)
from src.models.transcript import Transcript

logger = logging.getLogger(__name__)


# ==== Sparse retrieval


def bm25_scores(index: ChunkIndex, query_text: str) -> npt.NDArray[np.float64]:
    stats = index.bm25
    n_docs = stats.n_docs
    scores = np.zeros(n_docs, dtype=np.float64)
    if n_docs == 0 or stats.avgdl == 0.0:
        return scores

    doc_len = np.asarray(stats.doc_len, dtype=np.float64)
    length_norm = stats.k1 * (1.0 - stats.b + stats.b * doc_len / stats.avgdl)
    term_counts = [Counter(terms(chunk.text)) for chunk in index.chunks]

    for term in terms(query_text):
        df = stats.doc_freq.get(term, 0)
        if df == 0:
            continue
        idf = math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
        tf = np.array([counts[term] for counts in term_counts], dtype=np.float64)
        saturation = np.divide(
            tf * (stats.k1 + 1.0),
            tf + length_norm,
            out=np.zeros_like(tf),
            where=tf > 0,
        )
        scores += idf * saturation
    return scores


def sparse_retrieve(index: ChunkIndex, query_text: str, k: int) -> list[Hit]:
    """Chunks with a positive BM25 score, best first, at most k of them."""
    _check_k(k)
    scores = bm25_scores(index, query_text)
    matched = [(chunk_ord, float(score)) for chunk_ord, score in enumerate(scores) if score > 0.0]
    return _rank(matched, k)


# ==== Dense retrieval


def embed_query(query: RetrievalQuery, provider: EmbeddingProvider) -> RetrievalQuery:
    if not query.text or not query.text.strip():
        raise PreconditionError("Retrieval query text is empty")
    if query.vector is None:
        query.vector = embed_batch(provider, [query.text])[0]
    return query


def dense_retrieve(index: ChunkIndex, query: RetrievalQuery, k: int) -> list[Hit]:
    """Exact cosine scan over every chunk vector, best first, at most k of them."""
    _check_k(k)
    if query.vector is None:
        raise PreconditionError("Query has no vector, call embed_query first")

    vector = np.asarray(query.vector, dtype=np.float64)
    if vector.shape != (index.dim,):
        raise DimensionError(f"Query dim {vector.shape[-1]} does not match index dim {index.dim}")
    query_norm = float(np.linalg.norm(vector))
    if query_norm == 0.0:
        raise ZeroVectorError("Query embedding is the zero vector")

    row_norms = np.linalg.norm(index.vectors, axis=1)
    # chunks without terms carry a zero vector, they score 0 instead of NaN
    cosines = np.divide(
        index.vectors @ vector,
        row_norms * query_norm,
        out=np.zeros(index.n_docs, dtype=np.float64),
        where=row_norms > 0,
    )
    cosines = np.clip(cosines, -1.0, 1.0)
    return _rank([(chunk_ord, float(score)) for chunk_ord, score in enumerate(cosines)], k)


def _rank(scored: list[tuple[int, float]], k: int) -> list[Hit]:
    ordered = sorted(scored, key=lambda item: (-item[1], item[0]))[:k]
    return [
        Hit(chunk_ord=chunk_ord, score=score, rank=rank) for rank, (chunk_ord, score) in enumerate(ordered, start=1)
    ]


def _check_k(k: int):
    if k < 1:
        raise PreconditionError(f"k must be at least 1, got {k}")


# ==== Fusion


def rrf_fuse(sparse_ranked: list[Hit], dense_ranked: list[Hit], cfg: FusionConfig) -> list[RankedCandidate]:
    cfg.validate()
    _check_ranked(sparse_ranked, "sparse")
    _check_ranked(dense_ranked, "dense")

    sparse_by_ord = {hit.chunk_ord: hit for hit in sparse_ranked}
    dense_by_ord = {hit.chunk_ord: hit for hit in dense_ranked}

    candidates = []
    for chunk_ord in sparse_by_ord.keys() | dense_by_ord.keys():
        sparse_hit, dense_hit = sparse_by_ord.get(chunk_ord), dense_by_ord.get(chunk_ord)
        fused = 0.0
        if sparse_hit is not None:
            fused += cfg.w_sparse / (cfg.rrf_lambda + sparse_hit.rank)
        if dense_hit is not None:
            fused += cfg.w_dense / (cfg.rrf_lambda + dense_hit.rank)
        candidates.append(
            RankedCandidate(
                chunk_ord=chunk_ord,
                fused_score=fused,
                sparse_rank=sparse_hit.rank if sparse_hit is not None else None,
                dense_rank=dense_hit.rank if dense_hit is not None else None,
                sparse_score=sparse_hit.score if sparse_hit is not None else None,
                dense_score=dense_hit.score if dense_hit is not None else None,
            )
        )

    return sorted(candidates, key=lambda c: (-c.fused_score, c.chunk_ord))


def _check_ranked(hits: list[Hit], name: str):
    if [hit.rank for hit in hits] != list(range(1, len(hits) + 1)):
        raise PreconditionError(f"{name} ranks must run 1..{len(hits)} in list order")
    if len({hit.chunk_ord for hit in hits}) != len(hits):
        raise PreconditionError(f"{name} list repeats a chunk")


# ==== Context reconstruction


def reconstruct_context(index: ChunkIndex, fused: list[RankedCandidate], top_k_final: int) -> FusedContext:
    if top_k_final < 1:
        raise ConfigError(f"top_k_final must be at least 1, got {top_k_final}")

    selected_ords = sorted(candidate.chunk_ord for candidate in fused[:top_k_final])
    selected = [index.chunks[chunk_ord] for chunk_ord in selected_ords]
    return FusedContext(
        selected=selected,
        concatenated_text=" ".join(chunk.text for chunk in selected),
        candidates=list(fused),
    )


def filter_index(
    index: ChunkIndex,
    provider: EmbeddingProvider,
    query: RetrievalQuery,
    cfg: FusionConfig,
) -> FusedContext:
    cfg.validate()
    if provider.name != index.provider_name:
        raise ConfigError(f"Index was built with '{index.provider_name}', cannot query it with '{provider.name}'")

    embed_query(query, provider)
    sparse = sparse_retrieve(index, query.text, cfg.top_k_per_retriever)
    dense = dense_retrieve(index, query, cfg.top_k_per_retriever)
    fused = rrf_fuse(sparse, dense, cfg)
    context = reconstruct_context(index, fused, cfg.top_k_final)

    logger.debug(
        "Transcript '%s': %d sparse + %d dense hits, %d fused, kept %d of %d chunks",
        index.transcript_id,
        len(sparse),
        len(dense),
        len(fused),
        len(context.selected),
        index.n_docs,
    )
    return context


def filter_transcript(
    transcript: Transcript,
    provider: EmbeddingProvider,
    query: RetrievalQuery,
    cfg: FusionConfig,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> FusedContext:
    return filter_index(build_index(transcript, provider, k1, b), provider, query, cfg)


def explain(context: FusedContext, index: ChunkIndex) -> list[dict]:
    """Audit records for every fused candidate, in fused order."""
    selected = set(context.selected_ords)
    return [
        {
            "ord": candidate.chunk_ord,
            "text": index.chunks[candidate.chunk_ord].text,
            "sparse_rank": candidate.sparse_rank,
            "dense_rank": candidate.dense_rank,
            "sparse_score": candidate.sparse_score,
            "dense_score": candidate.dense_score,
            "fused_score": candidate.fused_score,
            "selected": candidate.chunk_ord in selected,
        }
        for candidate in context.candidates
    ]
