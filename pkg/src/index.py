import json
import logging
from collections import Counter
from pathlib import Path
from typing import Any

import numpy as np

from src.corpus import transcript_chunks
from src.embed import EmbeddingProvider, embed_batch
from src.errors import EmptyTranscriptError, ParseError, VersionError
from src.infra.files import write_json_atomic
from src.infra.text import terms
from src.models.retrieval import DEFAULT_B, DEFAULT_K1, Bm25Stats, ChunkIndex
from src.models.transcript import Chunk, Transcript
from src.settings import Settings

logger = logging.getLogger(__name__)


def build_index(
    transcript: Transcript,
    provider: EmbeddingProvider,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> ChunkIndex:
    chunks = transcript_chunks(transcript)
    if not chunks:
        raise EmptyTranscriptError(f"Transcript '{transcript.id}' yields no chunks")

    vectors = embed_batch(provider, [chunk.text for chunk in chunks])
    index = ChunkIndex(
        transcript_id=transcript.id,
        chunks=chunks,
        vectors=np.vstack(vectors),
        bm25=compute_bm25_stats([chunk.text for chunk in chunks], k1, b),
        provider_name=provider.name,
        dim=provider.dim,
    )
    logger.debug("Indexed transcript '%s': %d chunks, dim %d", transcript.id, index.n_docs, index.dim)
    return index


def compute_bm25_stats(texts: list[str], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Stats:
    doc_freq: Counter[str] = Counter()
    doc_len = []
    for text in texts:
        text_terms = terms(text)
        doc_len.append(len(text_terms))
        doc_freq.update(set(text_terms))
    return Bm25Stats(doc_freq=dict(doc_freq), doc_len=doc_len, k1=k1, b=b)


# ==== Persistence


def save_index(index: ChunkIndex, path: str | Path):
    payload = {
        "version": Settings.index_format_version,
        "transcript_id": index.transcript_id,
        "provider": index.provider_name,
        "dim": index.dim,
        "k1": index.bm25.k1,
        "b": index.bm25.b,
        "chunks": [{"ord": chunk.ord, "text": chunk.text} for chunk in index.chunks],
        # json writes floats with their shortest round-trip repr, reload is bit-exact
        "vectors": index.vectors.tolist(),
        "doc_len": index.bm25.doc_len,
        "doc_freq": index.bm25.doc_freq,
    }
    write_json_atomic(Path(path), payload)


def load_index(path: str | Path) -> ChunkIndex:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No index file at '{path}'")

    try:
        payload = json.loads(path.read_text(encoding=Settings.csv_encoding))
    except json.JSONDecodeError as err:
        raise ParseError(f"Index file '{path}' is not valid JSON: {err.msg}", line=err.lineno) from err
    if not isinstance(payload, dict):
        raise ParseError(f"Index file '{path}' must hold a JSON object")

    version = payload.get("version")
    if version != Settings.index_format_version:
        raise VersionError(f"Index format version {version} is not supported, expected {Settings.index_format_version}")

    try:
        return _index_from_payload(payload)
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as err:
        raise ParseError(f"Index file '{path}' is corrupt: {err!r}") from err


def _index_from_payload(payload: dict[str, Any]) -> ChunkIndex:
    transcript_id = str(payload["transcript_id"])
    chunks = [Chunk(transcript_id=transcript_id, ord=int(c["ord"]), text=str(c["text"])) for c in payload["chunks"]]
    if [chunk.ord for chunk in chunks] != list(range(len(chunks))):
        raise ParseError("Chunk ords must be contiguous from 0")

    dim = int(payload["dim"])
    vectors = np.asarray(payload["vectors"], dtype=np.float64)
    if vectors.shape != (len(chunks), dim):
        raise ParseError(f"Vectors shape {vectors.shape} does not match {len(chunks)} chunks of dim {dim}")

    doc_len = [int(n) for n in payload["doc_len"]]
    if doc_len != [len(terms(chunk.text)) for chunk in chunks]:
        raise ParseError("doc_len does not match the chunk texts")
    doc_freq = {str(term): int(count) for term, count in payload["doc_freq"].items()}

    return ChunkIndex(
        transcript_id=transcript_id,
        chunks=chunks,
        vectors=vectors,
        bm25=Bm25Stats(doc_freq=doc_freq, doc_len=doc_len, k1=float(payload["k1"]), b=float(payload["b"])),
        provider_name=str(payload["provider"]),
        dim=dim,
    )
