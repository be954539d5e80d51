import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.embed import TestEmbedder
from src.errors import DimensionError, PreconditionError, ZeroVectorError
from src.index import build_index
from src.infra.text import terms
from src.models.retrieval import RetrievalQuery
from src.models.transcript import Transcript
from src.retrieve import bm25_scores, dense_retrieve, embed_query, sparse_retrieve


def _index(text: str, dim: int = 16, k1: float = 1.2, b: float = 0.75):
    return build_index(Transcript(id="t", raw_text=text), TestEmbedder(dim), k1=k1, b=b)


def _reference_bm25(docs: list[list[str]], query: list[str], k1: float, b: float) -> list[float]:
    n = len(docs)
    avgdl = sum(len(doc) for doc in docs) / n
    scores = []
    for doc in docs:
        counts = Counter(doc)
        score = 0.0
        for term in query:
            df = sum(1 for other in docs if term in other)
            tf = counts[term]
            if df == 0 or tf == 0:
                continue
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(doc) / avgdl))
        scores.append(score)
    return scores


def test_pass_bm25_scores_given_one_matching_chunk_scores_ln_two():
    index = _index("Cough blood. Take care.")

    scores = bm25_scores(index, "cough")

    assert scores[0] == pytest.approx(math.log(2), abs=1e-12)
    assert scores[1] == 0.0


def test_pass_sparse_retrieve_given_matching_chunk_returns_only_it():
    hits = sparse_retrieve(_index("Cough blood. Take care."), "cough", k=5)

    assert [(hit.chunk_ord, hit.rank) for hit in hits] == [(0, 1)]
    assert hits[0].score == pytest.approx(math.log(2))


def test_pass_sparse_retrieve_given_query_without_known_terms_returns_nothing():
    assert sparse_retrieve(_index("Cough blood. Take care."), "zebra", k=5) == []


def test_pass_sparse_retrieve_given_equal_scores_breaks_ties_by_ord():
    hits = sparse_retrieve(_index("Pain here. Nothing. Pain there."), "pain", k=5)

    assert [hit.chunk_ord for hit in hits] == [0, 2]
    assert hits[0].score == hits[1].score


def test_pass_sparse_retrieve_given_small_k_truncates():
    hits = sparse_retrieve(_index("Pain one. Pain two. Pain three."), "pain", k=2)

    assert [hit.rank for hit in hits] == [1, 2]


def test_fail_sparse_retrieve_given_k_zero():
    with pytest.raises(PreconditionError):
        sparse_retrieve(_index("Cough."), "cough", k=0)


_doc_words = st.lists(st.sampled_from(["cough", "blood", "pain", "chest", "take", "care", "weight"]), min_size=1)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(_doc_words.map(lambda words: " ".join(words) + "."), min_size=1, max_size=10),
    st.lists(st.sampled_from(["cough", "blood", "pain", "fever"]), min_size=1, max_size=4),
    st.floats(min_value=0.0, max_value=3.0),
    st.floats(min_value=0.0, max_value=1.0),
)
def test_pass_bm25_scores_given_any_corpus_matches_reference(docs, query, k1, b):
    index = _index(" ".join(docs), k1=k1, b=b)
    query_text = " ".join(query)

    scores = bm25_scores(index, query_text)
    expected = _reference_bm25([terms(doc) for doc in docs], terms(query_text), k1, b)

    assert np.allclose(scores, expected, atol=1e-9)
    assert all(score >= 0.0 for score in scores)

    hits = sparse_retrieve(index, query_text, k=len(docs))
    assert [hit.rank for hit in hits] == list(range(1, len(hits) + 1))
    assert all(a.score >= b_.score for a, b_ in zip(hits, hits[1:]))
    assert {hit.chunk_ord for hit in hits} == {i for i, score in enumerate(expected) if score > 0}


def test_pass_dense_retrieve_given_query_equal_to_chunk_ranks_it_first():
    index = _index("Cough blood. Take care. Weight loss.", dim=64)
    query = RetrievalQuery(text="take care", vector=index.vectors[1])

    hits = dense_retrieve(index, query, k=3)

    assert hits[0].chunk_ord == 1
    assert hits[0].score == pytest.approx(1.0)
    assert len(hits) == 3


def test_pass_dense_retrieve_given_chunk_without_terms_scores_zero():
    index = _index("Cough blood. ... Take care.", dim=64)
    query = embed_query(RetrievalQuery(text="cough"), TestEmbedder(64))

    hits = dense_retrieve(index, query, k=3)

    assert {hit.chunk_ord: hit.score for hit in hits}[1] == 0.0


def test_pass_embed_query_given_query_embeds_once():
    embedder = TestEmbedder(16)
    query = embed_query(RetrievalQuery(text="cough"), embedder)
    vector = query.vector

    assert embed_query(query, embedder).vector is vector


def test_fail_embed_query_given_blank_text():
    with pytest.raises(PreconditionError):
        embed_query(RetrievalQuery(text="  "), TestEmbedder(16))


def test_fail_dense_retrieve_given_query_without_vector():
    with pytest.raises(PreconditionError):
        dense_retrieve(_index("Cough."), RetrievalQuery(text="cough"), k=1)


def test_fail_dense_retrieve_given_query_of_other_dim():
    with pytest.raises(DimensionError):
        dense_retrieve(_index("Cough.", dim=16), RetrievalQuery(text="cough", vector=np.ones(8)), k=1)


def test_fail_dense_retrieve_given_zero_query_vector():
    with pytest.raises(ZeroVectorError):
        dense_retrieve(_index("Cough.", dim=16), RetrievalQuery(text="cough", vector=np.zeros(16)), k=1)
