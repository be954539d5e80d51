import math

import numpy as np
import pytest
import responses
from hypothesis import given
from hypothesis import strategies as st

from src.embed import HttpEmbeddingProvider, TestEmbedder, cosine, embed_batch, normalize, test_embed
from src.errors import ConfigError, DimensionError, PreconditionError, ProviderError, ZeroVectorError
from tests.conftest import EMBED_KEY

BASE_URL = "https://embeddings.example.com"


class FixedProvider:
    """Returns the vectors it was given, whatever the texts."""

    def __init__(self, vectors, dim=2):
        self.vectors = [np.asarray(v, dtype=np.float64) for v in vectors]
        self.dim = dim
        self.name = "fixed"

    def embed(self, texts):
        return self.vectors


def test_pass_cosine_given_identical_vectors_returns_one():
    assert cosine(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 1.0


def test_pass_cosine_given_orthogonal_vectors_returns_zero():
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_pass_cosine_given_diagonal_returns_inverse_sqrt_two():
    assert cosine(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(1 / math.sqrt(2), abs=1e-4)


def test_fail_cosine_given_zero_vector():
    with pytest.raises(ZeroVectorError):
        cosine(np.array([0.0, 0.0]), np.array([1.0, 0.0]))


def test_fail_cosine_given_different_dims():
    with pytest.raises(DimensionError):
        cosine(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]))


_vectors = st.lists(st.floats(min_value=-100, max_value=100), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3
)


@given(_vectors, _vectors, st.floats(min_value=0.01, max_value=100))
def test_pass_cosine_given_any_vectors_is_symmetric_and_scale_invariant(a, b, scale):
    a, b = np.array(a), np.array(b)

    assert cosine(a, b) == pytest.approx(cosine(b, a), abs=1e-12)
    assert cosine(a * scale, b) == pytest.approx(cosine(a, b), abs=1e-9)
    assert cosine(a, a) == pytest.approx(1.0, abs=1e-9)


def test_pass_normalize_given_zero_vector_keeps_it_zero():
    assert np.array_equal(normalize(np.zeros(4)), np.zeros(4))


def test_pass_test_embed_given_same_text_returns_same_unit_vector():
    first, second = test_embed("cough", 8), test_embed("cough", 8)

    assert np.array_equal(first, second)
    assert first.shape == (8,)
    assert np.linalg.norm(first) == pytest.approx(1.0, abs=1e-9)


# test_embed("cough", 8), first six components rounded to 8 decimals
COUGH_DIM_8 = [-0.09564155, 0.19253178, 0.09914221, -0.40146683, 0.05359697, -0.29082942]


def test_pass_test_embed_given_cough_at_dim_8_returns_committed_vector():
    vector = test_embed("cough", 8)

    np.testing.assert_allclose(vector[: len(COUGH_DIM_8)], COUGH_DIM_8, rtol=0, atol=1e-8)
    assert vector.shape == (8,)
    assert float(np.linalg.norm(vector)) == pytest.approx(1.0, abs=1e-12)


def test_pass_test_embed_given_case_and_punctuation_ignores_them():
    assert np.array_equal(test_embed("Cough!", 16), test_embed("cough", 16))


def test_pass_test_embed_given_two_words_averages_word_vectors():
    expected = normalize(test_embed("x", 32) + test_embed("y", 32))

    assert np.allclose(test_embed("x y", 32), expected, atol=1e-12)


def test_pass_test_embed_given_identical_sentences_has_cosine_one():
    a = test_embed("Any shortness of breath or chest pain?", 64)
    b = test_embed("any shortness of breath or chest pain", 64)

    assert cosine(a, b) == pytest.approx(1.0, abs=1e-9)


def test_pass_test_embed_given_text_without_terms_returns_zero_vector():
    assert not np.any(test_embed("...", 8))


def test_fail_test_embed_given_dim_below_two():
    with pytest.raises(PreconditionError):
        test_embed("cough", 1)


_words = st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=8)


@given(_words, _words)
def test_pass_test_embed_given_disjoint_words_are_far_apart(a, b):
    if a == b:
        return
    assert abs(cosine(test_embed(a, 256), test_embed(b, 256))) < 0.5


def test_pass_embed_batch_given_same_text_twice_returns_identical_vectors(embedder):
    first, second = embed_batch(embedder, ["a", "a"])

    assert np.array_equal(first, second)


def test_pass_embed_batch_given_texts_matches_one_at_a_time(embedder):
    texts = ["cough with blood", "take care", "weight loss"]

    batched = embed_batch(embedder, texts)

    for text, vector in zip(texts, batched):
        assert np.array_equal(vector, embed_batch(embedder, [text])[0])


def test_pass_embed_batch_given_unnormalized_provider_normalizes():
    vectors = embed_batch(FixedProvider([[3.0, 4.0]]), ["a"])

    assert np.allclose(vectors[0], [0.6, 0.8])


def test_fail_embed_batch_given_empty_batch(embedder):
    with pytest.raises(PreconditionError):
        embed_batch(embedder, [])


def test_fail_embed_batch_given_empty_text(embedder):
    with pytest.raises(PreconditionError):
        embed_batch(embedder, ["ok", ""])


def test_fail_embed_batch_given_wrong_dim():
    with pytest.raises(DimensionError):
        embed_batch(FixedProvider([[1.0, 0.0], [1.0, 0.0, 0.0]]), ["a", "b"])


def test_fail_embed_batch_given_wrong_count():
    with pytest.raises(ProviderError):
        embed_batch(FixedProvider([[1.0, 0.0]]), ["a", "b"])


@responses.activate
def test_pass_http_embedding_provider_given_shuffled_indices_orders_by_index():
    matcher_auth = responses.matchers.header_matcher({"Authorization": f"Bearer {EMBED_KEY}"})
    matcher_body = responses.matchers.json_params_matcher({"model": "bge", "input": ["first", "second"]})
    responses.add(
        responses.POST,
        f"{BASE_URL}/v1/embeddings",
        json={"data": [{"index": 1, "embedding": [0.0, 2.0]}, {"index": 0, "embedding": [1.0, 0.0]}]},
        status=200,
        match=[matcher_auth, matcher_body],
    )
    provider = HttpEmbeddingProvider(BASE_URL, model="bge", dim=2)

    vectors = embed_batch(provider, ["first", "second"])

    assert provider.name == "http:bge"
    assert np.allclose(vectors[0], [1.0, 0.0])
    assert np.allclose(vectors[1], [0.0, 1.0])


@responses.activate
def test_fail_http_embedding_provider_given_endpoint_failure_retries_three_times():
    rsps = responses.add(responses.POST, f"{BASE_URL}/v1/embeddings", status=503)
    provider = HttpEmbeddingProvider(BASE_URL, model="bge", dim=2)

    with pytest.raises(ProviderError) as exc_info:
        provider.embed(["cough"])

    assert len(rsps.calls) == 3
    assert exc_info.value.__cause__ is not None


@responses.activate
def test_fail_http_embedding_provider_given_response_without_data():
    responses.add(responses.POST, f"{BASE_URL}/v1/embeddings", json={"object": "list"}, status=200)
    provider = HttpEmbeddingProvider(BASE_URL, model="bge", dim=2)

    with pytest.raises(ProviderError):
        provider.embed(["cough"])


@responses.activate
def test_fail_http_embedding_provider_given_non_numeric_embedding():
    responses.add(
        responses.POST,
        f"{BASE_URL}/v1/embeddings",
        json={"data": [{"index": 0, "embedding": ["a", "b"]}]},
        status=200,
    )
    provider = HttpEmbeddingProvider(BASE_URL, model="bge", dim=2)

    with pytest.raises(ProviderError):
        provider.embed(["cough"])


def test_fail_http_embedding_provider_given_plain_http_remote_host():
    with pytest.raises(ConfigError) as exc_info:
        HttpEmbeddingProvider("http://embeddings.example.com", model="bge", dim=2)
    assert "Only https protocol is allowed" in str(exc_info.value)


def test_pass_test_embedder_given_dim_names_itself():
    assert TestEmbedder(dim=16).name == "test-hash-16"
    assert TestEmbedder(dim=16).dim == 16
