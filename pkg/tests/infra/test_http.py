import pytest
import responses
from requests.exceptions import RetryError

from src.errors import ConfigError
from src.infra.http import build_session, check_base_url, post_json

URL = "https://api.example.com/v1/embeddings"


@pytest.mark.parametrize(
    "base_url,expected",
    [
        ("https://api.example.com/", "https://api.example.com"),
        ("http://localhost:8000", "http://localhost:8000"),
        ("http://127.0.0.1:8000/", "http://127.0.0.1:8000"),
    ],
)
def test_pass_check_base_url_given_allowed_url_strips_trailing_slash(base_url, expected):
    assert check_base_url(base_url) == expected


@pytest.mark.parametrize("base_url", ["http://api.example.com", "ftp://api.example.com", "api.example.com"])
def test_fail_check_base_url_given_insecure_or_unknown_scheme(base_url):
    with pytest.raises(ConfigError) as exc_info:
        check_base_url(base_url)
    assert "Only https protocol is allowed" in str(exc_info.value)


@responses.activate
def test_pass_post_json_given_api_key_sends_bearer_header_and_body():
    matcher_auth = responses.matchers.header_matcher({"Authorization": "Bearer secret"})
    matcher_body = responses.matchers.json_params_matcher({"input": ["cough"]})
    responses.add(responses.POST, URL, json={"ok": True}, status=200, match=[matcher_auth, matcher_body])

    assert post_json(build_session(), URL, {"input": ["cough"]}, "secret", timeout=5) == {"ok": True}


@responses.activate
def test_pass_post_json_given_no_api_key_omits_authorization():
    rsps = responses.add(responses.POST, URL, json={"ok": True}, status=200)

    post_json(build_session(), URL, {}, None, timeout=5)

    assert "Authorization" not in rsps.calls[0].request.headers


@responses.activate
def test_fail_post_json_given_endpoint_failure_retries_three_times():
    rsps = responses.add(responses.POST, URL, status=500)

    with pytest.raises(RetryError):
        post_json(build_session(), URL, {}, None, timeout=5)

    assert len(rsps.calls) == 3


@responses.activate
def test_fail_post_json_given_custom_attempts_stops_after_them():
    rsps = responses.add(responses.POST, URL, status=429)

    with pytest.raises(RetryError):
        post_json(build_session(attempts=2), URL, {}, None, timeout=5)

    assert len(rsps.calls) == 2
