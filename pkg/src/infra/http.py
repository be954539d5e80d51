from typing import Any, Optional
from urllib.parse import urlparse

import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from src.errors import ConfigError
from src.settings import Settings

RETRY_STATUSES = (429, 500, 502, 503, 504)


def check_base_url(base_url: str) -> str:
    parsed_url = urlparse(base_url)
    if parsed_url.scheme == "https":
        return base_url.rstrip("/")
    if parsed_url.scheme == "http" and parsed_url.hostname in Settings.plain_http_hosts:
        return base_url.rstrip("/")
    raise ConfigError(f"Only https protocol is allowed for remote hosts, got '{base_url}'")


def build_session(attempts: Optional[int] = None) -> requests.Session:
    """Session that retries transient failures, POST included, `attempts` times in total."""
    attempts = attempts or Settings.http_request_attempts
    session = requests.Session()
    retry_strategy = Retry(
        total=attempts - 1,
        backoff_factor=Settings.http_backoff_factor,
        status_forcelist=RETRY_STATUSES,
        allowed_methods=None,
    )
    adapter = HTTPAdapter(max_retries=retry_strategy)
    session.mount("https://", adapter)
    session.mount("http://", adapter)
    return session


def post_json(
    session: requests.Session,
    url: str,
    payload: dict,
    api_key: Optional[str],
    timeout: float,
) -> Any:
    """Raises requests exceptions as is, callers wrap them into their domain error."""
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    response = session.post(url, json=payload, headers=headers, timeout=timeout)
    response.raise_for_status()
    return response.json()
