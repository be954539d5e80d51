import os
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

EMBED_API_KEY = "CLINICSUM_EMBED_API_KEY"
LLM_API_KEY = "CLINICSUM_LLM_API_KEY"


class Settings:
    """Represents the settings for the application.

    Some of them are loaded from environment variables or have hardcoded values.
    Experiment tunables (weights, k, models) live in src.config instead.
    """

    # Loaded from environment variables

    embed_api_key: Optional[str] = os.environ.get(EMBED_API_KEY)
    llm_api_key: Optional[str] = os.environ.get(LLM_API_KEY)

    # Hardcoded

    embed_api_key_env_name = EMBED_API_KEY
    llm_api_key_env_name = LLM_API_KEY

    embeddings_path: str = "/v1/embeddings"
    chat_completions_path: str = "/v1/chat/completions"
    plain_http_hosts: tuple[str, ...] = ("localhost", "127.0.0.1")

    http_request_attempts = 3
    # urllib3 doubles this between attempts
    http_backoff_factor = 0.25
    http_timeout_seconds = 30.0

    index_format_version = 1
    index_suffix: str = ".index.json"
    summary_suffix: str = ".summary.json"
    retrieval_suffix: str = ".context.json"
    eval_report_filename: str = "eval_report.json"
    review_sheet_filename: str = "review_sheet.csv"
    review_key_filename: str = "review_key.csv"
    review_instructions_filename: str = "review_instructions.txt"
    default_config_filename: str = "convsoap.toml"

    csv_encoding: str = "utf-8"
