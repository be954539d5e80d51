"""
Experiment configuration.

A TOML file with the sections below, every key optional:

    [embedding]  kind = "test" | "http", base_url, model, dim, timeout
    [generator]  kind = "http" | "stub", base_url, model, temperature, max_tokens, timeout, stub_response
    [fusion]     w_sparse, w_dense, rrf_lambda, top_k_per_retriever, top_k_final
    [bm25]       k1, b
    [prompt]     query, instruction
    [tokenizer]  kind = "whitespace" | "terms"

Command-line overrides are keyed "section.key" and applied after the file.
"""

import dataclasses
import logging
import tomllib
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, get_type_hints

from src.embed import EmbeddingProvider, HttpEmbeddingProvider, TestEmbedder
from src.errors import ConfigError
from src.infer import (
    DEFAULT_INSTRUCTION,
    TOKENIZERS,
    ChatCompletionClient,
    Generator,
    StubGenerator,
    tokenizer_from_kind,
)
from src.models.retrieval import DEFAULT_B, DEFAULT_K1, DEFAULT_QUERY, FusionConfig, RetrievalQuery
from src.models.tokenizer import Tokenizer
from src.settings import Settings

logger = logging.getLogger(__name__)

EMBEDDING_KINDS = ("test", "http")
GENERATOR_KINDS = ("http", "stub")


@dataclass(frozen=True)
class EmbeddingConfig:
    kind: str = "test"
    base_url: str = ""
    model: str = ""
    dim: int = 64
    timeout: float = Settings.http_timeout_seconds


@dataclass(frozen=True)
class GeneratorConfig:
    kind: str = "http"
    base_url: str = ""
    model: str = ""
    temperature: float = 0.0
    max_tokens: int = 1024
    timeout: float = Settings.http_timeout_seconds
    # path to a text file, relative paths resolve against the config file's directory
    stub_response: str = ""


@dataclass(frozen=True)
class Bm25Config:
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B


@dataclass(frozen=True)
class PromptConfig:
    query: str = DEFAULT_QUERY
    instruction: str = DEFAULT_INSTRUCTION


@dataclass(frozen=True)
class TokenizerConfig:
    kind: str = "whitespace"


@dataclass(frozen=True)
class AppConfig:
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    bm25: Bm25Config = field(default_factory=Bm25Config)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    base_dir: Path = field(default=Path("."), compare=False)

    def validate(self) -> "AppConfig":
        _check_choice("embedding.kind", self.embedding.kind, EMBEDDING_KINDS)
        if self.embedding.dim < 2:
            raise ConfigError(f"embedding.dim must be at least 2, got {self.embedding.dim}")
        if self.embedding.kind == "http" and not (self.embedding.base_url and self.embedding.model):
            raise ConfigError("embedding.base_url and embedding.model are required when embedding.kind is 'http'")

        _check_choice("generator.kind", self.generator.kind, GENERATOR_KINDS)
        if self.generator.temperature < 0:
            raise ConfigError(f"generator.temperature must be non-negative, got {self.generator.temperature}")
        if self.generator.max_tokens < 1:
            raise ConfigError(f"generator.max_tokens must be at least 1, got {self.generator.max_tokens}")
        timeouts = {"embedding.timeout": self.embedding.timeout, "generator.timeout": self.generator.timeout}
        for name, timeout in timeouts.items():
            if timeout <= 0:
                raise ConfigError(f"{name} must be positive, got {timeout}")

        self.fusion.validate()
        if self.bm25.k1 < 0:
            raise ConfigError(f"bm25.k1 must be non-negative, got {self.bm25.k1}")
        if not 0.0 <= self.bm25.b <= 1.0:
            raise ConfigError(f"bm25.b must be within [0, 1], got {self.bm25.b}")

        if not self.prompt.query.strip():
            raise ConfigError("prompt.query is empty")
        if not self.prompt.instruction.strip():
            raise ConfigError("prompt.instruction is empty")
        _check_choice("tokenizer.kind", self.tokenizer.kind, tuple(TOKENIZERS))
        return self

    def query(self) -> RetrievalQuery:
        return RetrievalQuery(text=self.prompt.query)


def _check_choice(name: str, value: str, allowed: tuple[str, ...]):
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {', '.join(allowed)}, got '{value}'")


SECTIONS: dict[str, type] = {
    f.name: f.default_factory  # type: ignore[misc]
    for f in dataclasses.fields(AppConfig)
    if f.default_factory is not dataclasses.MISSING
}


def config_keys() -> list[tuple[str, str, type]]:
    """(section, key, type) for every configurable value, in declaration order."""
    return [
        (section, f.name, get_type_hints(section_cls)[f.name])
        for section, section_cls in SECTIONS.items()
        for f in dataclasses.fields(section_cls)
    ]


def load_config(path: Optional[str | Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> AppConfig:
    raw: dict[str, Any] = {}
    base_dir = Path(".")
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"No config file at '{path}'")
        try:
            raw = tomllib.loads(path.read_text(encoding=Settings.csv_encoding))
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as err:
            raise ConfigError(f"Config file '{path}' is not valid TOML: {err}") from err
        base_dir = path.parent
        logger.debug("Loaded config from '%s'", path)

    values: dict[str, dict[str, Any]] = {section: {} for section in SECTIONS}
    for section, table in raw.items():
        if section not in SECTIONS:
            raise ConfigError(f"Unknown config section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        values[section].update(table)

    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if section not in SECTIONS:
            raise ConfigError(f"Unknown config override '{dotted}'")
        values[section][key] = value

    sections = {section: _build_section(section, SECTIONS[section], values[section]) for section in SECTIONS}
    return AppConfig(**sections, base_dir=base_dir).validate()


def _build_section(section: str, section_cls: type, values: dict[str, Any]) -> Any:
    hints = get_type_hints(section_cls)
    known = {f.name for f in dataclasses.fields(section_cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown key(s) in [{section}]: {', '.join(unknown)}")
    return section_cls(**{key: _coerce(f"{section}.{key}", value, hints[key]) for key, value in values.items()})


def _coerce(name: str, value: Any, expected: type) -> Any:
    # bool is an int subclass, never accept it for numbers
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be {expected.__name__}, got a boolean")
    if expected is float and isinstance(value, (int, float)):
        return float(value)
    if expected is int and isinstance(value, int):
        return value
    if expected is str and isinstance(value, str):
        return value
    raise ConfigError(f"{name} must be {expected.__name__}, got {type(value).__name__} {value!r}")


def overrides_from_params(params: Mapping[str, Any]) -> dict[str, Any]:
    """Maps click parameter names "section__key" back to "section.key" overrides."""
    return {name.replace("__", ".", 1): value for name, value in params.items() if "__" in name and value is not None}


# ==== Factories


def make_provider(cfg: EmbeddingConfig) -> EmbeddingProvider:
    if cfg.kind == "test":
        return TestEmbedder(dim=cfg.dim)
    return HttpEmbeddingProvider(base_url=cfg.base_url, model=cfg.model, dim=cfg.dim, timeout=cfg.timeout)


def make_generator(cfg: GeneratorConfig, base_dir: Path = Path(".")) -> Generator:
    if cfg.kind == "stub":
        if not cfg.stub_response:
            return StubGenerator()
        response_path = Path(cfg.stub_response)
        if not response_path.is_absolute():
            response_path = base_dir / response_path
        if not response_path.exists():
            raise FileNotFoundError(f"No stub response file at '{response_path}'")
        return StubGenerator(response_path.read_text(encoding=Settings.csv_encoding))

    if not (cfg.base_url and cfg.model):
        raise ConfigError("generator.base_url and generator.model are required when generator.kind is 'http'")
    return ChatCompletionClient(
        base_url=cfg.base_url,
        model=cfg.model,
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens,
        timeout=cfg.timeout,
    )


def make_tokenizer(cfg: TokenizerConfig) -> Tokenizer:
    return tokenizer_from_kind(cfg.kind)
