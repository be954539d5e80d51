"""
Summary generation: prompt assembly, chat-completion clients, SOAP parsing, tokenizers and the
end-to-end summarization pipeline.
"""

import logging
import re
from dataclasses import dataclass, field
from time import perf_counter
from typing import Optional, Protocol

import requests

from src.corpus import flatten_diarized
from src.embed import EmbeddingProvider
from src.errors import EmptyResponseError, GenerationError, PartialSoapError, PreconditionError
from src.infra.dict import get_nested
from src.infra.http import build_session, check_base_url, post_json
from src.infra.text import terms
from src.models.retrieval import DEFAULT_B, DEFAULT_K1, FusedContext, FusionConfig, RetrievalQuery
from src.models.soap import SOAP_SECTIONS, SoapSummary
from src.models.tokenizer import Tokenizer
from src.models.transcript import Transcript
from src.retrieve import filter_transcript
from src.settings import Settings

logger = logging.getLogger(__name__)

ALPACA_HEADER = (
    "Below is an instruction that describes a task, paired with an input that provides further context. "
    "Write a response that appropriately completes the request."
)
DEFAULT_INSTRUCTION = (
    "Generate a clinical summary in SOAP format (Subjective, Objective, Assessment, Plan) "
    "from the following patient-doctor conversation context."
)

_MARKER_LINE_RE = re.compile(r"^((?:> )*### (?:Instruction|Input|Response):)", re.MULTILINE)

_SOAP_HEADER_RE = re.compile(
    r"^[ \t]*(?:\*\*|#{1,6}|-)?[ \t]*(?:\*\*)?(?P<name>subjective|objective|assessment|plan)[ \t]*(?:\*\*)?[ \t]*:"
    r"[ \t]*(?:\*\*)?",
    re.IGNORECASE | re.MULTILINE,
)


# ==== Prompt


@dataclass(frozen=True)
class PromptTemplate:
    instruction: str
    input_context: str
    response_seed: str = ""
    header: str = ALPACA_HEADER

    def render(self) -> str:
        return (
            f"{self.header}\n\n"
            f"### Instruction:\n{_escape_markers(self.instruction)}\n\n"
            f"### Input:\n{_escape_markers(self.input_context)}\n\n"
            f"### Response:\n{self.response_seed}"
        )


def render_prompt(instruction: str, context: str, response_seed: str = "") -> str:
    if not instruction or not instruction.strip():
        raise PreconditionError("Instruction is empty")
    if not context or not context.strip():
        raise PreconditionError("Context is empty")
    return PromptTemplate(instruction=instruction, input_context=context, response_seed=response_seed).render()


def _escape_markers(text: str) -> str:
    # lines that look like template markers get one more "> ", so escaping stays reversible
    return _MARKER_LINE_RE.sub(r"> \1", text)


# ==== Generators


class Generator(Protocol):
    """Turns a rendered prompt into raw model text. Shared across threads."""

    name: str

    def complete(self, prompt: str) -> str: ...


class ChatCompletionClient:
    """
    Client for POST {base_url}/v1/chat/completions of any OpenAI-compatible server.

    Transient failures (connection errors, 429 and 5xx) are retried by the session, every request
    carries a timeout so a stuck backend cannot hold a batch forever.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        temperature: float = 0.0,
        max_tokens: int = 1024,
        timeout: Optional[float] = None,
        api_key: Optional[str] = None,
    ):
        self.base_url = check_base_url(base_url)
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout or Settings.http_timeout_seconds
        self.api_key = api_key if api_key is not None else Settings.llm_api_key
        self.name = f"chat:{model}"
        self._session = build_session()

    def complete(self, prompt: str) -> str:
        url = self.base_url + Settings.chat_completions_path
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        try:
            json = post_json(self._session, url, payload, self.api_key, self.timeout)
        except requests.RequestException as err:
            raise GenerationError(f"Chat completion request to {url} failed: {err}") from err

        content = get_nested(json, ["choices", 0, "message", "content"])
        if content is None:
            return ""
        if not isinstance(content, str):
            raise GenerationError(f"Chat completion from {url} returned non-string content")
        return content


class StubGenerator:
    """Returns a canned response, or echoes the prompt when none is given."""

    def __init__(self, response: Optional[str] = None):
        self.response = response
        self.name = "stub"

    def complete(self, prompt: str) -> str:
        return prompt if self.response is None else self.response


def generate_summary(client: Generator, prompt: str) -> str:
    if not prompt or not prompt.strip():
        raise PreconditionError("Prompt is empty")
    text = client.complete(prompt)
    if not text or not text.strip():
        raise EmptyResponseError(f"Generator '{client.name}' returned an empty response")
    return text


# ==== SOAP parsing


def parse_soap(raw: str) -> SoapSummary:
    """
    Splits generated text on "Subjective:", "Objective:", "Assessment:" and "Plan:" headers at line
    starts. Headers may be wrapped in "**", prefixed by "#"s or "-", and match case-insensitively.
    Text before the first header is ignored, a repeated header appends to its section.
    """
    matches = list(_SOAP_HEADER_RE.finditer(raw))
    parts: dict[str, list[str]] = {}
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
        name = match.group("name").lower()
        parts.setdefault(name, []).append(raw[match.end() : end].strip())

    summary = SoapSummary(
        raw_text=raw,
        **{name: "\n".join(p for p in parts.get(name, []) if p) for name in SOAP_SECTIONS},
    )
    missing = [name for name in SOAP_SECTIONS if name not in parts]
    if missing:
        raise PartialSoapError(missing=missing, partial=summary)
    return summary


def format_soap(summary: SoapSummary) -> str:
    return "\n\n".join(f"{name.capitalize()}:\n{text}" for name, text in summary.sections().items()) + "\n"


# ==== Tokenizers


class WhitespaceTokenizer:
    """Counts whitespace-separated tokens, count(a + " " + b) == count(a) + count(b) exactly."""

    name = "whitespace"

    def count(self, text: str) -> int:
        return len(text.split())


class TermTokenizer:
    """Counts lowercase alphanumeric terms, additive under any non-alphanumeric separator."""

    name = "terms"

    def count(self, text: str) -> int:
        return len(terms(text))


TOKENIZERS = {tokenizer.name: tokenizer for tokenizer in (WhitespaceTokenizer, TermTokenizer)}


def tokenizer_from_kind(kind: str) -> Tokenizer:
    if kind not in TOKENIZERS:
        raise ValueError(f"Unknown tokenizer '{kind}', expected one of {sorted(TOKENIZERS)}")
    return TOKENIZERS[kind]()


# ==== Pipeline


@dataclass(frozen=True)
class SummaryResult:
    transcript_id: str
    soap: SoapSummary
    context: FusedContext
    prompt: str
    context_tokens: int
    transcript_tokens: int
    latency_seconds: float
    missing_sections: list[str] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.missing_sections

    def to_json(self) -> dict:
        payload = {
            "id": self.transcript_id,
            "soap": self.soap.sections(),
            "raw": self.soap.raw_text,
            "context_tokens": self.context_tokens,
            "transcript_tokens": self.transcript_tokens,
        }
        if self.missing_sections:
            payload["missing_sections"] = self.missing_sections
        return payload


def summarize_pipeline(
    transcript: Transcript,
    provider: EmbeddingProvider,
    generator: Generator,
    query: RetrievalQuery,
    cfg: FusionConfig,
    instruction: str = DEFAULT_INSTRUCTION,
    tokenizer: Optional[Tokenizer] = None,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> SummaryResult:
    """Filters the transcript, prompts the generator with the retained context and parses the SOAP note.

    A note with missing sections is still returned, its missing_sections lists them.
    """
    tokenizer = tokenizer or WhitespaceTokenizer()
    start = perf_counter()

    context = filter_transcript(transcript, provider, query, cfg, k1, b)
    prompt = render_prompt(instruction, context.concatenated_text)
    raw = generate_summary(generator, prompt)

    missing: list[str] = []
    try:
        soap = parse_soap(raw)
    except PartialSoapError as err:
        logger.warning("Summary for '%s' lacks sections: %s", transcript.id, ", ".join(err.missing))
        soap, missing = err.partial, err.missing

    return SummaryResult(
        transcript_id=transcript.id,
        soap=soap,
        context=context,
        prompt=prompt,
        context_tokens=tokenizer.count(context.concatenated_text),
        transcript_tokens=tokenizer.count(flatten_diarized(transcript)),
        latency_seconds=perf_counter() - start,
        missing_sections=missing,
    )
