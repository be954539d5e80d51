"""
Transcript data handling: diarized -> flat conversion, sentence chunking, dataset files and statistics.

Notes
-----
- Sentence boundaries are ".", "?" and "!" (runs of them, optionally followed by closing quotes or
  brackets) when whitespace or the end of text follows. A lone period after a single-letter word is
  an abbreviation ("J. smith", "Dr. A. Jones") and does not end a sentence, except after "I".
- Decimals such as "2.5" never split because no whitespace follows their period.
"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Iterator, Literal, Optional

import pyarrow.parquet as pq

from src.errors import EmptyTranscriptError, ParseError
from src.infra.text import terms
from src.models.stats import Aggregate, CorpusStats
from src.models.tokenizer import Tokenizer
from src.models.transcript import DOCTOR, PATIENT, Chunk, DatasetPair, Transcript, Turn
from src.settings import Settings

logger = logging.getLogger(__name__)

TranscriptFormat = Literal["jsonl", "txt"]

_BOUNDARY_RE = re.compile(r"[.?!]+[\"'”’)\]]*(?=\s|$)")

_LABELED_LINE_RE = re.compile(
    r"^\s*(?:\[(?P<bracket>[A-Za-z][A-Za-z ]{0,19})\]|(?P<colon>[A-Za-z][A-Za-z ]{0,19}):)\s*(?P<text>.*)$"
)

_SPEAKER_ALIASES = {
    "d": DOCTOR,
    "dr": DOCTOR,
    "doctor": DOCTOR,
    "physician": DOCTOR,
    "p": PATIENT,
    "pt": PATIENT,
    "patient": PATIENT,
}


# ==== Flattening and splitting


def flatten_diarized(transcript: Transcript) -> str:
    """Returns raw_text when set, otherwise trimmed turn texts joined by single spaces; speaker labels are dropped."""
    if not transcript.is_usable:
        raise EmptyTranscriptError(f"Transcript '{transcript.id}' has neither turns nor raw text")

    if transcript.raw_text and transcript.raw_text.strip():
        return transcript.raw_text

    texts = [turn.text.strip() for turn in transcript.turns]
    return " ".join(text for text in texts if text)


def split_sentences(flat_text: str, transcript_id: str = "") -> list[Chunk]:
    chunks: list[Chunk] = []

    def append(segment: str):
        # collapse inner whitespace runs, chunks never carry newlines or double spaces
        text = " ".join(segment.split())
        if text:
            chunks.append(Chunk(transcript_id=transcript_id, ord=len(chunks), text=text))

    start = 0
    for match in _BOUNDARY_RE.finditer(flat_text):
        if _is_abbreviation(flat_text, match):
            continue
        append(flat_text[start : match.end()])
        start = match.end()
    append(flat_text[start:])

    return chunks


def _is_abbreviation(text: str, match: re.Match) -> bool:
    if match.group() != ".":
        return False

    idx = match.start()
    letter = text[idx - 1] if idx >= 1 else ""
    before_letter = text[idx - 2] if idx >= 2 else ""
    if not letter.isalpha() or before_letter.isalnum():
        return False

    next_text = text[match.end() :].lstrip()
    next_char = next_text[0] if next_text else ""
    if next_char.islower():
        return True
    return letter.isupper() and letter != "I" and bool(next_char)


def transcript_chunks(transcript: Transcript) -> list[Chunk]:
    return split_sentences(flatten_diarized(transcript), transcript.id)


# ==== Speaker-labelled dialogue


def parse_labeled_dialogue(text: str, transcript_id: str) -> Transcript:
    """
    Turns "Doctor: ...", "P: ..." or "[patient] ..." lines into diarized turns.

    Unlabelled lines continue the previous turn, text without any labelled line stays raw.
    """
    turns: list[Turn] = []
    preamble: list[str] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        match = _LABELED_LINE_RE.match(line)
        if match:
            label = (match.group("bracket") or match.group("colon")).strip()
            turns.append(Turn(speaker=_normalize_speaker(label), text=match.group("text").strip()))
        elif turns:
            last = turns[-1]
            turns[-1] = Turn(speaker=last.speaker, text=f"{last.text} {line.strip()}".strip())
        else:
            preamble.append(line.strip())

    if not turns:
        return Transcript(id=transcript_id, raw_text=text.strip())
    if preamble:
        turns.insert(0, Turn(speaker="", text=" ".join(preamble)))
    return Transcript(id=transcript_id, turns=tuple(turns))


def _normalize_speaker(label: str) -> str:
    return _SPEAKER_ALIASES.get(label.lower(), label)


def pair_to_transcript(pair: DatasetPair, index: int) -> Transcript:
    return parse_labeled_dialogue(pair.conversation, pair.id or f"pair-{index}")


# ==== Dataset files


def read_transcripts(path: str | Path, format: Optional[TranscriptFormat] = None) -> list[Transcript]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No transcripts found at '{path}'")

    format = format or ("txt" if path.is_dir() or path.suffix == ".txt" else "jsonl")
    if format == "txt":
        files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
        return [Transcript(id=file.stem, raw_text=_read_text(file)) for file in files]
    if format == "jsonl":
        transcripts, seen = [], set()
        for line_no, obj in _iter_jsonl(path):
            transcript = _transcript_from_json(obj, line_no)
            _check_unique_id(transcript.id, seen, line_no)
            transcripts.append(transcript)
        return transcripts
    raise ValueError(f"Unknown transcript format '{format}'")


def _transcript_from_json(obj: Any, line_no: int) -> Transcript:
    if not isinstance(obj, dict):
        raise ParseError("Expected a JSON object", line=line_no)

    transcript_id = obj.get("id")
    if not isinstance(transcript_id, str) or not transcript_id:
        raise ParseError('Missing string field "id"', line=line_no)

    raw_turns = obj.get("turns") or []
    if not isinstance(raw_turns, list):
        raise ParseError('"turns" must be a list', line=line_no)
    turns = []
    for raw_turn in raw_turns:
        if not isinstance(raw_turn, dict):
            raise ParseError("Each turn must be an object", line=line_no)
        speaker, text = raw_turn.get("speaker"), raw_turn.get("text")
        if not isinstance(speaker, str) or not isinstance(text, str):
            raise ParseError('Each turn needs string "speaker" and "text"', line=line_no)
        turns.append(Turn(speaker=speaker, text=text))

    raw_text = _optional_str(obj, "raw_text", line_no)
    specialty = _optional_str(obj, "specialty", line_no)
    return Transcript(id=transcript_id, turns=tuple(turns), raw_text=raw_text, specialty=specialty)


def _optional_str(obj: dict, key: str, line_no: int) -> Optional[str]:
    value = obj.get(key)
    if value is not None and not isinstance(value, str):
        raise ParseError(f'"{key}" must be a string', line=line_no)
    return value


def read_pairs(path: str | Path) -> list[DatasetPair]:
    """Reads conversation-summary pairs from JSONL or Parquet."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No dataset found at '{path}'")

    if path.suffix == ".parquet":
        rows = enumerate(pq.read_table(str(path)).to_pylist(), start=1)
    else:
        rows = _iter_jsonl(path)
    pairs, seen = [], set()
    for row_no, row in rows:
        pair = _pair_from_row(row, row_no)
        if pair.id is not None:
            _check_unique_id(pair.id, seen, row_no)
        pairs.append(pair)
    return pairs


def _pair_from_row(row: Any, row_no: int) -> DatasetPair:
    if not isinstance(row, dict):
        raise ParseError("Expected a JSON object", line=row_no)
    conversation, summary = row.get("conversation"), row.get("summary")
    if not isinstance(conversation, str) or not conversation.strip():
        raise ParseError('Missing non-empty "conversation"', line=row_no)
    if not isinstance(summary, str) or not summary.strip():
        raise ParseError('Missing non-empty "summary"', line=row_no)
    pair_id = row.get("id")
    return DatasetPair(conversation=conversation, summary=summary, id=None if pair_id is None else str(pair_id))


def _check_unique_id(item_id: str, seen: set[str], line_no: int):
    # ids name the output files
    if item_id in seen:
        raise ParseError(f'Duplicate id "{item_id}"', line=line_no)
    seen.add(item_id)


def _read_text(path: Path) -> str:
    data = path.read_bytes()
    try:
        return data.decode(Settings.csv_encoding)
    except UnicodeDecodeError as err:
        line_no = data[: err.start].count(b"\n") + 1
        raise ParseError(f"Invalid {Settings.csv_encoding} in '{path}': {err.reason}", line=line_no) from err


def _iter_jsonl(path: Path) -> Iterator[tuple[int, Any]]:
    with path.open("rb") as f:
        for line_no, raw_line in enumerate(f, start=1):
            try:
                line = raw_line.decode(Settings.csv_encoding)
            except UnicodeDecodeError as err:
                raise ParseError(f"Invalid {Settings.csv_encoding}: {err.reason}", line=line_no) from err
            if not line.strip():
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as err:
                raise ParseError(f"Invalid JSON: {err.msg}", line=line_no) from err


# ==== Statistics


def corpus_stats(texts: list[str], tokenizer: Tokenizer) -> CorpusStats:
    if not texts:
        return CorpusStats()

    sentences, words, chars, vocab, tokens = [], [], [], [], []
    all_terms: set[str] = set()
    for text in texts:
        text_terms = set(terms(text))
        all_terms |= text_terms

        sentences.append(len(split_sentences(text)))
        words.append(len(text.split()))
        chars.append(len(text))
        vocab.append(len(text_terms))
        tokens.append(tokenizer.count(text))

    logger.debug("Computed statistics over %d texts", len(texts))
    return CorpusStats(
        count=len(texts),
        sentences=Aggregate.of_counts(sentences),
        words=Aggregate.of_counts(words),
        chars=Aggregate.of_counts(chars),
        vocab=Aggregate.of_counts(vocab),
        tokens=Aggregate.of_counts(tokens),
        vocab_size=len(all_terms),
    )
