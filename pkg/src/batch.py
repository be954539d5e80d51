"""
File-level batch jobs behind the CLI commands: read inputs, run the pipeline or the evaluation suite
per item, write every output atomically.
"""

import dataclasses
import json
import logging
import threading
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, TypeVar

from src.config import AppConfig, make_generator, make_provider, make_tokenizer
from src.corpus import corpus_stats, flatten_diarized, pair_to_transcript, read_pairs, read_transcripts
from src.embed import EmbeddingProvider
from src.errors import EmptyTranscriptError, ParseError, PreconditionError
from src.evaluation import compare_systems, evaluate_pairs, make_review_sheet, parse_choice, review_instructions
from src.index import build_index, load_index, save_index
from src.infer import SummaryResult, summarize_pipeline
from src.infra.files import read_csv, write_atomic, write_csv_atomic, write_json_atomic
from src.models.evaluation import EvalReport, KeyEntry, PreferenceRecord, SystemComparison
from src.models.retrieval import ChunkIndex
from src.models.stats import CorpusStats
from src.models.transcript import DatasetPair, Transcript
from src.retrieve import embed_query, explain, filter_index
from src.settings import Settings

logger = logging.getLogger(__name__)

SHEET_COLUMNS = ["item_id", "conversation", "summary_A", "summary_B", "ground_truth", "choice"]
KEY_COLUMNS = ["item_id", "A_system", "B_system"]
PREFERENCE_COLUMNS = ["rater_id", "item_id", "choice"]

T = TypeVar("T")
R = TypeVar("R")


def _noop(_: str):
    pass


class _Progress:
    """Thread-safe "done/total" reporter."""

    def __init__(self, total: int, callback: Callable[[str], None]):
        self.total = total
        self.callback = callback
        self.done = 0
        self._lock = threading.Lock()

    def step(self):
        with self._lock:
            self.done += 1
            self.callback(f"{self.done}/{self.total}")


def map_jobs(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> list[R]:
    """Applies fn to every item on up to `jobs` threads, results keep input order."""
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(fn, items))


def output_path(out_dir: Path, item_id: str, suffix: str) -> Path:
    safe_id = item_id.replace("/", "_").replace("\\", "_")
    return Path(out_dir) / f"{safe_id}{suffix}"


# ==== Inputs


def pair_ids(pairs: list[DatasetPair]) -> list[str]:
    return [pair.id or f"pair-{i}" for i, pair in enumerate(pairs)]


def load_transcripts(path: str | Path, pairs: bool = False) -> list[Transcript]:
    """Transcripts from a transcript JSONL/txt input, or from the conversations of a dataset-pair file."""
    if pairs:
        return [pair_to_transcript(pair, i) for i, pair in enumerate(read_pairs(path))]
    return read_transcripts(path)


def read_summaries(path: str | Path) -> dict[str, str]:
    """Raw generated text by id, from a directory of summary JSON files."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"No summaries directory at '{path}'")

    summaries = {}
    for file in sorted(path.glob(f"*{Settings.summary_suffix}")):
        try:
            payload = json.loads(file.read_text(encoding=Settings.csv_encoding))
        except UnicodeDecodeError as err:
            raise ParseError(f"Summary file '{file}' is not valid {Settings.csv_encoding}: {err.reason}") from err
        except json.JSONDecodeError as err:
            raise ParseError(f"Summary file '{file}' is not valid JSON: {err.msg}", line=err.lineno) from err
        if not isinstance(payload, dict) or not isinstance(payload.get("id"), str):
            raise ParseError(f"Summary file '{file}' has no string id")
        summaries[payload["id"]] = str(payload.get("raw", ""))
    return summaries


# ==== Index, retrieve, summarize


def index_transcripts(
    transcripts: list[Transcript],
    cfg: AppConfig,
    out_dir: Path,
    jobs: int = 1,
    progress_callback: Callable[[str], None] = _noop,
) -> dict[str, int]:
    """Builds and saves one index per transcript. Returns chunk counts by transcript id."""
    provider = make_provider(cfg.embedding)
    progress = _Progress(len(transcripts), progress_callback)

    def index_one(transcript: Transcript) -> Optional[ChunkIndex]:
        index = _build_or_skip(transcript, provider, cfg)
        if index is not None:
            save_index(index, output_path(out_dir, transcript.id, Settings.index_suffix))
        progress.step()
        return index

    indexes = map_jobs(index_one, transcripts, jobs)
    return {index.transcript_id: index.n_docs for index in indexes if index is not None}


def _build_or_skip(transcript: Transcript, provider: EmbeddingProvider, cfg: AppConfig) -> Optional[ChunkIndex]:
    try:
        return build_index(transcript, provider, cfg.bm25.k1, cfg.bm25.b)
    except EmptyTranscriptError as err:
        logger.warning("Skipping transcript: %s", err)
        return None


def retrieve_indexes(
    indexes: list[ChunkIndex],
    cfg: AppConfig,
    out_dir: Path,
    with_explain: bool = False,
    jobs: int = 1,
    progress_callback: Callable[[str], None] = _noop,
) -> list[dict]:
    """Filters every index with the configured query and writes one context dump per transcript."""
    provider = make_provider(cfg.embedding)
    query = embed_query(cfg.query(), provider)
    progress = _Progress(len(indexes), progress_callback)

    def retrieve_one(index: ChunkIndex) -> dict:
        context = filter_index(index, provider, query, cfg.fusion)
        record = {
            "id": index.transcript_id,
            "provider": index.provider_name,
            "query": cfg.prompt.query,
            "fusion": dataclasses.asdict(cfg.fusion),
            "n_chunks": index.n_docs,
            "selected_ords": context.selected_ords,
            "context": context.concatenated_text,
        }
        if with_explain:
            record["candidates"] = explain(context, index)
        write_json_atomic(output_path(out_dir, index.transcript_id, Settings.retrieval_suffix), record)
        progress.step()
        return record

    return map_jobs(retrieve_one, indexes, jobs)


def build_indexes(transcripts: list[Transcript], cfg: AppConfig, jobs: int = 1) -> list[ChunkIndex]:
    provider = make_provider(cfg.embedding)
    indexes = map_jobs(lambda transcript: _build_or_skip(transcript, provider, cfg), transcripts, jobs)
    return [index for index in indexes if index is not None]


def load_indexes(path: str | Path) -> list[ChunkIndex]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No index found at '{path}'")
    files = sorted(path.glob(f"*{Settings.index_suffix}")) if path.is_dir() else [path]
    return [load_index(file) for file in files]


def summarize_transcripts(
    transcripts: list[Transcript],
    cfg: AppConfig,
    out_dir: Path,
    jobs: int = 1,
    progress_callback: Callable[[str], None] = _noop,
) -> list[SummaryResult]:
    """Runs the summarization pipeline per transcript and writes one summary JSON each.

    Unusable transcripts are skipped with a warning.
    """
    provider = make_provider(cfg.embedding)
    generator = make_generator(cfg.generator, cfg.base_dir)
    tokenizer = make_tokenizer(cfg.tokenizer)
    usable = [transcript for transcript in transcripts if transcript.is_usable]
    for transcript in transcripts:
        if not transcript.is_usable:
            logger.warning("Skipping transcript '%s': no text", transcript.id)
    query = embed_query(cfg.query(), provider)
    progress = _Progress(len(usable), progress_callback)

    def summarize_one(transcript: Transcript) -> SummaryResult:
        result = summarize_pipeline(
            transcript,
            provider,
            generator,
            query,
            cfg.fusion,
            instruction=cfg.prompt.instruction,
            tokenizer=tokenizer,
            k1=cfg.bm25.k1,
            b=cfg.bm25.b,
        )
        write_json_atomic(output_path(out_dir, transcript.id, Settings.summary_suffix), result.to_json())
        progress.step()
        return result

    return map_jobs(summarize_one, usable, jobs)


# ==== Evaluation


def evaluate_summaries(
    pairs: list[DatasetPair],
    summaries: dict[str, str],
    cfg: AppConfig,
    with_embed: bool = True,
    provider: Optional[EmbeddingProvider] = None,
) -> EvalReport:
    """Scores generated summaries against the reference summaries of the pairs they were made from."""
    ids, candidates, references = [], [], []
    for item_id, pair in zip(pair_ids(pairs), pairs):
        if item_id not in summaries:
            logger.warning("No summary for '%s', left out of the report", item_id)
            continue
        ids.append(item_id)
        candidates.append(summaries[item_id])
        references.append(pair.summary)
    if not ids:
        raise PreconditionError("No generated summary matches a reference id")

    if with_embed and provider is None:
        provider = make_provider(cfg.embedding)
    return evaluate_pairs(
        candidates, references, make_tokenizer(cfg.tokenizer), provider if with_embed else None, item_ids=ids
    )


def evaluate_systems(
    pairs: list[DatasetPair],
    systems: dict[str, dict[str, str]],
    cfg: AppConfig,
    with_embed: bool = True,
    progress_callback: Optional[Callable[[str], None]] = None,
) -> SystemComparison:
    """Scores several systems' summaries against the same references, then compares them."""
    provider = make_provider(cfg.embedding) if with_embed else None
    reports = {}
    for done, (name, summaries) in enumerate(systems.items(), start=1):
        reports[name] = evaluate_summaries(pairs, summaries, cfg, with_embed, provider)
        if progress_callback is not None:
            progress_callback(f"{done}/{len(systems)}")
    return compare_systems(reports)


def dataset_stats(pairs: list[DatasetPair], cfg: AppConfig) -> dict[str, CorpusStats]:
    tokenizer = make_tokenizer(cfg.tokenizer)
    return {
        "conversation": corpus_stats([pair.conversation for pair in pairs], tokenizer),
        "summary": corpus_stats([pair.summary for pair in pairs], tokenizer),
    }


def transcript_stats(transcripts: list[Transcript], cfg: AppConfig) -> dict[str, CorpusStats]:
    texts = [flatten_diarized(transcript) for transcript in transcripts if transcript.is_usable]
    return {"conversation": corpus_stats(texts, make_tokenizer(cfg.tokenizer))}


# ==== Human review


def write_review_sheet(
    pairs: list[DatasetPair],
    summaries_x: dict[str, str],
    summaries_y: dict[str, str],
    seed: int,
    out_dir: Path,
    systems: tuple[str, str] = ("X", "Y"),
) -> dict[str, Path]:
    """Writes the blinded sheet, its key and the reviewer instructions. Only items both systems summarized."""
    ids, conversations, ground_truth = [], [], []
    for item_id, pair in zip(pair_ids(pairs), pairs):
        if item_id in summaries_x and item_id in summaries_y:
            ids.append(item_id)
            conversations.append(pair.conversation)
            ground_truth.append(pair.summary)
    if not ids:
        raise PreconditionError("No item was summarized by both systems")

    sheet, key = make_review_sheet(
        [summaries_x[item_id] for item_id in ids],
        [summaries_y[item_id] for item_id in ids],
        ground_truth,
        seed,
        conversations=conversations,
        item_ids=ids,
        systems=systems,
    )
    paths = {
        "sheet": Path(out_dir) / Settings.review_sheet_filename,
        "key": Path(out_dir) / Settings.review_key_filename,
        "instructions": Path(out_dir) / Settings.review_instructions_filename,
    }
    write_csv_atomic(
        paths["sheet"],
        SHEET_COLUMNS,
        (
            {
                "item_id": item.item_id,
                "conversation": item.conversation,
                "summary_A": item.summary_a,
                "summary_B": item.summary_b,
                "ground_truth": item.ground_truth,
                "choice": None,
            }
            for item in sheet
        ),
    )
    write_csv_atomic(
        paths["key"],
        KEY_COLUMNS,
        ({"item_id": entry.item_id, "A_system": entry.a_system, "B_system": entry.b_system} for entry in key),
    )
    write_atomic(paths["instructions"], review_instructions(len(sheet)))
    return paths


def read_key(path: str | Path) -> dict[str, KeyEntry]:
    rows = _read_checked_csv(path, KEY_COLUMNS)
    key = {}
    for line_no, row in rows:
        entry = KeyEntry(item_id=row["item_id"], a_system=row["A_system"], b_system=row["B_system"])
        if entry.item_id in key:
            raise ParseError(f"Item '{entry.item_id}' appears twice in the key", line=line_no)
        key[entry.item_id] = entry
    return key


def read_preferences(path: str | Path) -> list[PreferenceRecord]:
    records = []
    for line_no, row in _read_checked_csv(path, PREFERENCE_COLUMNS):
        try:
            choice = parse_choice(row["choice"])
        except ParseError as err:
            raise ParseError(str(err), line=line_no) from err
        records.append(PreferenceRecord(rater_id=row["rater_id"], item_id=row["item_id"], choice=choice))
    return records


def _read_checked_csv(path: str | Path, columns: list[str]) -> list[tuple[int, dict[str, str]]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No CSV file at '{path}'")
    try:
        rows = read_csv(path)
    except UnicodeDecodeError as err:
        raise ParseError(f"'{path}' is not valid {Settings.csv_encoding}: {err.reason}") from err
    # header is line 1
    checked = []
    for line_no, row in enumerate(rows, start=2):
        missing = [column for column in columns if not (row.get(column) or "").strip()]
        if missing:
            raise ParseError(f"Missing value(s) for {', '.join(missing)} in '{path}'", line=line_no)
        checked.append((line_no, {column: row[column].strip() for column in columns}))
    return checked
