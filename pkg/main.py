import functools
import sys
from pathlib import Path
from time import perf_counter
from typing import Any, Optional

import rich_click as click
from rich.console import Console
from rich.table import Table
from rich.traceback import install as install_exception_handler

from src.batch import (
    build_indexes,
    dataset_stats,
    evaluate_systems,
    index_transcripts,
    load_indexes,
    load_transcripts,
    read_key,
    read_preferences,
    read_summaries,
    retrieve_indexes,
    summarize_transcripts,
    transcript_stats,
    write_review_sheet,
)
from src.config import AppConfig, config_keys, load_config, overrides_from_params
from src.corpus import read_pairs
from src.errors import ConfigError, ConvSoapError
from src.evaluation import irr_from_records, preference_matrix, win_rate
from src.infra.files import write_json_atomic
from src.infra.logs import setup_logging
from src.models.evaluation import EvalReport, RaterWinRate, SystemComparison, WinRateTable
from src.models.stats import CorpusStats
from src.settings import Settings

install_exception_handler(show_locals=False)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class ConvSoapGroup(click.RichGroup):
    """Maps failures to exit codes: 1 for usage and configuration errors, 2 for runtime errors."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        error_console = Console(stderr=True)
        try:
            result = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
            code = result if isinstance(result, int) else EXIT_OK
        except click.Abort:
            error_console.print("Aborted.")
            code = EXIT_USAGE
        except click.ClickException as err:
            err.show()
            code = EXIT_USAGE
        except (ConfigError, FileNotFoundError) as err:
            error_console.print(f"[bold red]Error:[/bold red] {err}")
            code = EXIT_USAGE
        except (ConvSoapError, OSError, UnicodeDecodeError) as err:
            error_console.print(f"[bold red]Error:[/bold red] {err}")
            code = EXIT_RUNTIME
        if standalone_mode:
            sys.exit(code)
        return code


CONFIG_HELP = f"TOML experiment config, defaults to ./{Settings.default_config_filename} when present."


def _config_override_options(fn):
    for section, key, kind in reversed(config_keys()):
        flag = f"--{section}-{key}".replace("_", "-")
        help_text = f"Override {section}.{key} of the config."
        fn = click.option(flag, f"{section}__{key}", type=kind, default=None, help=help_text)(fn)
    return fn


def _run_options(fn):
    """
    Adds --config, --jobs, --seed, --verbose and the config overrides to a command.

    They are accepted both before and after the command name; values given after it win. The command
    receives the merged run state as its first argument, like click.pass_obj.
    """

    @functools.wraps(fn)
    def wrapper(config_path: Optional[str], jobs: Optional[int], seed: Optional[int], verbose: bool, **params: Any):
        ctx = click.get_current_context()
        command_params = {name: params.pop(name) for name in list(params) if "__" in name}
        obj = _resolve_run(ctx.obj, config_path, jobs, seed, verbose, overrides_from_params(command_params))
        return fn(obj, **params)

    wrapper = _config_override_options(wrapper)
    wrapper = click.option("--verbose", "-v", is_flag=True, help="Debug logging.")(wrapper)
    wrapper = click.option("--seed", type=int, default=None, help="Seed for review-sheet shuffling.")(wrapper)
    wrapper = click.option(
        "--jobs", "-j", type=click.IntRange(min=1), default=None, help="Parallel transcripts, 1 by default."
    )(wrapper)
    wrapper = click.option(
        "--config", "-c", "config_path", type=click.Path(dir_okay=False), default=None, help=CONFIG_HELP
    )(wrapper)
    return wrapper


def _resolve_run(
    group: dict,
    config_path: Optional[str],
    jobs: Optional[int],
    seed: Optional[int],
    verbose: bool,
    overrides: dict[str, Any],
) -> dict:
    if verbose and not group["verbose"]:
        setup_logging(True)
    config_path = config_path or group["config_path"]
    if config_path is None and Path(Settings.default_config_filename).exists():
        config_path = Settings.default_config_filename
    return {
        "console": group["console"],
        "config": load_config(config_path, {**group["overrides"], **overrides}),
        "jobs": jobs or group["jobs"],
        "seed": group["seed"] if seed is None else seed,
    }


@click.group(cls=ConvSoapGroup)
@click.option("--config", "-c", "config_path", type=click.Path(dir_okay=False), default=None, help=CONFIG_HELP)
@click.option("--jobs", "-j", type=click.IntRange(min=1), default=1, show_default=True, help="Parallel transcripts.")
@click.option("--seed", type=int, default=None, help="Seed for review-sheet shuffling.")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
@_config_override_options
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], jobs: int, seed: Optional[int], verbose: bool, **params: Any):
    """
    convsoap: retriever-filtered SOAP summaries of patient-doctor conversations.

    Splits transcripts into sentences, keeps those a BM25 and an embedding retriever agree on
    through weighted reciprocal rank fusion, asks a chat model for a SOAP note and evaluates the result.
    """
    setup_logging(verbose)
    ctx.obj = {
        "console": Console(),
        "config_path": config_path,
        "overrides": overrides_from_params(params),
        "jobs": jobs,
        "seed": seed,
        "verbose": verbose,
    }


def _input_option(*decls: str, **kwargs):
    return click.option(*decls, type=click.Path(exists=True), **kwargs)


def _out_dir_option(default: str):
    return click.option(
        "--out",
        "-o",
        "out_dir",
        type=click.Path(file_okay=False),
        default=default,
        show_default=True,
        help="Output directory.",
    )


@cli.command()
@_input_option("--in", "-i", "input_path", required=True, help="Transcripts: JSONL file, .txt file or directory.")
@click.option("--pairs", is_flag=True, help="Input is a conversation/summary dataset (JSONL or Parquet).")
@_out_dir_option("indexes")
@_run_options
def index(obj: dict, input_path: str, pairs: bool, out_dir: str):
    """Split and embed every transcript, save one index per transcript."""
    console: Console = obj["console"]
    transcripts = load_transcripts(input_path, pairs)

    start = perf_counter()
    with console.status("Indexing…", spinner="dots") as status:
        chunk_counts = index_transcripts(
            transcripts,
            obj["config"],
            Path(out_dir),
            obj["jobs"],
            lambda progress: status.update(f"Indexing… {progress}"),
        )
    console.print(f"Indexed {len(chunk_counts)} of {len(transcripts)} transcripts in {perf_counter() - start:.2f}s")

    table = Table(title="Indexes")
    table.add_column("Transcript", style="cyan")
    table.add_column("Chunks", style="magenta", justify="right")
    for transcript_id, n_chunks in chunk_counts.items():
        table.add_row(transcript_id, str(n_chunks))
    console.print(table)


@cli.command()
@_input_option("--in", "-i", "input_path", help="Transcripts to index on the fly.")
@_input_option("--index", "index_path", help="Index file or directory of index files.")
@click.option("--pairs", is_flag=True, help="--in is a conversation/summary dataset.")
@click.option("--explain", "with_explain", is_flag=True, help="Dump ranks and scores of every fused candidate.")
@_out_dir_option("contexts")
@_run_options
def retrieve(
    obj: dict, input_path: Optional[str], index_path: Optional[str], pairs: bool, with_explain: bool, out_dir: str
):
    """Filter transcripts down to the chunks relevant to a SOAP note."""
    if (input_path is None) == (index_path is None):
        raise click.UsageError("Pass exactly one of --in and --index")
    console: Console = obj["console"]
    cfg: AppConfig = obj["config"]

    start = perf_counter()
    with console.status("Retrieving…", spinner="dots") as status:
        if index_path is not None:
            indexes = load_indexes(index_path)
        else:
            indexes = build_indexes(load_transcripts(input_path, pairs), cfg, obj["jobs"])
        records = retrieve_indexes(
            indexes,
            cfg,
            Path(out_dir),
            with_explain,
            obj["jobs"],
            lambda progress: status.update(f"Retrieving… {progress}"),
        )
    console.print(f"Filtered {len(records)} transcripts in {perf_counter() - start:.2f}s")

    table = Table(title="Retained chunks")
    table.add_column("Transcript", style="cyan")
    table.add_column("Kept", style="magenta", justify="right")
    table.add_column("Of", style="magenta", justify="right")
    for record in records:
        table.add_row(record["id"], str(len(record["selected_ords"])), str(record["n_chunks"]))
    console.print(table)


@cli.command()
@_input_option("--in", "-i", "input_path", required=True, help="Transcripts: JSONL file, .txt file or directory.")
@click.option("--pairs", is_flag=True, help="Input is a conversation/summary dataset (JSONL or Parquet).")
@_out_dir_option("summaries")
@_run_options
def summarize(obj: dict, input_path: str, pairs: bool, out_dir: str):
    """Filter each transcript and generate a SOAP summary from the retained context."""
    console: Console = obj["console"]
    transcripts = load_transcripts(input_path, pairs)

    start = perf_counter()
    with console.status("Summarizing…", spinner="dots") as status:
        results = summarize_transcripts(
            transcripts,
            obj["config"],
            Path(out_dir),
            obj["jobs"],
            lambda progress: status.update(f"Summarizing… {progress}"),
        )
    console.print(f"Summarized {len(results)} transcripts in {perf_counter() - start:.2f}s")

    table = Table(title="Summaries")
    table.add_column("Transcript", style="cyan")
    table.add_column("Context tokens", style="magenta", justify="right")
    table.add_column("Transcript tokens", style="magenta", justify="right")
    table.add_column("Missing sections", style="red")
    for result in results:
        table.add_row(
            result.transcript_id,
            str(result.context_tokens),
            str(result.transcript_tokens),
            ", ".join(result.missing_sections),
        )
    console.print(table)


@cli.command()
@_input_option("--references", "-r", "references_path", required=True, help="Dataset with reference summaries.")
@click.option(
    "--summaries",
    "-s",
    "summaries_specs",
    multiple=True,
    required=True,
    help="Directory written by summarize, as DIR or NAME=DIR. Repeat to compare systems.",
)
@click.option("--embed/--no-embed", "with_embed", default=True, show_default=True, help="Compute embed_score.")
@click.option(
    "--out",
    "-o",
    "out_path",
    type=click.Path(dir_okay=False),
    default=Settings.eval_report_filename,
    show_default=True,
    help="Report JSON file.",
)
@_run_options
def evaluate(obj: dict, references_path: str, summaries_specs: tuple[str, ...], with_embed: bool, out_path: str):
    """Score generated summaries against the references with ROUGE, embed_score and token counts."""
    console: Console = obj["console"]
    systems = _parse_systems(summaries_specs)
    with console.status("Evaluating…", spinner="dots") as status:
        pairs = read_pairs(references_path)
        summaries = {name: read_summaries(path) for name, path in systems.items()}
        comparison = evaluate_systems(
            pairs, summaries, obj["config"], with_embed, lambda progress: status.update(f"Evaluating… {progress}")
        )
        if len(comparison.reports) == 1:
            payload = next(iter(comparison.reports.values())).to_json()
        else:
            payload = comparison.to_json()
        write_json_atomic(Path(out_path), payload)

    if len(comparison.reports) == 1:
        _print_report(console, next(iter(comparison.reports.values())))
    else:
        _print_comparison(console, comparison)
    console.print(f"Report saved to [bold]{out_path}[/bold]")


def _parse_systems(specs: tuple[str, ...]) -> dict[str, str]:
    systems: dict[str, str] = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).name or spec, spec
        if not name or not path:
            raise click.UsageError(f"--summaries '{spec}' must be DIR or NAME=DIR")
        if name in systems:
            raise click.UsageError(f"System '{name}' is given twice, name it with NAME=DIR")
        systems[name] = path
    return systems


def _print_report(console: Console, report: EvalReport):
    table = Table(title=f"Evaluation over {len(report.items)} summaries")
    table.add_column("Metric", style="cyan")
    for column in ("P", "R", "F-1"):
        table.add_column(column, style="magenta", justify="right")
    scores = {"ROUGE-1": report.rouge1, "ROUGE-2": report.rouge2, "ROUGE-L": report.rouge_l}
    if report.embed_score is not None:
        scores["embed_score"] = report.embed_score
    for name, score in scores.items():
        table.add_row(name, f"{score.precision:.4f}", f"{score.recall:.4f}", f"{score.f1:.4f}")
    console.print(table)
    console.print(
        f"Mean tokens ({report.tokenizer}): generated {report.candidate_tokens.aggregate.mean:.2f}, "
        f"reference {report.reference_tokens.aggregate.mean:.2f}"
    )


def _print_comparison(console: Console, comparison: SystemComparison):
    table = Table(title=f"F-1 of {len(comparison.reports)} systems")
    table.add_column("System", style="cyan")
    for column in ("ROUGE-1", "ROUGE-2", "ROUGE-L", "embed_score", "Items", "Mean tokens"):
        table.add_column(column, style="magenta", justify="right")
    for name, report in comparison.reports.items():
        table.add_row(
            name,
            f"{report.rouge1.f1:.4f}",
            f"{report.rouge2.f1:.4f}",
            f"{report.rouge_l.f1:.4f}",
            "n/a" if report.embed_score is None else f"{report.embed_score.f1:.4f}",
            str(len(report.items)),
            f"{report.candidate_tokens.aggregate.mean:.2f}",
        )
    reference = next(iter(comparison.reports.values())).reference_tokens.aggregate.mean
    table.add_row("reference", "", "", "", "", "", f"{reference:.2f}", style="dim")
    console.print(table)
    console.print(
        f"Mean tokens vs {comparison.metric} F-1: r = {_format_rate(comparison.token_f1_correlation)}; "
        f"distance to reference tokens vs F-1: r = {_format_rate(comparison.token_gap_f1_correlation)}"
    )


@cli.command()
@_input_option("--in", "-i", "input_path", required=True, help="Dataset pairs, or transcripts with --transcripts.")
@click.option("--transcripts", "is_transcripts", is_flag=True, help="Input holds transcripts, not dataset pairs.")
@_run_options
def stats(obj: dict, input_path: str, is_transcripts: bool):
    """Sentence, word, character, vocabulary and token statistics of a dataset."""
    cfg: AppConfig = obj["config"]
    if is_transcripts:
        columns = transcript_stats(load_transcripts(input_path), cfg)
    else:
        columns = dataset_stats(read_pairs(input_path), cfg)
    for name, corpus in columns.items():
        _print_corpus_stats(obj["console"], name, corpus)


def _print_corpus_stats(console: Console, name: str, corpus: CorpusStats):
    table = Table(title=f"{name.capitalize()} ({corpus.count} texts, vocabulary {corpus.vocab_size})")
    table.add_column("Metric", style="cyan")
    for column in ("Mean", "Max", "Min"):
        table.add_column(column, style="magenta", justify="right")
    for metric in ("sentences", "words", "chars", "vocab", "tokens"):
        aggregate = getattr(corpus, metric)
        table.add_row(metric, f"{aggregate.mean:.2f}", str(aggregate.max), str(aggregate.min))
    console.print(table)


@cli.command("review-sheet")
@_input_option("--references", "-r", "references_path", required=True, help="Dataset with reference summaries.")
@_input_option("--x", "x_dir", required=True, help="Summaries directory of system X.")
@_input_option("--y", "y_dir", required=True, help="Summaries directory of system Y.")
@click.option("--system-x", default="X", show_default=True, help="Name of system X in the key.")
@click.option("--system-y", default="Y", show_default=True, help="Name of system Y in the key.")
@_out_dir_option("review")
@_run_options
def review_sheet(
    obj: dict, references_path: str, x_dir: str, y_dir: str, system_x: str, system_y: str, out_dir: str
):
    """Write a blinded A/B review sheet, its key and the reviewer instructions."""
    if obj["seed"] is None:
        raise click.UsageError("review-sheet needs --seed")
    paths = write_review_sheet(
        read_pairs(references_path),
        read_summaries(x_dir),
        read_summaries(y_dir),
        obj["seed"],
        Path(out_dir),
        (system_x, system_y),
    )
    console: Console = obj["console"]
    console.print(f"\nReview files are saved to the [bold]{out_dir}[/bold] directory:\n")
    for path in paths.values():
        console.print(f"    [bold]{path.name}[/bold]")
    console.print(f"\nGive raters {paths['sheet'].name} and {paths['instructions'].name}, keep {paths['key'].name}.")


@cli.command()
@_input_option("--prefs", "prefs_path", required=True, help="Preferences CSV: rater_id, item_id, choice.")
@_input_option("--key", "key_path", required=True, help="Key CSV written by review-sheet.")
@click.option("--out", "-o", "out_path", type=click.Path(dir_okay=False), default=None, help="Optional JSON dump.")
@_run_options
def irr(obj: dict, prefs_path: str, key_path: str, out_path: Optional[str]):
    """Win rates per rater and inter-rater agreement of a blinded review."""
    console: Console = obj["console"]
    records, key = read_preferences(prefs_path), read_key(key_path)
    table = win_rate(records, key)
    matrix = preference_matrix(records, key, table.systems)
    agreement = irr_from_records(records)

    _print_win_rates(console, table)
    _print_preference_matrix(console, matrix)
    console.print(
        f"Fleiss' kappa {agreement.fleiss_kappa:.5f}, Krippendorff's alpha {agreement.krippendorff_alpha:.5f} "
        f"({agreement.n_raters} raters, {agreement.n_items} items)"
    )

    if out_path is not None:
        write_json_atomic(
            Path(out_path),
            {
                "systems": list(table.systems),
                "raters": [_win_rate_json(row) for row in table.raters],
                "total": _win_rate_json(table.total),
                "pooled": _win_rate_json(table.pooled),
                "preference_matrix": matrix,
                "fleiss_kappa": agreement.fleiss_kappa,
                "krippendorff_alpha": agreement.krippendorff_alpha,
            },
        )


def _print_win_rates(console: Console, table: WinRateTable):
    x, y = table.systems
    rich_table = Table(title="Win rates (ties excluded)")
    rich_table.add_column("Rater", style="cyan")
    for column in (x, y, "Tie", f"{x} win rate", f"{y} win rate"):
        rich_table.add_column(column, style="magenta", justify="right")
    for row in [*table.raters, table.total, table.pooled]:
        rich_table.add_row(
            row.rater_id,
            str(row.wins[x]),
            str(row.wins[y]),
            str(row.ties),
            _format_rate(row.rates[x]),
            _format_rate(row.rates[y]),
        )
    console.print(rich_table)


def _print_preference_matrix(console: Console, matrix: dict[str, dict[str, int]]):
    rich_table = Table(title="Preferences per rater")
    rich_table.add_column("Rater", style="cyan")
    labels = list(next(iter(matrix.values())).keys()) if matrix else []
    for label in labels:
        rich_table.add_column(label, style="magenta", justify="right")
    for rater_id, counts in matrix.items():
        rich_table.add_row(rater_id, *(str(counts[label]) for label in labels))
    console.print(rich_table)


def _format_rate(rate: Optional[float]) -> str:
    return "n/a" if rate is None else f"{rate:.2f}"


def _win_rate_json(row: RaterWinRate) -> dict:
    return {"rater_id": row.rater_id, "wins": row.wins, "ties": row.ties, "rates": row.rates}


def run():
    cli(prog_name="convsoap")


if __name__ == "__main__":
    run()
