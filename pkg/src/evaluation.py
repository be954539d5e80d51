"""
Evaluation suite: lexical overlap (ROUGE-1/2/L), an embedding-similarity score, token counts,
blinded A/B review sheets, win rates and inter-rater agreement.

ROUGE tokenization is the same term split used for BM25: lowercase, split on non-alphanumeric runs,
no stemming and no stopwords.
"""

import dataclasses
import logging
import math
from collections import Counter
from collections.abc import Mapping, Sequence
from typing import Optional

import numpy as np
import numpy.typing as npt
from statsmodels.stats import inter_rater

from src.embed import EmbeddingProvider, embed_batch
from src.errors import DegenerateAgreementError, ParseError, PreconditionError, UnknownItemError
from src.infra.text import terms
from src.models.evaluation import (
    Choice,
    EvalReport,
    IrrResult,
    ItemEvaluation,
    KeyEntry,
    PreferenceRecord,
    RaterWinRate,
    ReviewItem,
    RougeScore,
    SystemComparison,
    WinRateTable,
)
from src.models.stats import Aggregate, TokenReport
from src.models.tokenizer import Tokenizer

logger = logging.getLogger(__name__)

TIE_LABEL = "tie"
TOTAL_ROW = "total"
POOLED_ROW = "pooled"

_CHOICE_SPELLINGS = {"A": Choice.A, "B": Choice.B, "AB": Choice.TIE, "A/B": Choice.TIE, "TIE": Choice.TIE}
_IRR_CATEGORIES = (Choice.A, Choice.B, Choice.TIE)


# ==== ROUGE


def rouge_n(candidate: str, reference: str, n: int = 1) -> RougeScore:
    if n < 1:
        raise PreconditionError(f"n must be at least 1, got {n}")
    cand_ngrams = _ngrams(terms(candidate), n)
    ref_ngrams = _ngrams(terms(reference), n)
    if not cand_ngrams or not ref_ngrams:
        return RougeScore()

    overlap = sum((cand_ngrams & ref_ngrams).values())
    return RougeScore.of(overlap / cand_ngrams.total(), overlap / ref_ngrams.total())


def _ngrams(tokens: list[str], n: int) -> Counter[tuple[str, ...]]:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_l(candidate: str, reference: str) -> RougeScore:
    cand, ref = terms(candidate), terms(reference)
    if not cand or not ref:
        return RougeScore()
    lcs = lcs_length(cand, ref)
    return RougeScore.of(lcs / len(cand), lcs / len(ref))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, one DP row at a time."""
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0]
        for j, token_b in enumerate(b, start=1):
            current.append(previous[j - 1] + 1 if token_a == token_b else max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


# ==== Embedding score


def embed_score(candidate: str, reference: str, provider: EmbeddingProvider) -> RougeScore:
    """
    Greedy token matching over embedding cosines: precision averages, over candidate tokens, the best
    cosine to any reference token, recall does the same from the reference side.
    """
    cand, ref = terms(candidate), terms(reference)
    if not cand or not ref:
        return RougeScore()

    similarity = _token_matrix(cand, provider) @ _token_matrix(ref, provider).T
    similarity = np.clip(similarity, -1.0, 1.0)
    precision = float(similarity.max(axis=1).mean())
    recall = float(similarity.max(axis=0).mean())
    return RougeScore.of(precision, recall)


def _token_matrix(tokens: list[str], provider: EmbeddingProvider) -> npt.NDArray[np.float64]:
    vocab = list(dict.fromkeys(tokens))
    vectors = dict(zip(vocab, embed_batch(provider, vocab)))
    return np.vstack([vectors[token] for token in tokens])


# ==== Token counts


def token_report(summaries: Sequence[str], tokenizer: Tokenizer) -> TokenReport:
    counts = [tokenizer.count(summary) for summary in summaries]
    return TokenReport(counts=counts, aggregate=Aggregate.of_counts(counts))


def evaluate_pairs(
    candidates: Sequence[str],
    references: Sequence[str],
    tokenizer: Tokenizer,
    provider: Optional[EmbeddingProvider] = None,
    item_ids: Optional[Sequence[str]] = None,
) -> EvalReport:
    if not candidates:
        raise PreconditionError("Nothing to evaluate")
    if len(candidates) != len(references):
        raise PreconditionError(f"{len(candidates)} candidates but {len(references)} references")
    item_ids = list(item_ids) if item_ids is not None else [str(i) for i in range(len(candidates))]
    if len(item_ids) != len(candidates):
        raise PreconditionError(f"{len(item_ids)} item ids for {len(candidates)} candidates")

    items = [
        ItemEvaluation(
            item_id=item_id,
            rouge1=rouge_n(candidate, reference, 1),
            rouge2=rouge_n(candidate, reference, 2),
            rouge_l=rouge_l(candidate, reference),
            embed_score=embed_score(candidate, reference, provider) if provider is not None else None,
            candidate_tokens=tokenizer.count(candidate),
            reference_tokens=tokenizer.count(reference),
        )
        for item_id, candidate, reference in zip(item_ids, candidates, references)
    ]
    logger.info("Evaluated %d summaries", len(items))

    return EvalReport(
        items=items,
        rouge1=_mean_score([item.rouge1 for item in items]),
        rouge2=_mean_score([item.rouge2 for item in items]),
        rouge_l=_mean_score([item.rouge_l for item in items]),
        embed_score=_mean_score([item.embed_score for item in items if item.embed_score is not None])
        if provider is not None
        else None,
        candidate_tokens=token_report(candidates, tokenizer),
        reference_tokens=token_report(references, tokenizer),
        tokenizer=tokenizer.name,
    )


def _mean_score(scores: list[RougeScore]) -> RougeScore:
    if not scores:
        return RougeScore()
    return RougeScore(
        precision=float(np.mean([s.precision for s in scores])),
        recall=float(np.mean([s.recall for s in scores])),
        f1=float(np.mean([s.f1 for s in scores])),
    )


# ==== System comparison


def compare_systems(reports: Mapping[str, EvalReport]) -> SystemComparison:
    """
    Relates summary length to quality across systems: mean generated tokens against F1, and the distance
    between mean generated and mean reference tokens against F1.
    """
    if not reports:
        raise PreconditionError("No system to compare")
    with_embed = {report.embed_score is not None for report in reports.values()}
    if len(with_embed) > 1:
        raise PreconditionError("Either every report or none carries embed_score")

    comparison = SystemComparison(reports=dict(reports), metric="embed_score" if with_embed.pop() else "rougeL")
    f1 = [comparison.f1(name) for name in reports]
    means = [(r.candidate_tokens.aggregate.mean, r.reference_tokens.aggregate.mean) for r in reports.values()]
    tokens = [generated for generated, _ in means]
    gaps = [abs(generated - reference) for generated, reference in means]
    return dataclasses.replace(
        comparison,
        token_f1_correlation=pearson(tokens, f1),
        token_gap_f1_correlation=pearson(gaps, f1),
    )


def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Pearson r, None for fewer than two points or a constant side."""
    xs, ys = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if len(xs) != len(ys):
        raise PreconditionError(f"{len(xs)} x values but {len(ys)} y values")
    if len(xs) < 2 or np.ptp(xs) == 0 or np.ptp(ys) == 0:
        return None
    return float(np.corrcoef(xs, ys)[0, 1])


# ==== Review sheets


def make_review_sheet(
    summaries_x: Sequence[str],
    summaries_y: Sequence[str],
    ground_truth: Sequence[str],
    seed: int,
    conversations: Optional[Sequence[str]] = None,
    item_ids: Optional[Sequence[str]] = None,
    systems: tuple[str, str] = ("X", "Y"),
) -> tuple[list[ReviewItem], list[KeyEntry]]:
    """
    Blinds two systems' summaries behind labels A and B.

    Exactly ceil(n/2) items show system X as A, which ones is decided by a shuffle seeded with seed.
    """
    n = len(summaries_x)
    conversations = conversations if conversations is not None else [""] * n
    item_ids = item_ids if item_ids is not None else [str(i + 1) for i in range(n)]
    columns = {"summaries_y": summaries_y, "ground_truth": ground_truth, "conversations": conversations}
    for name, column in {**columns, "item_ids": item_ids}.items():
        if len(column) != n:
            raise PreconditionError(f"{name} has {len(column)} entries, expected {n}")
    if systems[0] == systems[1]:
        raise PreconditionError(f"System names must differ, got '{systems[0]}' twice")

    x_is_a = np.array([True] * math.ceil(n / 2) + [False] * (n // 2))
    np.random.default_rng(seed).shuffle(x_is_a)

    sheet, key = [], []
    for i in range(n):
        system_a, system_b = systems if x_is_a[i] else systems[::-1]
        summary_a, summary_b = (summaries_x[i], summaries_y[i]) if x_is_a[i] else (summaries_y[i], summaries_x[i])
        sheet.append(ReviewItem(item_ids[i], conversations[i], summary_a, summary_b, ground_truth[i]))
        key.append(KeyEntry(item_ids[i], system_a, system_b))
    return sheet, key


def review_instructions(n_items: Optional[int] = None) -> str:
    count = f"the {n_items}" if n_items is not None else "the"
    return (
        f"Compare the two summaries written for each of {count} patient-doctor conversations on the sheet.\n"
        "The conversation column holds the transcript, summary_A and summary_B hold the two generated "
        "summaries and ground_truth holds the reference summary.\n"
        "Write A in the choice column when you prefer summary A, B when you prefer summary B, and A/B when "
        "both are equally good.\n"
        "\n"
        "Prefer the summary that is factually accurate, keeps every critical detail, keeps some non-critical "
        "detail and carries little irrelevant detail:\n"
        "\n"
        "- Factual correctness: symptoms, their timeline, demographics, diagnosis, ordered tests and history "
        "match the conversation. A wrong or missing key fact can lead to improper care.\n"
        "- Critical information: everything needed for diagnosis and the treatment plan, such as onset and "
        "duration of symptoms, associated pain, recent injury or relevant pre-existing conditions.\n"
        "- Non-critical information: details that do not change the medical value of the summary, such as "
        "family size in a diabetes consultation.\n"
        "- Irrelevant information: details whose absence does not hurt the summary, such as an old sprained "
        "ankle in a consultation about sudden loss of vision.\n"
    )


# ==== Preferences and win rates


def parse_choice(text: str) -> Choice:
    normalized = "".join(text.split()).upper()
    if normalized not in _CHOICE_SPELLINGS:
        raise ParseError(f"Unknown choice '{text}', expected A, B or A/B")
    return _CHOICE_SPELLINGS[normalized]


def win_rate(
    records: Sequence[PreferenceRecord],
    key: Mapping[str, KeyEntry],
    systems: Optional[tuple[str, str]] = None,
) -> WinRateTable:
    """
    Win rate of each system per rater: preferred / (rated - ties).

    The total row averages the per-rater rates, raters whose items were all ties are left out of the
    average. The pooled row divides summed counts instead.
    """
    systems = systems or _systems_of(key)
    counts: dict[str, Counter[str]] = {}
    seen: set[tuple[str, str]] = set()
    for record in records:
        if record.item_id not in key:
            raise UnknownItemError(f"Item '{record.item_id}' rated by '{record.rater_id}' is not in the key")
        if (record.rater_id, record.item_id) in seen:
            raise PreconditionError(f"Rater '{record.rater_id}' rated item '{record.item_id}' twice")
        seen.add((record.rater_id, record.item_id))

        system = key[record.item_id].system_for(record.choice)
        if system is not None and system not in systems:
            raise PreconditionError(f"Item '{record.item_id}' maps to system '{system}', expected one of {systems}")
        counts.setdefault(record.rater_id, Counter())[system or TIE_LABEL] += 1

    raters = [_rater_row(rater_id, rater_counts, systems) for rater_id, rater_counts in counts.items()]
    defined = [row for row in raters if row.rates[systems[0]] is not None]

    wins = {system: sum(row.wins[system] for row in raters) for system in systems}
    ties = sum(row.ties for row in raters)
    total = RaterWinRate(
        rater_id=TOTAL_ROW,
        wins=wins,
        ties=ties,
        rates={
            system: float(np.mean([row.rates[system] for row in defined])) if defined else None for system in systems
        },
    )
    pooled = _rater_row(POOLED_ROW, Counter({**wins, TIE_LABEL: ties}), systems)
    return WinRateTable(systems=systems, raters=raters, total=total, pooled=pooled)


def _rater_row(rater_id: str, counts: Counter[str], systems: tuple[str, str]) -> RaterWinRate:
    wins = {system: counts[system] for system in systems}
    decided = sum(wins.values())
    return RaterWinRate(
        rater_id=rater_id,
        wins=wins,
        ties=counts[TIE_LABEL],
        rates={system: wins[system] / decided if decided else None for system in systems},
    )


def _systems_of(key: Mapping[str, KeyEntry]) -> tuple[str, str]:
    names = sorted({entry.a_system for entry in key.values()} | {entry.b_system for entry in key.values()})
    if len(names) != 2:
        raise PreconditionError(f"Key must name exactly two systems, found {names}")
    return names[0], names[1]


def preference_matrix(
    records: Sequence[PreferenceRecord],
    key: Mapping[str, KeyEntry],
    systems: Optional[tuple[str, str]] = None,
) -> dict[str, dict[str, int]]:
    """Rater → {system X, system Y, tie} counts."""
    table = win_rate(records, key, systems)
    return {row.rater_id: {**row.wins, TIE_LABEL: row.ties} for row in table.raters}


# ==== Inter-rater reliability


def fleiss_kappa(counts: npt.ArrayLike, n_raters: int) -> float:
    """
    Fleiss' kappa over an items × categories matrix of rating counts, every row summing to n_raters.

    When every rating falls into one category, chance agreement is 1 and kappa is defined as 1.
    """
    table = np.asarray(counts)
    if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 1:
        raise PreconditionError(f"Expected a non-empty items × categories matrix, got shape {table.shape}")
    if n_raters < 2:
        raise PreconditionError(f"Need at least 2 raters, got {n_raters}")
    if np.any(table < 0) or not np.all(np.equal(np.mod(table, 1), 0)):
        raise PreconditionError("Rating counts must be non-negative integers")
    if not np.all(table.sum(axis=1) == n_raters):
        raise PreconditionError(f"Every item must have exactly {n_raters} ratings")

    p_categories = table.sum(axis=0) / table.sum()
    if math.isclose(float(np.sum(p_categories**2)), 1.0, rel_tol=0.0, abs_tol=1e-12):
        p_items = (np.sum(table.astype(np.float64) ** 2, axis=1) - n_raters) / (n_raters * (n_raters - 1))
        if float(p_items.mean()) == 1.0:
            return 1.0
        raise DegenerateAgreementError("Chance agreement is 1 while observed agreement is not")
    return float(inter_rater.fleiss_kappa(table, method="fleiss"))


def krippendorff_alpha_nominal(ratings: Mapping[str, Sequence[Optional[str]]]) -> float:
    """
    Nominal Krippendorff's alpha from the coincidence matrix. None marks a missing rating, items with
    fewer than two ratings are not pairable and are skipped.
    """
    pairable = {item: [value for value in values if value is not None] for item, values in ratings.items()}
    pairable = {item: values for item, values in pairable.items() if len(values) >= 2}
    if not pairable:
        raise PreconditionError("No item has at least two ratings")

    categories = sorted({value for values in pairable.values() for value in values})
    position = {value: i for i, value in enumerate(categories)}
    coincidence = np.zeros((len(categories), len(categories)), dtype=np.float64)
    for values in pairable.values():
        item_counts = np.bincount([position[value] for value in values], minlength=len(categories)).astype(np.float64)
        pairs = np.outer(item_counts, item_counts) - np.diag(item_counts)
        coincidence += pairs / (len(values) - 1)

    marginals = coincidence.sum(axis=1)
    n = marginals.sum()
    off_diagonal = ~np.eye(len(categories), dtype=bool)
    disagreement_observed = coincidence[off_diagonal].sum() / n
    disagreement_expected = np.outer(marginals, marginals)[off_diagonal].sum() / (n * (n - 1))
    if disagreement_expected == 0.0:
        raise DegenerateAgreementError("Only one category was observed, expected disagreement is 0")
    return float(1.0 - disagreement_observed / disagreement_expected)


def irr_from_records(records: Sequence[PreferenceRecord]) -> IrrResult:
    """
    Agreement over the three categories A, B and A/B.

    Fleiss' kappa uses the items rated by every rater, Krippendorff's alpha every item with two or more
    ratings.
    """
    raters = list(dict.fromkeys(record.rater_id for record in records))
    by_item: dict[str, dict[str, Choice]] = {}
    for record in records:
        item_ratings = by_item.setdefault(record.item_id, {})
        if record.rater_id in item_ratings:
            raise PreconditionError(f"Rater '{record.rater_id}' rated item '{record.item_id}' twice")
        item_ratings[record.rater_id] = record.choice
    if len(raters) < 2:
        raise PreconditionError(f"Need at least 2 raters, got {len(raters)}")

    complete = [item_ratings for item_ratings in by_item.values() if len(item_ratings) == len(raters)]
    if not complete:
        raise PreconditionError("No item was rated by every rater")
    codes = np.array([[_IRR_CATEGORIES.index(item_ratings[rater]) for rater in raters] for item_ratings in complete])
    table, _ = inter_rater.aggregate_raters(codes, n_cat=len(_IRR_CATEGORIES))
    if len(complete) < len(by_item):
        skipped = len(by_item) - len(complete)
        logger.warning("%d of %d items lack some ratings, left out of Fleiss' kappa", skipped, len(by_item))

    return IrrResult(
        fleiss_kappa=fleiss_kappa(table, len(raters)),
        krippendorff_alpha=krippendorff_alpha_nominal(
            {item: [str(choice) for choice in item_ratings.values()] for item, item_ratings in by_item.items()}
        ),
        n_items=len(by_item),
        n_raters=len(raters),
    )
