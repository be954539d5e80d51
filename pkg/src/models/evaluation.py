from dataclasses import dataclass
from enum import StrEnum
from typing import Optional

from src.models.stats import TokenReport


class Choice(StrEnum):
    A = "A"
    B = "B"
    TIE = "TIE"


@dataclass(frozen=True)
class RougeScore:
    """Precision, recall and F1 in [0, 1]. f1 is the harmonic mean, 0 when precision + recall is 0."""

    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0

    @classmethod
    def of(cls, precision: float, recall: float) -> "RougeScore":
        total = precision + recall
        return cls(precision=precision, recall=recall, f1=2 * precision * recall / total if total > 0 else 0.0)

    def to_json(self) -> dict[str, float]:
        return {"p": self.precision, "r": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class PreferenceRecord:
    rater_id: str
    item_id: str
    choice: Choice


@dataclass(frozen=True)
class ReviewItem:
    """One row of the blinded review sheet."""

    item_id: str
    conversation: str
    summary_a: str
    summary_b: str
    ground_truth: str


@dataclass(frozen=True)
class KeyEntry:
    """Which system is behind label A and label B of one review item."""

    item_id: str
    a_system: str
    b_system: str

    def system_for(self, choice: Choice) -> Optional[str]:
        if choice == Choice.A:
            return self.a_system
        if choice == Choice.B:
            return self.b_system
        return None


@dataclass(frozen=True)
class RaterWinRate:
    """
    RaterWinRate

    Preference counts of one rater (or of the total row) between two systems.

    Attributes:
        rater_id (str):
            Rater identifier, "total" for the aggregate row.
        wins (dict[str, int]):
            Items on which each system's summary was preferred.
        ties (int):
            Items marked "A/B".
        rates (dict[str, Optional[float]]):
            wins / (total - ties) per system. None when every item is a tie.
    """

    rater_id: str
    wins: dict[str, int]
    ties: int
    rates: dict[str, Optional[float]]

    @property
    def total(self) -> int:
        return sum(self.wins.values()) + self.ties


@dataclass(frozen=True)
class WinRateTable:
    """Per-rater rows, the macro-averaged total row and the rates over pooled counts."""

    systems: tuple[str, str]
    raters: list[RaterWinRate]
    total: RaterWinRate
    pooled: RaterWinRate


@dataclass(frozen=True)
class IrrResult:
    fleiss_kappa: float
    krippendorff_alpha: float
    n_items: int = 0
    n_raters: int = 0


@dataclass(frozen=True)
class ItemEvaluation:
    item_id: str
    rouge1: RougeScore
    rouge2: RougeScore
    rouge_l: RougeScore
    embed_score: Optional[RougeScore]
    candidate_tokens: int
    reference_tokens: int

    def to_json(self) -> dict:
        return {
            "id": self.item_id,
            "rouge1": self.rouge1.to_json(),
            "rouge2": self.rouge2.to_json(),
            "rougeL": self.rouge_l.to_json(),
            "embed_score": self.embed_score.to_json() if self.embed_score is not None else None,
            "tokens": {"candidate": self.candidate_tokens, "reference": self.reference_tokens},
        }


@dataclass(frozen=True)
class EvalReport:
    items: list[ItemEvaluation]
    rouge1: RougeScore
    rouge2: RougeScore
    rouge_l: RougeScore
    embed_score: Optional[RougeScore]
    candidate_tokens: TokenReport
    reference_tokens: TokenReport
    tokenizer: str = ""

    def to_json(self) -> dict:
        return {
            "items": [item.to_json() for item in self.items],
            "aggregate": {
                "rouge1": self.rouge1.to_json(),
                "rouge2": self.rouge2.to_json(),
                "rougeL": self.rouge_l.to_json(),
                "embed_score": self.embed_score.to_json() if self.embed_score is not None else None,
                "tokens": {
                    "tokenizer": self.tokenizer,
                    "candidate": _aggregate_json(self.candidate_tokens),
                    "reference": _aggregate_json(self.reference_tokens),
                },
            },
        }


def _aggregate_json(report: TokenReport) -> dict:
    agg = report.aggregate
    return {"total": agg.total, "mean": agg.mean, "max": agg.max, "min": agg.min}


@dataclass(frozen=True)
class SystemComparison:
    """
    Reports of several systems scored against the same references.

    metric names the F1 the correlations use: "embed_score" when it was computed, "rougeL" otherwise.
    Correlations are Pearson r across systems, None when fewer than two systems differ.
    """

    reports: dict[str, EvalReport]
    metric: str
    token_f1_correlation: Optional[float] = None
    token_gap_f1_correlation: Optional[float] = None

    def f1(self, system: str) -> float:
        report = self.reports[system]
        score = report.embed_score if self.metric == "embed_score" else report.rouge_l
        return score.f1 if score is not None else 0.0

    def to_json(self) -> dict:
        return {
            "systems": {name: report.to_json() for name, report in self.reports.items()},
            "comparison": {
                "metric": self.metric,
                "rows": [
                    {
                        "system": name,
                        "f1": self.f1(name),
                        "mean_tokens": report.candidate_tokens.aggregate.mean,
                        "reference_mean_tokens": report.reference_tokens.aggregate.mean,
                    }
                    for name, report in self.reports.items()
                ],
                "token_f1_correlation": self.token_f1_correlation,
                "token_gap_f1_correlation": self.token_gap_f1_correlation,
            },
        }
