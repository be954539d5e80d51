from dataclasses import dataclass, field


@dataclass(frozen=True)
class Aggregate:
    total: int = 0
    mean: float = 0.0
    max: int = 0
    min: int = 0

    @classmethod
    def of_counts(cls, counts: list[int]) -> "Aggregate":
        if not counts:
            return cls()
        total = sum(counts)
        return cls(total=total, mean=total / len(counts), max=max(counts), min=min(counts))


@dataclass(frozen=True)
class CorpusStats:
    """Per-text aggregates for a list of texts, vocab_size counts distinct terms across all of them."""

    count: int = 0
    sentences: Aggregate = field(default_factory=Aggregate)
    words: Aggregate = field(default_factory=Aggregate)
    chars: Aggregate = field(default_factory=Aggregate)
    vocab: Aggregate = field(default_factory=Aggregate)
    tokens: Aggregate = field(default_factory=Aggregate)
    vocab_size: int = 0


@dataclass(frozen=True)
class TokenReport:
    counts: list[int]
    aggregate: Aggregate
