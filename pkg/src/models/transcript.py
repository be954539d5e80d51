from dataclasses import dataclass, field
from typing import Optional

DOCTOR = "D"
PATIENT = "P"


@dataclass(frozen=True)
class Turn:
    """One diarized utterance. Speaker labels other than D/P are kept verbatim."""

    speaker: str
    text: str


@dataclass(frozen=True)
class Transcript:
    """
    Transcript

    A patient-doctor conversation, either diarized into turns or given as flat text.

    Attributes:
        id (str):
            Identity used to name index, context and summary files.
        turns (tuple[Turn, ...]):
            Ordered diarized turns, may be empty when raw_text is set.
        raw_text (Optional[str]):
            Flat conversation text, takes precedence over turns when flattening.
        specialty (Optional[str]):
            Medical specialty if the source dataset records one.
    """

    id: str
    turns: tuple[Turn, ...] = field(default_factory=tuple)
    raw_text: Optional[str] = None
    specialty: Optional[str] = None

    @property
    def is_usable(self) -> bool:
        if self.raw_text and self.raw_text.strip():
            return True
        return any(turn.text.strip() for turn in self.turns)


@dataclass(frozen=True)
class Chunk:
    """One sentence of a transcript, ord is its 0-based position."""

    transcript_id: str
    ord: int
    text: str


@dataclass(frozen=True)
class DatasetPair:
    conversation: str
    summary: str
    id: Optional[str] = None
