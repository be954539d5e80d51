from typing import Protocol


class Tokenizer(Protocol):
    """Counts tokens, count("") is 0.

    Implementations document how far count(a + sep + b) may drift from count(a) + count(b).
    """

    name: str

    def count(self, text: str) -> int: ...
