import re

# Alphanumeric runs, underscore counts as a separator
_TERM_RE = re.compile(r"[^\W_]+")


def terms(text: str) -> list[str]:
    """Lowercased alphanumeric terms, no stemming and no stopword removal.

    Shared by BM25 indexing, ROUGE and the test embedder so all three agree on what a word is.
    """
    return _TERM_RE.findall(text.lower())
