import re

_TOKEN_RE = re.compile(r"\s*\S+")


def tokenize(text: str) -> list[str]:
    """Whitespace-preserving word tokens; each token keeps its leading spaces."""
    return _TOKEN_RE.findall(text.lstrip())
