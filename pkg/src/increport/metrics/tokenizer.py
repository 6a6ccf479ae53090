"""Shared caption tokenizer for all text metrics.

The rule is fixed on purpose: lowercase, split punctuation into separate
tokens, collapse whitespace. Changing it would silently move every score,
so treat this file as frozen by the metric tests.
"""

import re

_TOKEN = re.compile(r"[a-z0-9]+|[^a-z0-9\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and return word and punctuation tokens in order.

    Runs of letters and digits form one token; every other non-space
    character stands alone. The empty string yields an empty list.
    """
    return _TOKEN.findall(text.lower())
