"""Classic suffix-stripping stemmer (the original published algorithm).

Metric scores depend on stemming behavior, so the implementation follows
the original rule tables exactly and is pinned by committed test vectors;
none of the later revisions (extra rules, departures) are included. Words
shorter than three letters and tokens containing non-letters are returned
unchanged.
"""

from functools import lru_cache

_VOWELS = frozenset("aeiou")


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        # y is a consonant at the start or after a vowel, a vowel otherwise
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Count VC sequences: the m in [C](VC){m}[V]."""
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        vowel = not _is_consonant(stem, i)
        if prev_vowel and not vowel:
            m += 1
        prev_vowel = vowel
    return m


def _has_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(word: str) -> bool:
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_consonant(word, len(word) - 1)
    )


def _ends_cvc(word: str) -> bool:
    # consonant-vowel-consonant where the final consonant is not w, x, or y
    if len(word) < 3:
        return False
    return (
        _is_consonant(word, len(word) - 3)
        and not _is_consonant(word, len(word) - 2)
        and _is_consonant(word, len(word) - 1)
        and word[-1] not in "wxy"
    )


def _apply_rule_list(word: str, rules: list[tuple[str, str, int]]) -> str:
    """Apply the single rule with the longest matching suffix.

    If that rule's measure condition fails, no rule in the list applies;
    shorter suffixes are not tried. ``rules`` entries are
    (suffix, replacement, minimum m of the stem).
    """
    best = None
    for suffix, replacement, min_m in rules:
        if word.endswith(suffix):
            if best is None or len(suffix) > len(best[0]):
                best = (suffix, replacement, min_m)
    if best is None:
        return word
    suffix, replacement, min_m = best
    stem = word[: len(word) - len(suffix)]
    if _measure(stem) > min_m - 1:
        return stem + replacement
    return word


_STEP2_RULES = [
    ("ational", "ate", 1), ("tional", "tion", 1), ("enci", "ence", 1),
    ("anci", "ance", 1), ("izer", "ize", 1), ("abli", "able", 1),
    ("alli", "al", 1), ("entli", "ent", 1), ("eli", "e", 1),
    ("ousli", "ous", 1), ("ization", "ize", 1), ("ation", "ate", 1),
    ("ator", "ate", 1), ("alism", "al", 1), ("iveness", "ive", 1),
    ("fulness", "ful", 1), ("ousness", "ous", 1), ("aliti", "al", 1),
    ("iviti", "ive", 1), ("biliti", "ble", 1),
]

_STEP3_RULES = [
    ("icate", "ic", 1), ("ative", "", 1), ("alize", "al", 1),
    ("iciti", "ic", 1), ("ical", "ic", 1), ("ful", "", 1), ("ness", "", 1),
]

_STEP4_SUFFIXES = [
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
]


def _step1a(word: str) -> str:
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith("ies"):
        return word[:-2]
    if word.endswith("ss"):
        return word
    if word.endswith("s"):
        return word[:-1]
    return word


def _step1b(word: str) -> str:
    if word.endswith("eed"):
        stem = word[:-3]
        return stem + "ee" if _measure(stem) > 0 else word
    removed = None
    if word.endswith("ed") and _has_vowel(word[:-2]):
        removed = word[:-2]
    elif word.endswith("ing") and _has_vowel(word[:-3]):
        removed = word[:-3]
    if removed is None:
        return word
    if removed.endswith(("at", "bl", "iz")):
        return removed + "e"
    if _ends_double_consonant(removed) and removed[-1] not in "lsz":
        return removed[:-1]
    if _measure(removed) == 1 and _ends_cvc(removed):
        return removed + "e"
    return removed


def _step1c(word: str) -> str:
    if word.endswith("y") and _has_vowel(word[:-1]):
        return word[:-1] + "i"
    return word


def _step4(word: str) -> str:
    best = None
    for suffix in _STEP4_SUFFIXES:
        if word.endswith(suffix):
            if best is None or len(suffix) > len(best):
                best = suffix
    if best is None:
        return word
    stem = word[: len(word) - len(best)]
    if _measure(stem) > 1:
        if best == "ion" and not stem.endswith(("s", "t")):
            return word
        return stem
    return word


def _step5a(word: str) -> str:
    if word.endswith("e"):
        stem = word[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            return stem
    return word


def _step5b(word: str) -> str:
    if word.endswith("ll") and _measure(word) > 1:
        return word[:-1]
    return word


@lru_cache(maxsize=65536)
def stem(word: str) -> str:
    """Stem a lowercase word; non-letter tokens pass through unchanged."""
    if len(word) <= 2 or not word.isascii() or not word.isalpha():
        return word
    word = _step1a(word)
    word = _step1b(word)
    word = _step1c(word)
    word = _apply_rule_list(word, _STEP2_RULES)
    word = _apply_rule_list(word, _STEP3_RULES)
    word = _step4(word)
    word = _step5a(word)
    word = _step5b(word)
    return word
