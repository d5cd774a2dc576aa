"""Text normalization for pooled documents.

Cleaning runs in a fixed order: platform entities (URLs, mentions,
hashtags) are cut out first, every remaining non-alphabetic codepoint
becomes a separator (this one rule removes numbers, punctuation, and
emoji), the text is lowercased and split, stop words for the five
corpus languages are dropped, and the survivors are stemmed.

The stemmer is a self-contained implementation of the Snowball
Portuguese algorithm. Nasal vowels are rewritten to a~ / o~ before the
region computation so they count as vowel + consonant, exactly as the
reference algorithm prescribes; the marker is restored at the end.
Tokens in other languages pass through the same rules.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import List

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_HASHTAG_RE = re.compile(r"#\w+")

STOPWORD_LANGUAGES = ("pt", "en", "es", "it", "fr")

# Platform marker, not a language word: the classic retweet prefix
# ("RT @user ...") survives entity removal and has to be dropped here.
PLATFORM_TOKENS = frozenset({"rt"})


@lru_cache(maxsize=1)
def load_stopwords() -> frozenset:
    """Union of the five bundled stop word lists plus platform tokens."""
    words = set(PLATFORM_TOKENS)
    data = resources.files("spherewatch") / "data"
    for lang in STOPWORD_LANGUAGES:
        text = (data / f"stopwords_{lang}.txt").read_text(encoding="utf-8")
        words.update(text.split())
    return frozenset(words)


def clean_text(text: str) -> List[str]:
    """Entity-strip, lowercase, stop-word-filter, and stem one text.

    Returns stems in original order, duplicates preserved (downstream
    consumers count tokens). Empty output is allowed.
    """
    if not text:
        return []
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    text = _HASHTAG_RE.sub(" ", text)
    # lowercase before the alphabetic filter: some uppercase letters
    # lower into letter + combining mark, and the mark must become a
    # separator, not part of a token
    text = text.lower()
    text = "".join(ch if ch.isalpha() else " " for ch in text)
    stop = load_stopwords()
    return [stem(tok) for tok in text.split() if tok not in stop]


# ---------------------------------------------------------------------------
# Snowball Portuguese stemmer.
#
# Regions follow the standard definitions. R1: after the first non-vowel
# that follows a vowel. R2: same rule applied inside R1. RV: if the second
# letter is a consonant, after the next vowel; if the first two letters are
# vowels, after the next consonant; otherwise after the third letter.
# Region boundaries are integer offsets frozen before the steps run; a
# suffix "is in" a region iff its start offset is >= the boundary.

_VOWELS = frozenset("aeiouáéíóúâêô")


def _r_region(word: str, start: int) -> int:
    i = start
    n = len(word)
    while i < n and word[i] not in _VOWELS:
        i += 1
    while i < n and word[i] in _VOWELS:
        i += 1
    return min(i + 1, n)


def _rv_region(word: str) -> int:
    n = len(word)
    if n < 3:
        return n
    if word[1] not in _VOWELS:
        i = 2
        while i < n and word[i] not in _VOWELS:
            i += 1
        return min(i + 1, n)
    if word[0] in _VOWELS:
        i = 2
        while i < n and word[i] in _VOWELS:
            i += 1
        return min(i + 1, n)
    return 3


# Step 1 rule tags. Matching commits to the longest suffix, Snowball
# style: if its region test fails, step 1 does nothing; there is no
# fallback to a shorter suffix.
_STEP1 = sorted(
    [
        ("eza", "del_r2"), ("ezas", "del_r2"),
        ("ico", "del_r2"), ("ica", "del_r2"),
        ("icos", "del_r2"), ("icas", "del_r2"),
        ("ismo", "del_r2"), ("ismos", "del_r2"),
        ("ável", "del_r2"), ("ível", "del_r2"),
        ("ista", "del_r2"), ("istas", "del_r2"),
        ("oso", "del_r2"), ("osa", "del_r2"),
        ("osos", "del_r2"), ("osas", "del_r2"),
        ("amento", "del_r2"), ("amentos", "del_r2"),
        ("imento", "del_r2"), ("imentos", "del_r2"),
        ("adora", "del_r2"), ("ador", "del_r2"), ("aça~o", "del_r2"),
        ("adoras", "del_r2"), ("adores", "del_r2"), ("aço~es", "del_r2"),
        ("ante", "del_r2"), ("antes", "del_r2"), ("ância", "del_r2"),
        ("logía", "logia"), ("logías", "logia"),
        ("uça~o", "ucao"), ("uço~es", "ucao"),
        ("ência", "encia"), ("ências", "encia"),
        ("amente", "amente"),
        ("mente", "mente"),
        ("idade", "idade"), ("idades", "idade"),
        ("iva", "iva"), ("ivo", "iva"), ("ivas", "iva"), ("ivos", "iva"),
        ("ira", "ira"), ("iras", "ira"),
    ],
    key=lambda row: len(row[0]),
    reverse=True,
)

_STEP2_SUFFIXES = sorted(
    [
        "ada", "ida", "ia", "aria", "eria", "iria", "ará", "ara", "erá",
        "era", "irá", "ava", "asse", "esse", "isse", "aste", "este",
        "iste", "ei", "arei", "erei", "irei", "am", "iam", "ariam",
        "eriam", "iriam", "aram", "eram", "iram", "avam", "em", "arem",
        "erem", "irem", "assem", "essem", "issem", "ado", "ido", "ando",
        "endo", "indo", "ara~o", "era~o", "ira~o", "ar", "er", "ir",
        "as", "adas", "idas", "ias", "arias", "erias", "irias", "arás",
        "aras", "erás", "eras", "irás", "avas", "es", "ardes", "erdes",
        "irdes", "ares", "eres", "ires", "asses", "esses", "isses",
        "astes", "estes", "istes", "is", "ais", "eis", "íeis", "aríeis",
        "eríeis", "iríeis", "áreis", "areis", "éreis", "ereis", "íreis",
        "ireis", "ásseis", "ésseis", "ísseis", "áveis", "ados", "idos",
        "ámos", "amos", "íamos", "aríamos", "eríamos", "iríamos",
        "áramos", "éramos", "íramos", "ávamos", "emos", "aremos",
        "eremos", "iremos", "ássemos", "êssemos", "íssemos", "imos",
        "armos", "ermos", "irmos", "eu", "iu", "ou", "ira", "iras",
    ],
    key=len,
    reverse=True,
)

_STEP4_SUFFIXES = ("os", "a", "i", "o", "á", "í", "ó")


def _ends_in(word: str, suffix: str, region: int) -> bool:
    return word.endswith(suffix) and len(word) - len(suffix) >= region


def _try_delete(word: str, suffixes, region: int) -> str:
    for suf in suffixes:
        if _ends_in(word, suf, region):
            return word[: -len(suf)]
    return word


def _step1(word: str, r1: int, r2: int, rv: int):
    for suf, rule in _STEP1:
        if not word.endswith(suf):
            continue
        start = len(word) - len(suf)
        if rule == "del_r2":
            return (word[:start], True) if start >= r2 else (word, False)
        if rule == "logia":
            return (word[:start] + "log", True) if start >= r2 \
                else (word, False)
        if rule == "ucao":
            return (word[:start] + "u", True) if start >= r2 \
                else (word, False)
        if rule == "encia":
            return (word[:start] + "ente", True) if start >= r2 \
                else (word, False)
        if rule == "amente":
            if start < r1:
                return word, False
            word = word[:start]
            if _ends_in(word, "iv", r2):
                word = word[:-2]
                if _ends_in(word, "at", r2):
                    word = word[:-2]
            else:
                word = _try_delete(word, ("os", "ic", "ad"), r2)
            return word, True
        if rule == "mente":
            if start < r2:
                return word, False
            word = word[:start]
            return _try_delete(word, ("ante", "avel", "ível"), r2), True
        if rule == "idade":
            if start < r2:
                return word, False
            word = word[:start]
            return _try_delete(word, ("abil", "ic", "iv"), r2), True
        if rule == "iva":
            if start < r2:
                return word, False
            word = word[:start]
            return _try_delete(word, ("at",), r2), True
        if rule == "ira":
            if start >= rv and word.endswith("e" + suf):
                return word[:start] + "ir", True
            return word, False
    return word, False


@lru_cache(maxsize=65536)
def stem(word: str) -> str:
    """Stem one lowercase token with Portuguese Snowball semantics."""
    word = word.replace("ã", "a~").replace("õ", "o~")
    r1 = _r_region(word, 0)
    r2 = _r_region(word, r1)
    rv = _rv_region(word)

    word, changed = _step1(word, r1, r2, rv)
    if not changed:
        # verb suffixes, matched entirely inside RV (a long suffix that
        # starts before RV does not block a shorter one that fits)
        for suf in _STEP2_SUFFIXES:
            if _ends_in(word, suf, rv):
                word = word[: -len(suf)]
                changed = True
                break
    if changed:
        if _ends_in(word, "i", rv) and word.endswith("ci"):
            word = word[:-1]
    else:
        for suf in _STEP4_SUFFIXES:
            if _ends_in(word, suf, rv):
                word = word[: -len(suf)]
                break
    if word and word[-1] in "eéê" and len(word) - 1 >= rv:
        word = word[:-1]
        if word.endswith("gu") and len(word) - 1 >= rv:
            word = word[:-1]
        elif word.endswith("ci") and len(word) - 1 >= rv:
            word = word[:-1]
    elif word.endswith("ç"):
        word = word[:-1] + "c"

    return word.replace("a~", "ã").replace("o~", "õ")
