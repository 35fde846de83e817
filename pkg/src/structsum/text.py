"""Tokenization, sentence splitting, stopwords and stemming.

Everything here is deterministic and rule-based so that preprocessing is
reproducible without external NLP toolkits.
"""
import re
from functools import lru_cache
from importlib import resources

# Abbreviations whose trailing period does not end a sentence.
ABBREVIATIONS = frozenset({
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "no",
    "vs", "etc", "inc", "ltd", "co", "corp", "dept", "est", "approx",
    "e.g", "i.e", "cf", "al", "fig", "jan", "feb", "mar", "apr", "jun",
    "jul", "aug", "sep", "sept", "oct", "nov", "dec", "u.s", "u.k",
})

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[\-'][a-z0-9]+)*|[^\sa-z0-9]")


def tokenize(text):
    """Lowercase and split into word/punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


def split_sentences(text):
    """Split raw text into sentences on terminal punctuation.

    A period ends a sentence unless it follows a known abbreviation.
    '!' and '?' always end a sentence.
    """
    sentences = []
    tokens = tokenize(text)
    current = []
    for i, tok in enumerate(tokens):
        current.append(tok)
        if tok in ("!", "?"):
            sentences.append(current)
            current = []
        elif tok == ".":
            prev = tokens[i - 1] if i > 0 else ""
            if prev in ABBREVIATIONS:
                continue
            sentences.append(current)
            current = []
    if current:
        sentences.append(current)
    return sentences


@lru_cache(maxsize=1)
def stopwords():
    data = resources.files("structsum.data").joinpath("stopwords.txt").read_text()
    return frozenset(w for w in data.split() if w)


def content_words(tokens, stem=True):
    """Lowercased alphabetic non-stopword tokens, optionally stemmed."""
    sw = stopwords()
    out = []
    for tok in tokens:
        t = tok.lower()
        if t in sw or not t.isalpha():
            continue
        out.append(porter_stem(t) if stem else t)
    return out


# ---------------------------------------------------------------------------
# Porter stemmer (classic algorithm, steps 1a-5b).

_VOWELS = "aeiou"


def _is_cons(word, i):
    c = word[i]
    if c in _VOWELS:
        return False
    if c == "y":
        return i == 0 or not _is_cons(word, i - 1)
    return True


def _measure(stem):
    # number of VC sequences in the [C](VC)^m[V] form
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        if _is_cons(stem, i):
            if prev_vowel:
                m += 1
            prev_vowel = False
        else:
            prev_vowel = True
    return m


def _has_vowel(stem):
    return any(not _is_cons(stem, i) for i in range(len(stem)))


def _ends_double_cons(word):
    return (len(word) >= 2 and word[-1] == word[-2]
            and _is_cons(word, len(word) - 1))


def _ends_cvc(word):
    if len(word) < 3:
        return False
    if (_is_cons(word, len(word) - 3) and not _is_cons(word, len(word) - 2)
            and _is_cons(word, len(word) - 1)):
        return word[-1] not in "wxy"
    return False


def _replace(word, suffix, repl, m_min):
    stem = word[:len(word) - len(suffix)]
    if _measure(stem) > m_min:
        return stem + repl
    return word


_STEP2 = [
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
]
_STEP3 = [
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
]
_STEP4 = [
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
]


def porter_stem(word):
    if len(word) <= 2:
        return word
    # step 1a
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies"):
        word = word[:-2]
    elif word.endswith("ss"):
        pass
    elif word.endswith("s"):
        word = word[:-1]
    # step 1b
    if word.endswith("eed"):
        if _measure(word[:-3]) > 0:
            word = word[:-1]
    elif word.endswith("ed") and _has_vowel(word[:-2]):
        word = word[:-2]
        word = _step1b_fixup(word)
    elif word.endswith("ing") and _has_vowel(word[:-3]):
        word = word[:-3]
        word = _step1b_fixup(word)
    # step 1c
    if word.endswith("y") and _has_vowel(word[:-1]):
        word = word[:-1] + "i"
    # step 2
    if _measure(word) > 0:
        for suf, repl in _STEP2:
            if word.endswith(suf):
                word = _replace(word, suf, repl, 0)
                break
    # step 3
    for suf, repl in _STEP3:
        if word.endswith(suf):
            word = _replace(word, suf, repl, 0)
            break
    # step 4
    for suf in _STEP4:
        if word.endswith(suf):
            if suf in ("ion",):
                continue
            stem = word[:len(word) - len(suf)]
            if _measure(stem) > 1:
                word = stem
            break
    else:
        if word.endswith("ion") and len(word) > 3 and word[-4] in "st":
            stem = word[:-3]
            if _measure(stem) > 1:
                word = stem
    # step 5a
    if word.endswith("e"):
        stem = word[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            word = stem
    # step 5b
    if _ends_double_cons(word) and word.endswith("l") and _measure(word) > 1:
        word = word[:-1]
    return word


def _step1b_fixup(word):
    if word.endswith(("at", "bl", "iz")):
        return word + "e"
    if _ends_double_cons(word) and word[-1] not in "lsz":
        return word[:-1]
    if _measure(word) == 1 and _ends_cvc(word):
        return word + "e"
    return word
