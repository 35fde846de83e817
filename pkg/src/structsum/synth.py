"""Synthetic template corpora for desk-scale tests.

Each instance follows a fixed topic template: sentence t always draws its
content from topic t's vocabulary, so ground-truth per-sentence topic
labels are known. The source contains one paragraph per summary sentence
plus a title carrying the entity and a sentence-count word, which makes
both content and stopping behaviour learnable from the input.
"""
import json
import os

import numpy as np

from .corpus import CorpusSplit, Example, TokenizedExample, split_of_title
from .vocab import build_vocab

_CONSONANTS = "bdfgklmnprtv"
_VOWELS = "aeiou"
_COUNT_WORDS = ["wzero", "wone", "wtwo", "wthree", "wfour", "wfive", "wsix",
                "wseven", "weight", "wnine"]


def topic_vocabulary(n_topics, words_per_topic=8):
    """Disjoint alphabetic word sets, one per topic; stemmer-stable."""
    vocab = []
    for k in range(n_topics):
        prefix = _CONSONANTS[k % len(_CONSONANTS)]
        words = []
        i = 0
        while len(words) < words_per_topic:
            v = _VOWELS[i % len(_VOWELS)]
            c = _CONSONANTS[(k + 1 + i // len(_VOWELS)) % len(_CONSONANTS)]
            words.append(prefix + v + c + "od")
            i += 1
        vocab.append(words)
    return vocab


def _name(prefix, i):
    s = ""
    while True:
        s = _CONSONANTS[i % len(_CONSONANTS)] + s
        i //= len(_CONSONANTS)
        if i == 0:
            break
    return prefix + "a" + s


def make_records(n_instances, n_topics=5, words_per_topic=8,
                 min_sentences=2, n_entities=30, seed=0):
    """Raw (title, paragraphs, lead) records plus ground-truth labels.

    Returns (records, labels) where labels[i] is the per-sentence topic
    id list (without the terminal EOT label).
    """
    rng = np.random.default_rng(seed)
    topics = topic_vocabulary(n_topics, words_per_topic)
    records, labels = [], []
    for i in range(n_instances):
        entity = _name("z", int(rng.integers(0, n_entities)))
        m = int(rng.integers(min_sentences, n_topics + 1))
        sents, paragraphs = [], []
        for t in range(m):
            n_words = int(rng.integers(3, 6))
            words = list(rng.choice(topics[t], size=n_words, replace=False))
            sents.append([entity] + words)
            para = list(words)
            rng.shuffle(para)
            paragraphs.append(" ".join([entity] + para))
        title = f"{entity} {_name('q', i)} {_COUNT_WORDS[m]}"
        lead = " . ".join(" ".join(s) for s in sents) + " ."
        records.append({"title": title, "paragraphs": paragraphs,
                        "lead": lead})
        labels.append(list(range(m)))
    return records, labels


def make_split(n_instances, n_topics=5, words_per_topic=8, min_sentences=2,
               n_entities=30, seed=0, with_labels=True):
    """Encoded CorpusSplit with ground-truth topic labels attached.

    Bypasses the raw-text pipeline (same content), giving tests direct
    access to the generating topic ids.
    """
    records, labels = make_records(n_instances, n_topics, words_per_topic,
                                   min_sentences, n_entities, seed)
    buckets = {"train": [], "valid": [], "test": []}
    for rec, lab in zip(records, labels):
        title = rec["title"].split()
        sents = [s.split() for s in rec["lead"].split(" . ")]
        sents = [[t for t in s if t != "."] for s in sents]
        sents = [s for s in sents if s]
        source = title + ["<eot>"]
        for j, p in enumerate(rec["paragraphs"]):
            if j > 0:
                source.append("<eop>")
            source.extend(p.split())
        ex = TokenizedExample(title, source, sents)
        buckets[split_of_title(title, seed)].append((ex, lab))

    vocab = build_vocab([e for e, _ in buckets["train"]], size=50000)
    split = CorpusSplit()
    for part in ("train", "valid", "test"):
        for ex, lab in buckets[part]:
            enc = Example(
                title=ex.title,
                source=vocab.encode(ex.source_tokens),
                sentences=[vocab.encode(s) for s in ex.summary_sentences],
                topics=(lab + [n_topics]) if with_labels else None)
            getattr(split, part).append(enc)
    return split, vocab


def write_records(path, records):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    os.replace(tmp, path)
