"""Corpus construction: paragraph ranking, filtering, source building,
summary segmentation and split serialization.

Raw input is a directory of JSONL files with records
``{"title": str, "paragraphs": [str, ...], "lead": str}``.
"""
import hashlib
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field

from . import text
from .vocab import EOP, EOT, SPECIAL_TOKENS, Vocab, build_vocab

MAX_SOURCE_TOKENS = 800
MIN_LEAD_TOKENS = 23
MIN_DOCS = 6
MAX_SENTENCES = 15
MAX_SENTENCE_LEN = 40
MAX_RAW_SENTENCE_LEN = 200

# pivoted length normalization slope for paragraph ranking
PIVOT_SLOPE = 0.25


@dataclass
class RawInstance:
    title: list
    paragraphs: list          # list of token sequences
    lead: str                 # raw target summary text


@dataclass
class TokenizedExample:
    title: list
    source_tokens: list
    summary_sentences: list   # list of token sequences


@dataclass
class Example:
    """One training instance with encoded source and target."""
    title: list               # tokens
    source: list              # token ids, len <= MAX_SOURCE_TOKENS
    sentences: list           # list of token-id sequences
    topics: list = None       # per-sentence topic ids + terminal EOT label

    def validate(self):
        assert 0 < len(self.source) <= MAX_SOURCE_TOKENS
        assert 1 <= len(self.sentences) <= MAX_SENTENCES
        assert all(1 <= len(s) <= MAX_SENTENCE_LEN for s in self.sentences)
        assert sum(len(s) for s in self.sentences) > MIN_LEAD_TOKENS
        if self.topics is not None:
            assert len(self.topics) == len(self.sentences) + 1


@dataclass
class CorpusSplit:
    train: list = field(default_factory=list)
    valid: list = field(default_factory=list)
    test: list = field(default_factory=list)


def rank_paragraphs(title, paragraphs, slope=PIVOT_SLOPE):
    """Order paragraphs by pivoted-length-normalized TF-IDF similarity
    with the title, descending; ties keep original order.

    Document-frequency statistics come from the instance's own paragraph
    set. An empty title scores every paragraph 0.
    """
    if not paragraphs:
        raise ValueError("paragraphs must be non-empty")
    n = len(paragraphs)
    df = Counter()
    for p in paragraphs:
        df.update(set(p))
    avglen = sum(len(p) for p in paragraphs) / n
    title_terms = set(title)

    def score(p):
        if not p or avglen == 0:
            return 0.0
        norm = (1.0 - slope) + slope * len(p) / avglen
        tf = Counter(p)
        s = 0.0
        for w in title_terms:
            if tf[w] == 0:
                continue
            s += ((1.0 + math.log(1.0 + math.log(tf[w])))
                  / norm * math.log((n + 1) / df[w]))
        return s

    scored = [(score(p), i) for i, p in enumerate(paragraphs)]
    order = sorted(range(n), key=lambda i: (-scored[i][0], i))
    return [paragraphs[i] for i in order]


def filter_instance(inst, min_docs=MIN_DOCS, min_lead_tokens=MIN_LEAD_TOKENS,
                    max_raw_sentence_len=MAX_RAW_SENTENCE_LEN):
    """Accept or reject a raw instance; returns (ok, reason)."""
    if len(inst.paragraphs) < min_docs:
        return False, "too_few_docs"
    lead_sentences = text.split_sentences(inst.lead)
    if sum(len(s) for s in lead_sentences) < min_lead_tokens + 1:
        return False, "short_lead"
    if any(len(s) > max_raw_sentence_len for s in lead_sentences):
        return False, "long_sentence"
    return True, None


def build_source(title, ranked_paragraphs, max_tokens=MAX_SOURCE_TOKENS):
    """Flat source sequence: title <eot> p1 <eop> p2 <eop> ... truncated."""
    eot, eop = SPECIAL_TOKENS[EOT], SPECIAL_TOKENS[EOP]
    out = list(title) + [eot]
    for i, p in enumerate(ranked_paragraphs):
        if i > 0:
            out.append(eop)
        out.extend(p)
    return out[:max_tokens]


def segment_summary(lead, max_sentence_len=MAX_SENTENCE_LEN):
    """Sentence-segment the lead; hard-split sentences longer than
    `max_sentence_len` into fixed-size chunks."""
    if not lead or not lead.strip():
        return []
    out = []
    for sent in text.split_sentences(lead):
        for i in range(0, len(sent), max_sentence_len):
            out.append(sent[i:i + max_sentence_len])
    return out


def split_of_title(title, seed=0):
    """Deterministic 90/5/5 assignment by stable hash of the title."""
    key = " ".join(title) + f"|{seed}"
    h = int.from_bytes(hashlib.md5(key.encode()).digest()[:8], "big")
    r = h / 2**64
    if r < 0.90:
        return "train"
    if r < 0.95:
        return "valid"
    return "test"


def tokenize_instance(record):
    return RawInstance(
        title=text.tokenize(record["title"]),
        paragraphs=[text.tokenize(p) for p in record["paragraphs"]],
        lead=record["lead"],
    )


def preprocess(records, max_source_tokens=MAX_SOURCE_TOKENS,
               min_lead_tokens=MIN_LEAD_TOKENS, min_docs=MIN_DOCS,
               max_sentences=MAX_SENTENCES, max_sentence_len=MAX_SENTENCE_LEN,
               vocab_size=50000, seed=0):
    """Full corpus build: filter, rank, truncate, segment, split, encode.

    Returns (CorpusSplit, Vocab, rejection_counts).
    """
    rejected = Counter()
    buckets = {"train": [], "valid": [], "test": []}
    for record in records:
        inst = tokenize_instance(record)
        if not inst.title or not inst.paragraphs:
            rejected["empty"] += 1
            continue
        ok, reason = filter_instance(inst, min_docs, min_lead_tokens)
        if not ok:
            rejected[reason] += 1
            continue
        sentences = segment_summary(inst.lead, max_sentence_len)
        if len(sentences) > max_sentences:
            rejected["too_many_sentences"] += 1
            continue
        ranked = rank_paragraphs(inst.title, inst.paragraphs)
        source = build_source(inst.title, ranked, max_source_tokens)
        ex = TokenizedExample(inst.title, source, sentences)
        buckets[split_of_title(inst.title, seed)].append(ex)

    vocab = build_vocab(buckets["train"], vocab_size)

    def encode(ex):
        return Example(
            title=ex.title,
            source=vocab.encode(ex.source_tokens),
            sentences=[vocab.encode(s) for s in ex.summary_sentences],
        )

    split = CorpusSplit(
        train=[encode(e) for e in buckets["train"]],
        valid=[encode(e) for e in buckets["valid"]],
        test=[encode(e) for e in buckets["test"]],
    )
    return split, vocab, rejected


# ---------------------------------------------------------------------------
# Serialization: one JSON record per line.

def write_examples(path, examples):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        for ex in examples:
            rec = {"title": ex.title, "source": ex.source,
                   "sentences": ex.sentences, "topics": ex.topics}
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_examples(path):
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                ex = Example(title=rec["title"], source=rec["source"],
                             sentences=rec["sentences"],
                             topics=rec.get("topics"))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ValueError(f"{path}: malformed record at line {lineno}: {e}")
            out.append(ex)
    return out


def write_split(directory, split):
    os.makedirs(directory, exist_ok=True)
    for name in ("train", "valid", "test"):
        write_examples(os.path.join(directory, name + ".jsonl"),
                       getattr(split, name))


def read_split(directory):
    return CorpusSplit(
        train=read_examples(os.path.join(directory, "train.jsonl")),
        valid=read_examples(os.path.join(directory, "valid.jsonl")),
        test=read_examples(os.path.join(directory, "test.jsonl")),
    )
