"""Sentence-topic templates via LDA with collapsed Gibbs sampling.

Summary sentences are treated as documents. A sparse symmetric
document-topic prior (alpha=0.001) encourages one topic per sentence.
"""
import json
import math
import os
import zlib
from dataclasses import dataclass

import numpy as np

from . import _kernels, text

DEFAULT_ALPHA = 0.001
DEFAULT_ETA = 0.01
TRAIN_ITERS = 200
FOLDIN_ITERS = 50
K_GRID = tuple(range(10, 100, 10))


@dataclass
class TopicModel:
    K: int
    phi: np.ndarray           # K x V topic-word probabilities
    alpha: float
    eta: float
    vocab: list               # content-word vocabulary (id = index)
    fallback_topic: int       # most frequent training topic, for UNK sentences
    seed: int = 0

    def __post_init__(self):
        self.stoi = {w: i for i, w in enumerate(self.vocab)}

    @property
    def eot_label(self):
        return self.K

    def top_words(self, topic, n=10):
        order = np.argsort(-self.phi[topic], kind="stable")[:n]
        return [self.vocab[i] for i in order]

    def save(self, path):
        header = {"version": 1, "K": self.K, "V": len(self.vocab),
                  "alpha": self.alpha, "eta": self.eta,
                  "fallback_topic": self.fallback_topic, "seed": self.seed,
                  "vocab": self.vocab}
        tmp = path + ".tmp"
        with open(tmp, "wb") as f:
            f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            f.write(np.ascontiguousarray(self.phi, dtype=np.float64).tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            header = json.loads(f.readline())
            phi = np.frombuffer(f.read(), dtype=np.float64)
        phi = phi.reshape(header["K"], header["V"]).copy()
        return cls(K=header["K"], phi=phi, alpha=header["alpha"],
                   eta=header["eta"], vocab=header["vocab"],
                   fallback_topic=header["fallback_topic"],
                   seed=header["seed"])


def prepare_sentence(tokens, stem=True):
    """Content words of a sentence, ready for topic training/inference."""
    return text.content_words(tokens, stem=stem)


def train_lda(sentence_docs, K, seed=100, alpha=DEFAULT_ALPHA,
              eta=DEFAULT_ETA, iters=TRAIN_ITERS):
    """Fit an LDA model on content-word sentence documents.

    Collapsed Gibbs sampling; deterministic given the seed.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    vocab = sorted({w for doc in sentence_docs for w in doc})
    if len(vocab) < K:
        raise ValueError(f"vocabulary size {len(vocab)} smaller than K={K}")
    stoi = {w: i for i, w in enumerate(vocab)}
    V = len(vocab)

    word_ids, doc_ids = [], []
    for d, doc in enumerate(sentence_docs):
        for w in doc:
            word_ids.append(stoi[w])
            doc_ids.append(d)
    word_ids = np.asarray(word_ids, dtype=np.int64)
    doc_ids = np.asarray(doc_ids, dtype=np.int64)
    n_tokens = word_ids.shape[0]

    rng = np.random.default_rng(seed)
    z = np.zeros(n_tokens, dtype=np.int64)
    n_dk = np.zeros((len(sentence_docs), K), dtype=np.float64)
    n_kw = np.zeros((K, V), dtype=np.float64)
    n_k = np.zeros(K, dtype=np.float64)
    _kernels.gibbs_init(word_ids, doc_ids, z, n_dk, n_kw, n_k,
                        alpha, eta, rng.random(n_tokens))

    for _ in range(iters):
        uniforms = rng.random(n_tokens)
        _kernels.gibbs_sweep(word_ids, doc_ids, z, n_dk, n_kw, n_k,
                             alpha, eta, uniforms)

    phi = (n_kw + eta) / (n_k + eta * V)[:, None]
    counts = np.bincount(z, minlength=K)
    fallback = int(np.argmax(counts))
    return TopicModel(K=K, phi=phi, alpha=alpha, eta=eta, vocab=vocab,
                      fallback_topic=fallback, seed=seed)


def annotate_sentence(model, sentence_tokens, stem=True,
                      iters=FOLDIN_ITERS):
    """Most likely topic of a sentence under a fitted model.

    Fold-in Gibbs with the topic-word matrix held fixed; word ids are
    sorted first so the result is invariant to word order. Sentences with
    no in-vocabulary content words get the training-time fallback topic.

    The model vocabulary is the only filter here: whatever preparation
    produced the training docs already decided which words count.
    """
    words = [text.porter_stem(t) for t in sentence_tokens] if stem \
        else sentence_tokens
    ids = sorted(model.stoi[w] for w in words if w in model.stoi)
    if not ids:
        return model.fallback_topic
    word_ids = np.asarray(ids, dtype=np.int64)
    # sentence-content hash keeps annotation deterministic per sentence
    seed = zlib.crc32(word_ids.tobytes()) ^ model.seed
    rng = np.random.default_rng(seed)
    # start each token at its most likely topic: the sparse prior makes
    # the chain mode-seeking, so a random start can lock in a bad mode
    z = np.argmax(model.phi[:, word_ids], axis=0)
    n_k = np.bincount(z, minlength=model.K).astype(np.float64)
    for _ in range(iters):
        uniforms = rng.random(len(ids))
        _kernels.foldin_sweep(word_ids, z, n_k, model.phi, model.alpha,
                              uniforms)
    theta = (n_k + model.alpha) / (len(ids) + model.alpha * model.K)
    return int(np.argmax(theta))  # argmax takes the lowest id on ties


def label_corpus(model, split, vocab, stem=True):
    """Fill per-sentence topic labels (plus terminal EOT) for every example."""
    for part in (split.train, split.valid, split.test):
        for ex in part:
            labels = [annotate_sentence(model, vocab.decode(s), stem=stem)
                      for s in ex.sentences]
            ex.topics = labels + [model.eot_label]
    return split


def topic_coherence(model, docs, top_n=10, window=10, eps=1e-12):
    """Mean NPMI over the top words of each topic.

    Co-occurrence probabilities are estimated over sliding windows of the
    given size across the (content-word) documents.
    """
    windows = []
    for doc in docs:
        if len(doc) <= window:
            windows.append(set(doc))
        else:
            for i in range(len(doc) - window + 1):
                windows.append(set(doc[i:i + window]))
    n_win = max(len(windows), 1)

    per_topic = np.zeros(model.K)
    for k in range(model.K):
        words = model.top_words(k, top_n)
        scores = []
        for i in range(len(words)):
            for j in range(i + 1, len(words)):
                wi, wj = words[i], words[j]
                ci = sum(1 for w in windows if wi in w)
                cj = sum(1 for w in windows if wj in w)
                cij = sum(1 for w in windows if wi in w and wj in w)
                if cij == ci == cj and cij > 0:
                    # perfect association; the 0/0 limit of NPMI is 1
                    scores.append(1.0)
                    continue
                pij = cij / n_win if cij else eps
                pi = max(ci / n_win, eps)
                pj = max(cj / n_win, eps)
                scores.append(math.log(pij / (pi * pj)) / -math.log(pij))
        per_topic[k] = float(np.mean(scores)) if scores else 0.0
    return per_topic, float(per_topic.mean())


def grid_search_topics(docs, k_values=K_GRID, seed=100, iters=TRAIN_ITERS,
                       alpha=DEFAULT_ALPHA, eta=DEFAULT_ETA):
    """One model per candidate K, ranked by coherence (descending)."""
    candidates = []
    for K in k_values:
        model = train_lda(docs, K, seed=seed, alpha=alpha, eta=eta,
                          iters=iters)
        _, mean_npmi = topic_coherence(model, docs)
        candidates.append((K, model, mean_npmi))
    candidates.sort(key=lambda c: (-c[2], c[0]))
    return candidates


def write_topic_summary(model, path, top_n=10):
    """Human-readable listing of the top words per topic."""
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        for k in range(model.K):
            f.write(f"#{k}: " + ", ".join(model.top_words(k, top_n)) + "\n")
    os.replace(tmp, path)
