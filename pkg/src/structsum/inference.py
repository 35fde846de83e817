"""Constrained beam-search generation.

Structured modes run a greedy document-level loop: one sentence vector per
step, a token-level beam per sentence, trigram blocking over the whole
summary so far, and a repeated-sentence discard rule. The topic head's
End-Of-Topic prediction is a hard stop. Flat mode is a single beam search
over the whole summary.
"""
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as M
from .vocab import EOD, EOS, SOS


@dataclass
class DecodeConfig:
    beam_size: int = 5
    sentence_beam: int = 5
    length_alpha: float = 1.0
    block_trigrams: bool = True
    overlap_threshold: float = 0.8
    max_sentences: int = 15
    max_tokens: int = 40

    def __post_init__(self):
        if self.beam_size < 1 or self.sentence_beam < 1:
            raise ValueError("beam sizes must be >= 1")
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise ValueError("overlap threshold must be in (0, 1]")


@dataclass
class Hypothesis:
    tokens: tuple = ()        # current sentence, terminal included once done
    logprob: float = 0.0
    finished: bool = False

    def score(self, alpha):
        n = max(len(self.tokens), 1)
        return self.logprob / n ** alpha


def creates_repeated_trigram(context, candidate):
    """True iff appending `candidate` to `context` repeats a trigram
    already present in the context."""
    if len(context) < 2:
        return False
    new = (context[-2], context[-1], candidate)
    for i in range(len(context) - 2):
        if tuple(context[i:i + 3]) == new:
            return True
    return False


def sentence_overlap(prev, new):
    """Fraction of shared tokens (multiset) over the shorter sentence."""
    inter = Counter(prev) & Counter(new)
    return sum(inter.values()) / min(len(prev), len(new))


def discard_repeated_sentence(prev, new, threshold=0.8):
    if not prev or not new:
        return False
    return sentence_overlap(prev, new) > threshold


def beam_search(step_fn, config, *, context=(), max_len=None,
                terminals=(EOS, EOD), n_best=None):
    """Length-normalized beam search over tokens.

    step_fn(prefix) -> log-probability vector over the vocabulary.
    `context` is the already-generated text used for trigram blocking.
    Returns up to `n_best` finished Hypothesis objects, best first.
    """
    max_len = config.max_tokens if max_len is None else max_len
    n_best = config.sentence_beam if n_best is None else n_best
    live = [Hypothesis()]
    pool = []
    for _ in range(max_len):
        candidates = []
        for hyp in live:
            logp = step_fn(hyp.tokens)
            order = np.argsort(-logp, kind="stable")
            full = tuple(context) + hyp.tokens
            admitted = 0
            for tok in order:
                tok = int(tok)
                if tok == SOS:
                    continue
                if (config.block_trigrams and tok not in terminals
                        and creates_repeated_trigram(full, tok)):
                    continue
                candidates.append(Hypothesis(
                    tokens=hyp.tokens + (tok,),
                    logprob=hyp.logprob + float(logp[tok]),
                    finished=tok in terminals))
                # scan past blocked tokens so filtering cannot starve the
                # beam (a top-2k cutoff can leave zero candidates)
                admitted += 1
                if admitted >= 2 * config.beam_size:
                    break
        candidates.sort(key=lambda h: (-h.logprob, h.tokens))
        live = []
        for hyp in candidates:
            if hyp.finished:
                pool.append(hyp)
            elif len(live) < config.beam_size:
                live.append(hyp)
            if len(live) >= config.beam_size:
                break
        if not live:
            break
    # force-terminate anything still live at the length cap
    for hyp in live:
        logp = step_fn(hyp.tokens)
        pool.append(Hypothesis(tokens=hyp.tokens + (EOS,),
                               logprob=hyp.logprob + float(logp[EOS]),
                               finished=True))
    pool.sort(key=lambda h: (-h.score(config.length_alpha), h.tokens))
    return pool[:n_best]


class ModelRunner:
    """Read-only forward passes of a trained model for decoding."""

    def __init__(self, params, hp):
        self.w = M.wrap(params)
        self.hp = hp

    def encode(self, source_ids):
        return M.encode(self.w, self.hp, source_ids)

    def token_step_fn(self, enc, s_t=None, sent_idx=None):
        def step(prefix):
            inp = (SOS,) + prefix
            logits = M.decode_tokens(self.w, self.hp, enc, inp,
                                     s_t=s_t, sent_idx=sent_idx)
            return ad.log_softmax_np(logits.data[-1])
        return step


@dataclass
class GenerationResult:
    sentences: list = field(default_factory=list)   # token ids, no terminals
    topics: list = None
    score: float = 0.0

    @property
    def tokens(self):
        return [t for s in self.sentences for t in s]


def generate(params, hp, source_ids, config=None):
    """Decode one summary. Deterministic given (params, source, config)."""
    from dataclasses import replace
    config = config or DecodeConfig()
    # the position tables bound what the model can decode
    config = replace(
        config,
        max_tokens=min(config.max_tokens, hp.max_token_positions - 1),
        max_sentences=min(config.max_sentences, hp.max_sentence_positions))
    runner = ModelRunner(params, hp)
    enc = runner.encode(source_ids)
    if hp.mode == "flat":
        return _generate_flat(runner, enc, config)
    return _generate_structured(runner, enc, config)


def _generate_flat(runner, enc, config):
    max_len = config.max_sentences * (config.max_tokens + 1)
    best = beam_search(runner.token_step_fn(enc), config,
                       max_len=max_len, terminals=(EOD,), n_best=1)
    hyp = best[0]
    result = GenerationResult(score=hyp.score(config.length_alpha))
    sent = []
    for tok in hyp.tokens:
        if tok in (EOS, EOD):
            if sent:
                result.sentences.append(sent)
            sent = []
        else:
            sent.append(tok)
    if sent:
        result.sentences.append(sent)
    return result


def _generate_structured(runner, enc, config):
    hp = runner.hp
    topic_mode = hp.mode == "structured+topic"
    eot_label = hp.topic_count - 1 if topic_mode else None
    state = M.doc_init(runner.w, hp, enc)
    result = GenerationResult(topics=[] if topic_mode else None)
    for t in range(config.max_sentences):
        state, s_t = M.doc_step(runner.w, hp, state, enc)
        if topic_mode:
            probs = M.topic_logits(runner.w, hp, s_t).data[0]
            label = int(np.argmax(probs))
            if label == eot_label:
                # hard constraint: EOT prediction forces EOD with prob 1
                result.topics.append(label)
                break
            result.topics.append(label)
        step_fn = runner.token_step_fn(enc, s_t=s_t, sent_idx=t)
        context = tuple(result.tokens)
        candidates = beam_search(step_fn, config, context=context)
        prev = result.sentences[-1] if result.sentences else None
        chosen = None
        for hyp in candidates:
            content = [tok for tok in hyp.tokens if tok not in (EOS, EOD)]
            if not content:
                chosen = hyp
                break
            if prev is not None and discard_repeated_sentence(
                    prev, content, config.overlap_threshold):
                continue
            chosen = hyp
            break
        if chosen is None:
            # every candidate repeats the previous sentence: skip this step
            continue
        content = [tok for tok in chosen.tokens if tok not in (EOS, EOD)]
        if content:
            result.sentences.append(content)
            result.score += chosen.score(config.length_alpha)
        if chosen.tokens and chosen.tokens[-1] == EOD:
            break
    return result
