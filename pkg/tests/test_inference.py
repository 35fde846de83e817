import itertools
import math
import zlib

import numpy as np
import pytest

from structsum import inference, model
from structsum.inference import (DecodeConfig, Hypothesis, beam_search,
                                 creates_repeated_trigram,
                                 discard_repeated_sentence, generate,
                                 sentence_overlap)
from structsum.vocab import EOD, EOS, SOS


class TestTrigramBlocking:
    def test_repeat_blocked(self):
        assert creates_repeated_trigram(["a", "b", "c", "a", "b"], "c")

    def test_new_trigram_allowed(self):
        assert not creates_repeated_trigram(["a", "b", "c", "a", "b"], "d")

    def test_short_context_never_blocks(self):
        assert not creates_repeated_trigram(["a", "b"], "c")
        assert not creates_repeated_trigram([], "a")

    def test_blocking_is_over_whole_context(self):
        # trigram formed across an earlier portion of the summary
        ctx = list("xabcyab")
        assert creates_repeated_trigram(ctx, "c")


class TestSentenceOverlap:
    def test_multiset_fraction(self):
        assert sentence_overlap([1, 1, 2], [1, 3, 4]) == pytest.approx(1 / 3)

    def test_boundary_exactly_at_threshold_kept(self):
        prev, new = [1, 2, 3, 4, 5], [1, 2, 3, 4, 9]
        assert sentence_overlap(prev, new) == pytest.approx(0.8)
        assert not discard_repeated_sentence(prev, new, threshold=0.8)

    def test_above_threshold_discarded(self):
        assert discard_repeated_sentence([1, 2, 3, 4, 5], [1, 2, 3, 4, 5],
                                         threshold=0.8)

    def test_empty_sentences_never_discarded(self):
        assert not discard_repeated_sentence([], [1], threshold=0.8)
        assert not discard_repeated_sentence([1], [], threshold=0.8)


class TestScore:
    def test_alpha_zero_is_raw_logprob(self):
        h = Hypothesis(tokens=(7, 8, EOS), logprob=-3.0)
        assert h.score(0.0) == -3.0

    def test_alpha_one_divides_by_length(self):
        h = Hypothesis(tokens=(7, 8, EOS), logprob=-3.0)
        assert h.score(1.0) == -1.0


def hashed_step_fn(vocab_size, salt=0):
    """Deterministic fake next-token distribution keyed on the prefix."""
    def step(prefix):
        seed = zlib.crc32(repr((salt, prefix)).encode())
        logits = np.random.default_rng(seed).normal(size=vocab_size)
        x = logits - logits.max()
        return x - math.log(np.exp(x).sum())
    return step


def brute_force_best(step_fn, vocab_size, max_len, alpha):
    """Enumerate every terminated sequence the beam could produce."""
    tokens = [t for t in range(vocab_size) if t != SOS]
    nonterm = [t for t in tokens if t not in (EOS, EOD)]
    best = None
    for n in range(max_len):
        for body in itertools.product(nonterm, repeat=n):
            # terminal chosen at step n+1, or EOS forced at the length cap
            ends = (EOS, EOD) if n < max_len else (EOS,)
            for end in ends:
                seq, logp, ok = (), 0.0, True
                for tok in body + (end,):
                    logps = step_fn(seq)
                    logp += logps[tok]
                    seq = seq + (tok,)
                score = logp / len(seq) ** alpha
                if best is None or score > best[0]:
                    best = (score, seq)
    # forced-EOS sequences at the cap
    for body in itertools.product(nonterm, repeat=max_len):
        seq, logp = (), 0.0
        for tok in body:
            logp += step_fn(seq)[tok]
            seq = seq + (tok,)
        logp += step_fn(seq)[EOS]
        seq = seq + (EOS,)
        score = logp / len(seq) ** alpha
        if best is None or score > best[0]:
            best = (score, seq)
    return best


class TestBeamSearch:
    def test_wide_beam_matches_exhaustive_search(self):
        # with the beam wider than the whole search tree the result must be
        # the true argmax of the length-normalized score
        for salt in range(3):
            step = hashed_step_fn(8, salt)
            cfg = DecodeConfig(beam_size=64, sentence_beam=1,
                               length_alpha=1.0, block_trigrams=False,
                               max_tokens=3)
            got = beam_search(step, cfg)[0]
            score, seq = brute_force_best(step, 8, 3, 1.0)
            assert got.tokens == seq
            assert got.score(1.0) == pytest.approx(score)

    def test_beam_finds_better_than_greedy(self):
        # greedy takes the locally best first token and pays for it later
        logp = {
            (): {7: math.log(0.6), 8: math.log(0.4)},
            (7,): {EOS: math.log(0.1), 9: math.log(0.9)},
            (8,): {EOS: math.log(0.95), 9: math.log(0.05)},
            (7, 9): {EOS: math.log(0.5), 9: math.log(0.5)},
        }

        def step(prefix):
            out = np.full(10, -1e9)
            for tok, lp in logp.get(prefix, {EOS: 0.0}).items():
                out[tok] = lp
            return out

        greedy = beam_search(step, DecodeConfig(
            beam_size=1, sentence_beam=1, length_alpha=0.0, max_tokens=4))[0]
        wide = beam_search(step, DecodeConfig(
            beam_size=5, sentence_beam=1, length_alpha=0.0, max_tokens=4))[0]
        assert greedy.tokens[0] == 7
        assert wide.tokens == (8, EOS)
        assert wide.logprob > greedy.logprob

    def test_all_results_are_terminated(self):
        cfg = DecodeConfig(beam_size=4, sentence_beam=4, max_tokens=3,
                           block_trigrams=False)
        for hyp in beam_search(hashed_step_fn(8), cfg):
            assert hyp.finished
            assert hyp.tokens[-1] in (EOS, EOD)

    def test_forced_eos_at_length_cap(self):
        def never_stop(prefix):
            out = np.full(8, -1e9)
            out[7] = 0.0
            return out

        cfg = DecodeConfig(beam_size=1, sentence_beam=1, max_tokens=3,
                           block_trigrams=False)
        hyp = beam_search(never_stop, cfg)[0]
        assert hyp.tokens == (7, 7, 7, EOS)

    def test_trigram_blocked_path_avoided(self):
        # repeating token 7 forever would create the trigram (7,7,7) twice
        def prefer_seven(prefix):
            out = np.full(8, -20.0)
            out[7] = -0.01
            out[6] = -5.0
            out[EOS] = -10.0
            return out

        cfg = DecodeConfig(beam_size=2, sentence_beam=1, max_tokens=6,
                           block_trigrams=True)
        hyp = beam_search(prefer_seven, cfg)[0]
        toks = hyp.tokens
        trigrams = [tuple(toks[i:i + 3]) for i in range(len(toks) - 2)]
        assert len(trigrams) == len(set(trigrams))

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            DecodeConfig(beam_size=0)
        with pytest.raises(ValueError):
            DecodeConfig(overlap_threshold=0.0)


def tiny_hp(mode="structured+topic"):
    return model.Hyperparams(vocab_size=20, emb_dim=8, hidden_dim=8,
                             enc_layers=2, dec_layers=2, dropout=0.0,
                             max_token_positions=8, max_sentence_positions=4,
                             max_source_positions=30,
                             topic_count=4 if mode == "structured+topic" else 0,
                             mode=mode)


class TestGenerate:
    def test_structured_respects_sentence_cap(self):
        hp = tiny_hp("structured")
        params = model.init_params(hp, seed=0)
        res = generate(params, hp, [7, 8, 9], DecodeConfig(
            beam_size=2, sentence_beam=2, max_sentences=2, max_tokens=4))
        assert len(res.sentences) <= 2
        for sent in res.sentences:
            assert all(t not in (EOS, EOD, SOS) for t in sent)

    def test_eot_at_first_step_gives_empty_summary(self):
        hp = tiny_hp()
        params = model.init_params(hp, seed=0)
        params["w_k"][:] = 0.0
        params["b_k"][:] = 0.0
        params["b_k"][hp.topic_count - 1] = 10.0  # head always predicts EOT
        res = generate(params, hp, [7, 8, 9])
        assert res.sentences == []
        assert res.topics == [hp.topic_count - 1]

    def test_topic_labels_recorded_per_sentence(self):
        hp = tiny_hp()
        params = model.init_params(hp, seed=3)
        res = generate(params, hp, [7, 8, 9, 10])
        if res.topics and res.topics[-1] == hp.topic_count - 1:
            assert len(res.topics) == len(res.sentences) + 1
        else:
            assert len(res.topics) == len(res.sentences)

    def test_flat_mode_splits_on_eos(self):
        hp = tiny_hp("flat")
        params = model.init_params(hp, seed=1)
        res = generate(params, hp, [7, 8, 9], DecodeConfig(
            beam_size=2, sentence_beam=1, max_sentences=2, max_tokens=4))
        for sent in res.sentences:
            assert sent
            assert all(t not in (EOS, EOD, SOS) for t in sent)

    def test_deterministic(self):
        hp = tiny_hp()
        params = model.init_params(hp, seed=2)
        r1 = generate(params, hp, [7, 8, 9, 10])
        r2 = generate(params, hp, [7, 8, 9, 10])
        assert r1.sentences == r2.sentences
        assert r1.topics == r2.topics
        assert r1.score == r2.score

    def test_caps_clamped_to_position_tables(self):
        # a config larger than the model's position tables must not crash
        hp = tiny_hp("structured")
        params = model.init_params(hp, seed=0)
        res = generate(params, hp, [7, 8, 9], DecodeConfig(
            beam_size=1, sentence_beam=1, max_sentences=15, max_tokens=40))
        assert len(res.sentences) <= hp.max_sentence_positions
