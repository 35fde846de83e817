"""Command-line entry point tying the pipeline together.

Commands: synth, preprocess, train-topics, annotate, train, generate,
evaluate, benchmark. Exit codes: 0 success, 2 config error, 3 data error,
4 numeric failure.
"""
import argparse
import json
import os
import sys
import time

import numpy as np

from . import corpus, inference, metrics, model as M, synth, topics, trainer
from .vocab import Vocab


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _env_default(key, default, cast):
    """Config keys can be overridden via STRUCTSUM_<KEY> env vars."""
    raw = os.environ.get("STRUCTSUM_" + key.upper().replace("-", "_"))
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError as e:
        raise ConfigError(f"bad env override for {key}: {e}")


def _require(path, what):
    if not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    return path


def _read_records(path):
    paths = []
    if os.path.isdir(path):
        paths = sorted(os.path.join(path, f) for f in os.listdir(path)
                       if f.endswith(".jsonl"))
    else:
        paths = [path]
    if not paths:
        raise DataError(f"no .jsonl files under {path}")
    records = []
    for p in paths:
        with open(p) as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise DataError(f"{p}: malformed line {lineno}: {e}")
    return records


def _load_data(data_dir):
    _require(data_dir, "corpus directory")
    split = corpus.read_split(data_dir)
    vocab = Vocab.load(_require(os.path.join(data_dir, "vocab.txt"),
                                "vocab file"))
    return split, vocab


def cmd_synth(args):
    os.makedirs(args.out, exist_ok=True)
    records, _ = synth.make_records(args.n, n_topics=args.topics,
                                    seed=args.seed)
    synth.write_records(os.path.join(args.out, "raw.jsonl"), records)
    if args.prepared:
        split, vocab = synth.make_split(args.n, n_topics=args.topics,
                                        seed=args.seed)
        corpus.write_split(args.out, split)
        vocab.save(os.path.join(args.out, "vocab.txt"))
    print(f"wrote {args.n} synthetic instances to {args.out}")


def cmd_preprocess(args):
    records = _read_records(_require(args.input, "input"))
    split, vocab, rejected = corpus.preprocess(
        records, max_source_tokens=args.max_source_tokens,
        min_lead_tokens=args.min_lead_tokens, min_docs=args.min_docs,
        max_sentences=args.max_sentences,
        max_sentence_len=args.max_sentence_len,
        vocab_size=args.vocab_size, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    corpus.write_split(args.out, split)
    vocab.save(os.path.join(args.out, "vocab.txt"))
    summary = {"train": len(split.train), "valid": len(split.valid),
               "test": len(split.test), "rejected": dict(rejected)}
    with open(os.path.join(args.out, "preprocess.json"), "w") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
    print(json.dumps(summary, sort_keys=True))


def _topic_docs(split, vocab):
    docs = []
    for ex in split.train:
        for sent in ex.sentences:
            docs.append(topics.prepare_sentence(vocab.decode(sent)))
    return docs


def cmd_train_topics(args):
    split, vocab = _load_data(args.data)
    docs = _topic_docs(split, vocab)
    if args.k is not None:
        model = topics.train_lda(docs, args.k, seed=args.seed,
                                 iters=args.iters)
        _, coherence = topics.topic_coherence(model, docs)
        chosen = [(args.k, model, coherence)]
    else:
        grid = [int(k) for k in args.k_grid.split(",")]
        chosen = topics.grid_search_topics(docs, grid, seed=args.seed,
                                           iters=args.iters)
    report = [{"K": k, "coherence": c} for k, _, c in chosen]
    best_k, best_model, _ = chosen[0]
    best_model.save(args.out)
    topics.write_topic_summary(best_model, args.out + ".topics.txt")
    with open(args.out + ".grid.json", "w") as f:
        json.dump(report, f, indent=2)
    print(json.dumps({"chosen_K": best_k, "candidates": report}))


def cmd_annotate(args):
    split, vocab = _load_data(args.data)
    model = topics.TopicModel.load(_require(args.topic_model, "topic model"))
    topics.label_corpus(model, split, vocab)
    corpus.write_split(args.data, split)
    print(f"annotated corpus in {args.data} with K={model.K} topics")


def _hyperparams(args, vocab, topic_count):
    return M.Hyperparams(
        vocab_size=len(vocab), emb_dim=args.dim, hidden_dim=args.dim,
        enc_layers=args.enc_layers, dec_layers=args.dec_layers,
        dropout=args.dropout, max_token_positions=args.max_sentence_len + 2,
        max_sentence_positions=args.max_sentences + 1,
        max_source_positions=args.max_source_tokens,
        topic_count=topic_count, mode=args.mode)


def cmd_train(args):
    split, vocab = _load_data(args.data)
    topic_count = 0
    if args.mode == "structured+topic":
        labeled = [ex.topics for ex in split.train if ex.topics is not None]
        if len(labeled) != len(split.train):
            raise DataError("corpus is not topic-annotated; run `annotate`")
        topic_count = max(max(t) for t in labeled) + 1
    hp = _hyperparams(args, vocab, topic_count)
    params = M.init_params(hp, seed=args.seed)
    config = trainer.TrainConfig(
        lr=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
        seed=args.seed, eval_every=args.eval_every)
    os.makedirs(args.out, exist_ok=True)
    result = trainer.train(
        params, hp, split, config,
        log_path=os.path.join(args.out, "train.log"),
        checkpoint_path=os.path.join(args.out, "checkpoint.bin"),
        vocab_hash=vocab.content_hash())
    print(json.dumps({"best_epoch": result.best_epoch,
                      "best_dev": result.best_dev}, sort_keys=True))


def cmd_generate(args):
    params, hp, header = M.load_checkpoint(_require(args.checkpoint,
                                                    "checkpoint"))
    examples = corpus.read_examples(_require(args.input, "input split"))
    vocab = Vocab.load(_require(args.vocab, "vocab file"))
    if header.get("vocab_hash") and header["vocab_hash"] != vocab.content_hash():
        raise DataError("vocab file does not match checkpoint vocab hash")
    config = inference.DecodeConfig(
        beam_size=args.beam, sentence_beam=args.beam,
        length_alpha=args.alpha, block_trigrams=args.block_trigrams,
        max_sentences=args.max_sentences)
    tmp = args.out + ".tmp"
    with open(tmp, "w") as f:
        for i, ex in enumerate(examples):
            res = inference.generate(params, hp, ex.source, config)
            rec = {"id": i,
                   "summary": " ".join(
                       " ".join(vocab.decode(s)) for s in res.sentences),
                   "score": round(res.score, 6)}
            if res.topics is not None:
                rec["topics"] = res.topics
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    os.replace(tmp, args.out)
    print(f"wrote {len(examples)} summaries to {args.out}")


def _read_text_lines(path):
    with open(_require(path, "text file")) as f:
        return [line.split() for line in f.read().splitlines()]


def cmd_evaluate(args):
    systems = _read_text_lines(args.system)
    references = _read_text_lines(args.reference)
    sources = _read_text_lines(args.source) if args.source else None
    if len(systems) != len(references) or (
            sources is not None and len(sources) != len(systems)):
        raise DataError("system/reference/source line counts differ")
    report = metrics.evaluate_corpus(systems, references, sources,
                                     stem=args.stem)
    metrics.write_report(args.out, report)
    print(json.dumps(report["mean"], sort_keys=True))


def cmd_benchmark(args):
    from . import _kernels
    os.environ["STRUCTSUM_NO_NUMBA"] = "0"
    rng = np.random.default_rng(args.seed)
    timings = {"numba_enabled": _kernels.HAS_NUMBA}

    n_docs, V, K, n_tok = 200, 300, 10, 5000
    word_ids = rng.integers(0, V, n_tok)
    doc_ids = np.sort(rng.integers(0, n_docs, n_tok))
    z = rng.integers(0, K, n_tok)
    n_dk = np.zeros((n_docs, K))
    n_kw = np.zeros((K, V))
    n_k = np.zeros(K)
    for i in range(n_tok):
        n_dk[doc_ids[i], z[i]] += 1
        n_kw[z[i], word_ids[i]] += 1
        n_k[z[i]] += 1

    def time_gibbs(sweep):
        state = (z.copy(), n_dk.copy(), n_kw.copy(), n_k.copy())
        sweep(word_ids, doc_ids, state[0], state[1], state[2], state[3],
              0.001, 0.01, rng.random(n_tok))  # warm-up / jit compile
        t0 = time.perf_counter()
        for _ in range(args.sweeps):
            sweep(word_ids, doc_ids, state[0], state[1], state[2], state[3],
                  0.001, 0.01, rng.random(n_tok))
        return (time.perf_counter() - t0) / args.sweeps

    a = rng.integers(0, 50, 400)
    b = rng.integers(0, 50, 500)

    def time_lcs(fn):
        fn(a, b)
        t0 = time.perf_counter()
        for _ in range(args.sweeps):
            fn(a, b)
        return (time.perf_counter() - t0) / args.sweeps

    timings["gibbs_sweep_s"] = time_gibbs(_kernels.gibbs_sweep)
    timings["lcs_s"] = time_lcs(_kernels.lcs_length)
    if _kernels.HAS_NUMBA:
        timings["gibbs_sweep_fallback_s"] = time_gibbs(
            _kernels.gibbs_sweep.py_func)
        timings["lcs_fallback_s"] = time_lcs(_kernels.lcs_length.py_func)
        timings["gibbs_speedup"] = (timings["gibbs_sweep_fallback_s"]
                                    / timings["gibbs_sweep_s"])
        timings["lcs_speedup"] = timings["lcs_fallback_s"] / timings["lcs_s"]
    print(json.dumps(timings, sort_keys=True, indent=2))


def build_parser():
    p = argparse.ArgumentParser(
        prog="structsum",
        description="Topic-guided multi-document summarization")
    sub = p.add_subparsers(dest="command", required=True)

    def flag(sp, name, default, type_, help_=""):
        sp.add_argument(name, type=type_,
                        default=_env_default(name.lstrip("-"), default, type_),
                        help=f"{help_} (default {default})")

    sp = sub.add_parser("synth", help="generate a synthetic template corpus")
    sp.add_argument("--out", required=True)
    flag(sp, "--n", 50, int)
    flag(sp, "--topics", 5, int)
    flag(sp, "--seed", 0, int)
    sp.add_argument("--prepared", action="store_true",
                    help="also write an encoded split with true topic labels")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("preprocess", help="build corpus splits from raw records")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    flag(sp, "--max-source-tokens", 800, int)
    flag(sp, "--min-lead-tokens", 23, int)
    flag(sp, "--min-docs", 6, int)
    flag(sp, "--max-sentences", 15, int)
    flag(sp, "--max-sentence-len", 40, int)
    flag(sp, "--vocab-size", 50000, int)
    flag(sp, "--seed", 0, int)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("train-topics", help="fit LDA sentence-topic model")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--k", type=int, default=None,
                    help="fixed topic count (otherwise grid search)")
    sp.add_argument("--k-grid", default="10,20,30,40,50,60,70,80,90")
    flag(sp, "--iters", 200, int)
    flag(sp, "--seed", 100, int)
    sp.set_defaults(func=cmd_train_topics)

    sp = sub.add_parser("annotate", help="label summary sentences with topics")
    sp.add_argument("--data", required=True)
    sp.add_argument("--topic-model", required=True)
    sp.set_defaults(func=cmd_annotate)

    sp = sub.add_parser("train", help="train a summarization model")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", default="structured+topic", choices=M.MODES)
    flag(sp, "--dim", 256, int)
    flag(sp, "--enc-layers", 4, int)
    flag(sp, "--dec-layers", 3, int)
    flag(sp, "--dropout", 0.2, float)
    flag(sp, "--lr", 0.25, float)
    flag(sp, "--batch-size", 32, int)
    flag(sp, "--epochs", 50, int)
    flag(sp, "--eval-every", 1, int)
    flag(sp, "--seed", 0, int)
    flag(sp, "--max-source-tokens", 800, int)
    flag(sp, "--max-sentences", 15, int)
    flag(sp, "--max-sentence-len", 40, int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("generate", help="decode summaries for a split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--out", required=True)
    flag(sp, "--beam", 5, int)
    flag(sp, "--alpha", 1.0, float)
    flag(sp, "--max-sentences", 15, int)
    sp.add_argument("--block-trigrams", action=argparse.BooleanOptionalAction,
                    default=True)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("evaluate", help="score system output")
    sp.add_argument("--system", required=True)
    sp.add_argument("--reference", required=True)
    sp.add_argument("--source", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--stem", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("benchmark", help="compare numba kernels vs fallback")
    flag(sp, "--sweeps", 20, int)
    flag(sp, "--seed", 0, int)
    sp.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except trainer.NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
