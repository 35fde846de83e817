"""Optimization loop: Nesterov momentum SGD with gradient-norm clipping,
plateau learning-rate decay and ROUGE-based dev-set model selection.
"""
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import metrics, model as M
from .inference import DecodeConfig, generate


class NumericError(RuntimeError):
    """Loss became non-finite; carries the diagnostic payload."""


@dataclass
class TrainConfig:
    lr: float = 0.25
    momentum: float = 0.99
    clip_norm: float = 0.1
    lr_decay: float = 0.1
    min_lr: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 50
    seed: int = 0
    eval_every: int = 1       # epochs between dev evaluations
    dev_decode: bool = True   # greedy-decode dev set for ROUGE selection
    stop_loss: float = None   # stop once mean train loss drops below this

    def __post_init__(self):
        if self.lr <= 0 or self.clip_norm <= 0:
            raise ValueError("lr and clip_norm must be positive")


def clip_gradients(grads, max_norm):
    """Scale gradients so the global L2 norm is at most `max_norm`."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


def make_batches(examples, batch_size):
    """Bucket by source length, then chunk; order is deterministic."""
    order = sorted(range(len(examples)),
                   key=lambda i: (len(examples[i].source), i))
    return [order[i:i + batch_size]
            for i in range(0, len(order), batch_size)]


def batch_loss_and_grads(params, hp, batch, rng):
    """Mean loss over a batch via per-example gradient accumulation."""
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    total = 0.0
    for ex in batch:
        loss, w, _ = M.forward_loss(params, hp, ex, rng=rng)
        loss.backward()
        total += float(loss.data)
        for k in grads:
            grads[k] += w[k].grad
    n = len(batch)
    for k in grads:
        grads[k] /= n
    return total / n, grads


def evaluate_dev(params, hp, examples, decode=True):
    """Dev loss plus greedy-decoding ROUGE-1/2/L F scores."""
    losses = []
    for ex in examples:
        loss, _, _ = M.forward_loss(params, hp, ex, rng=None)
        losses.append(float(loss.data))
    out = {"loss": float(np.mean(losses)) if losses else 0.0,
           "r1": 0.0, "r2": 0.0, "rl": 0.0}
    if decode and examples:
        config = DecodeConfig(beam_size=1, sentence_beam=1)
        systems, refs = [], []
        for ex in examples:
            res = generate(params, hp, ex.source, config)
            systems.append(res.tokens)
            refs.append([t for s in ex.sentences for t in s])
        report = metrics.evaluate_corpus(systems, refs)
        out["r1"] = report["mean"]["r1_f"]
        out["r2"] = report["mean"]["r2_f"]
        out["rl"] = report["mean"]["rl_f"]
    return out


@dataclass
class TrainResult:
    best_params: dict
    best_epoch: int
    best_dev: dict
    history: list = field(default_factory=list)


def train(params, hp, split, config, log_path=None, checkpoint_path=None,
          vocab_hash=""):
    """Run the full training loop; returns the best checkpoint by dev
    ROUGE-L (ties broken by lower dev loss)."""
    rng = np.random.default_rng(config.seed)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    lr = config.lr
    best = None        # (rl, -loss) maximized
    best_params, best_epoch, best_dev = None, -1, None
    best_dev_loss = math.inf
    history = []
    log_f = open(log_path, "w") if log_path else None
    step = 0
    try:
        for epoch in range(config.max_epochs):
            batches = make_batches(split.train, config.batch_size)
            epoch_loss = 0.0
            for batch_idx in batches:
                batch = [split.train[i] for i in batch_idx]
                loss, grads = batch_loss_and_grads(params, hp, batch, rng)
                if not math.isfinite(loss):
                    raise NumericError(json.dumps({
                        "loss": str(loss), "epoch": epoch, "step": step,
                        "batch_sources": [len(b.source) for b in batch],
                        "grad_norms": {k: float(np.abs(g).max())
                                       for k, g in grads.items()}}))
                clip_gradients(grads, config.clip_norm)
                for k in params:
                    velocity[k] = config.momentum * velocity[k] + grads[k]
                    params[k] -= lr * (grads[k] + config.momentum * velocity[k])
                epoch_loss += loss
                step += 1
            epoch_loss /= max(len(batches), 1)

            record = {"epoch": epoch, "step": step,
                      "train_loss": round(epoch_loss, 8), "lr": lr}
            if (epoch + 1) % config.eval_every == 0:
                dev = evaluate_dev(params, hp, split.valid,
                                   decode=config.dev_decode)
                record.update(dev_loss=round(dev["loss"], 8),
                              dev_R1=round(dev["r1"], 6),
                              dev_R2=round(dev["r2"], 6),
                              dev_RL=round(dev["rl"], 6))
                key = (dev["rl"], -dev["loss"])
                if best is None or key > best:
                    best = key
                    best_params = {k: v.copy() for k, v in params.items()}
                    best_epoch, best_dev = epoch, dev
                    if checkpoint_path:
                        M.save_checkpoint(checkpoint_path, best_params, hp,
                                          vocab_hash,
                                          extra={"epoch": epoch, "dev": dev})
                # plateau decay on dev loss
                if dev["loss"] < best_dev_loss - 1e-12:
                    best_dev_loss = dev["loss"]
                else:
                    lr *= config.lr_decay
            history.append(record)
            if log_f:
                log_f.write(json.dumps(record, sort_keys=True) + "\n")
                log_f.flush()
            if lr < config.min_lr:
                break
            if config.stop_loss is not None and epoch_loss < config.stop_loss:
                break
    finally:
        if log_f:
            log_f.close()
    if best_params is None:
        best_params = {k: v.copy() for k, v in params.items()}
        best_epoch, best_dev = config.max_epochs - 1, None
    return TrainResult(best_params=best_params, best_epoch=best_epoch,
                       best_dev=best_dev, history=history)
