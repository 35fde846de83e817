"""Encoder/decoder architecture and training loss.

Three decoder modes:
  flat              - single-sequence convolutional decoder (CV-S2S style)
  structured        - LSTM document-level decoder producing one sentence
                      vector per sentence + convolutional sentence decoder
  structured+topic  - structured, plus a topic-label softmax head trained
                      as an auxiliary task
"""
import json
import math
import os
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .vocab import EOD, EOS, PAD, SOS

MODES = ("flat", "structured", "structured+topic")

RESIDUAL_SCALE = math.sqrt(0.5)


@dataclass
class Hyperparams:
    vocab_size: int
    emb_dim: int = 256
    hidden_dim: int = 256
    enc_layers: int = 4
    dec_layers: int = 3
    kernel_width: int = 3
    dropout: float = 0.2
    max_token_positions: int = 48
    max_sentence_positions: int = 16
    max_source_positions: int = 800
    topic_count: int = 0              # K+1 labels incl. EOT; 0 = no topic head
    mode: str = "structured+topic"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.kernel_width % 2 != 1:
            raise ValueError("kernel_width must be odd")
        if min(self.emb_dim, self.hidden_dim, self.enc_layers,
               self.dec_layers) <= 0:
            raise ValueError("dimensions and layer counts must be positive")
        if self.mode == "structured+topic" and self.topic_count < 2:
            raise ValueError("structured+topic mode needs topic_count >= 2")

    @property
    def flat_positions(self):
        # flat mode decodes the whole summary as one sequence
        return self.max_sentence_positions * (self.max_token_positions + 1) + 2


def init_params(hp, seed=0):
    """All learnable weights, fan-in-scaled normal initialization."""
    rng = np.random.default_rng(seed)
    d, k, v = hp.hidden_dim, hp.kernel_width, hp.vocab_size
    p = {}

    def mat(name, n_in, n_out):
        p[name] = rng.normal(0.0, math.sqrt(1.0 / n_in), size=(n_in, n_out))

    def vec(name, n):
        p[name] = np.zeros(n)

    p["tok_emb"] = rng.normal(0.0, 0.1, size=(v, d))
    p["pos_src"] = rng.normal(0.0, 0.1, size=(hp.max_source_positions, d))
    n_pos = hp.flat_positions if hp.mode == "flat" else hp.max_token_positions
    p["pos_tok"] = rng.normal(0.0, 0.1, size=(n_pos, d))
    if hp.mode != "flat":
        p["pos_sent"] = rng.normal(0.0, 0.1, size=(hp.max_sentence_positions, d))
        mat("lstm_wx", d, 4 * d)
        mat("lstm_wh", d, 4 * d)
        vec("lstm_b", 4 * d)
        mat("w_s", 2 * d, d)
        vec("b_s", d)
        if hp.topic_count:
            mat("w_k", d, hp.topic_count)
            vec("b_k", hp.topic_count)
    for l in range(hp.enc_layers):
        mat(f"enc{l}_conv", k * d, 2 * d)
        vec(f"enc{l}_bias", 2 * d)
    for l in range(hp.dec_layers):
        mat(f"dec{l}_conv", k * d, 2 * d)
        vec(f"dec{l}_bias", 2 * d)
        mat(f"dec{l}_wd", d, d)
        vec(f"dec{l}_bd", d)
    mat("w_y", d, v)
    vec("b_y", v)
    return p


def wrap(params):
    return {name: Tensor(arr) for name, arr in params.items()}


def _zeros(shape):
    return ad.constant(np.zeros(shape))


def _glu_conv(x, weight, bias, k, pad_left, pad_right):
    """Width-k convolution (as shifted matmuls) followed by a GLU gate."""
    n, d = x.shape
    parts = []
    if pad_left:
        parts.append(_zeros((pad_left, d)))
    parts.append(x)
    if pad_right:
        parts.append(_zeros((pad_right, d)))
    xp = concat_if(parts)
    windows = ad.concat([xp[o:o + n] for o in range(k)], axis=1)
    h = windows @ weight + bias
    a, b = h[:, :d], h[:, d:]
    return a * ad.sigmoid(b)


def concat_if(parts):
    return parts[0] if len(parts) == 1 else ad.concat(parts, axis=0)


@dataclass
class EncoderOutput:
    z: Tensor          # (n, d) encoder states
    e_src: Tensor      # (n, d) input-element embeddings (word + position)
    attn_values: Tensor  # z + e_src


def encode(w, hp, source_ids, rng=None):
    """Convolutional encoder: GLU blocks with scaled residual connections."""
    ids = np.asarray(source_ids, dtype=np.int64)
    if ids.size == 0 or np.all(ids == PAD):
        raise ValueError("source must contain at least one non-PAD token")
    if ids.min() < 0 or ids.max() >= hp.vocab_size:
        raise ValueError("source token id out of vocabulary range")
    n = ids.shape[0]
    if n > w["pos_src"].shape[0]:
        raise ValueError(f"source length {n} exceeds maximum")
    e = ad.embedding(w["tok_emb"], ids) + ad.embedding(
        w["pos_src"], np.arange(n))
    x = e
    half = (hp.kernel_width - 1) // 2
    for l in range(hp.enc_layers):
        xd = ad.dropout(x, hp.dropout, rng)
        y = _glu_conv(xd, w[f"enc{l}_conv"], w[f"enc{l}_bias"],
                      hp.kernel_width, half, half)
        x = ad.scale(y + x, RESIDUAL_SCALE)
    return EncoderOutput(z=x, e_src=e, attn_values=x + e)


def transpose(a):
    out = Tensor(a.data.T, (a,))
    out.bwd = lambda g: ad._accum(a, g.T)
    return out


@dataclass
class DocDecoderState:
    h: Tensor          # (1, d) LSTM hidden
    c: Tensor          # (1, d) LSTM cell
    s_prev: Tensor     # (1, d) previous sentence vector
    t: int = 1


def doc_init(w, hp, enc):
    """h_0 = mean of encoder states; cell and s_0 start at zero."""
    d = hp.hidden_dim
    h0 = ad.reshape(ad.mean(enc.z, axis=0), (1, d))
    return DocDecoderState(h=h0, c=_zeros((1, d)), s_prev=_zeros((1, d)), t=1)


def doc_attend(h, enc):
    """Dot-product attention of the document decoder over encoder states."""
    scores = h @ transpose(enc.z)               # (1, n)
    alpha = ad.softmax(scores, axis=-1)
    return alpha @ enc.z, alpha


def doc_step(w, hp, state, enc):
    """One LSTM step; returns (new state, sentence vector s_t)."""
    if state.t > hp.max_sentence_positions + 1:
        raise ValueError(f"sentence step {state.t} exceeds maximum")
    gates = state.s_prev @ w["lstm_wx"] + state.h @ w["lstm_wh"] + w["lstm_b"]
    d = hp.hidden_dim
    i, f, g, o = (gates[:, :d], gates[:, d:2 * d],
                  gates[:, 2 * d:3 * d], gates[:, 3 * d:])
    c = ad.sigmoid(f) * state.c + ad.sigmoid(i) * ad.tanh(g)
    h = ad.sigmoid(o) * ad.tanh(c)
    ctx, _ = doc_attend(h, enc)
    s_t = ad.tanh(ad.concat([h, ctx], axis=1) @ w["w_s"] + w["b_s"])
    new_state = DocDecoderState(h=h, c=c, s_prev=s_t, t=state.t + 1)
    return new_state, s_t


def topic_logits(w, hp, s_t):
    if not hp.topic_count:
        raise ValueError("topic head is only available in structured+topic mode")
    return s_t @ w["w_k"] + w["b_k"]


def embed_target(w, hp, input_ids, sent_idx=None):
    """w_ti = emb(y) + token-position (+ sentence-position when structured)."""
    ids = np.asarray(input_ids, dtype=np.int64)
    n = ids.shape[0]
    n_pos = w["pos_tok"].shape[0]
    if n > n_pos:
        raise ValueError(f"target length {n} exceeds position table {n_pos}")
    out = ad.embedding(w["tok_emb"], ids) + ad.embedding(
        w["pos_tok"], np.arange(n))
    if sent_idx is not None:
        if sent_idx >= w["pos_sent"].shape[0]:
            raise ValueError(f"sentence position {sent_idx} out of range")
        out = out + ad.embedding(w["pos_sent"], np.full(n, sent_idx))
    return out


def sent_attend(w, hp, layer, o, s_t, g_emb, enc):
    """Multi-step attention for one decoder layer.

    d = W_d(o + s_t) + g; weights over encoder states; values z + e.
    Flat mode passes s_t=None and omits the sentence-vector term.
    """
    q = o if s_t is None else o + s_t
    d_vec = q @ w[f"dec{layer}_wd"] + w[f"dec{layer}_bd"] + g_emb
    scores = d_vec @ transpose(enc.z)
    a = ad.softmax(scores, axis=-1)
    return a @ enc.attn_values, a


def decode_tokens(w, hp, enc, input_ids, s_t=None, sent_idx=None, rng=None):
    """Run the causal convolutional decoder over one target sequence.

    Returns logits (n, vocab). `s_t`/`sent_idx` are None in flat mode.
    """
    g_emb = embed_target(w, hp, input_ids, sent_idx)
    x = g_emb
    k = hp.kernel_width
    for l in range(hp.dec_layers):
        xd = ad.dropout(x, hp.dropout, rng)
        o = _glu_conv(xd, w[f"dec{l}_conv"], w[f"dec{l}_bias"], k, k - 1, 0)
        c, _ = sent_attend(w, hp, l, o, s_t, g_emb, enc)
        if l == hp.dec_layers - 1:
            return (o + c) @ w["w_y"] + w["b_y"]
        combined = o + c if s_t is None else o + s_t + c
        x = ad.scale(combined + x, RESIDUAL_SCALE)


def sentence_targets(sentences):
    """Per-sentence (input, target) id sequences with teacher forcing.

    Every sentence is terminated by EOS except the last, which gets EOD.
    """
    pairs = []
    for t, sent in enumerate(sentences):
        terminal = EOD if t == len(sentences) - 1 else EOS
        target = list(sent) + [terminal]
        pairs.append(([SOS] + target[:-1], target))
    return pairs


def flat_target(sentences):
    target = []
    for t, sent in enumerate(sentences):
        target.extend(sent)
        target.append(EOD if t == len(sentences) - 1 else EOS)
    return [SOS] + target[:-1], target


def forward_loss(params, hp, example, rng=None):
    """Training loss for one example; returns (loss, wrapped params, parts).

    Structured modes compute all sentence vectors first (the document
    decoder consumes its own previous output), then decode every sentence
    with teacher forcing. Token NLL is averaged over all target tokens;
    in topic mode the per-label topic NLL mean is added unweighted.
    """
    w = wrap(params)
    enc = encode(w, hp, example.source, rng)
    parts = {}

    if hp.mode == "flat":
        inp, tgt = flat_target(example.sentences)
        logits = decode_tokens(w, hp, enc, inp, rng=rng)
        loss = ad.cross_entropy(logits, tgt)
        parts["token_nll"] = float(loss.data)
        return loss, w, parts

    topic_mode = hp.mode == "structured+topic"
    if topic_mode and example.topics is None:
        raise ValueError("structured+topic mode requires topic labels")
    n_sent = len(example.sentences)
    n_steps = n_sent + 1 if topic_mode else n_sent
    state = doc_init(w, hp, enc)
    s_list, k_logits = [], []
    for _ in range(n_steps):
        state, s_t = doc_step(w, hp, state, enc)
        s_list.append(s_t)
        if topic_mode:
            k_logits.append(topic_logits(w, hp, s_t))

    all_logits, all_targets = [], []
    for t, (inp, tgt) in enumerate(sentence_targets(example.sentences)):
        logits = decode_tokens(w, hp, enc, inp, s_t=s_list[t], sent_idx=t,
                               rng=rng)
        all_logits.append(logits)
        all_targets.extend(tgt)
    token_loss = ad.cross_entropy(ad.concat(all_logits, axis=0), all_targets)
    parts["token_nll"] = float(token_loss.data)

    if topic_mode:
        topic_loss = ad.cross_entropy(ad.concat(k_logits, axis=0),
                                      example.topics)
        parts["topic_nll"] = float(topic_loss.data)
        return token_loss + topic_loss, w, parts
    return token_loss, w, parts


# ---------------------------------------------------------------------------
# Checkpoints: deterministic binary container (JSON header + raw arrays).

def save_checkpoint(path, params, hp, vocab_hash="", extra=None):
    names = sorted(params)
    header = {"version": 1, "hyperparams": asdict(hp),
              "vocab_hash": vocab_hash, "extra": extra or {},
              "params": [{"name": n, "shape": list(params[n].shape)}
                         for n in names]}
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for n in names:
            f.write(np.ascontiguousarray(params[n], dtype=np.float64).tobytes())
    os.replace(tmp, path)


def load_checkpoint(path):
    with open(path, "rb") as f:
        header = json.loads(f.readline())
        blob = f.read()
    hp = Hyperparams(**header["hyperparams"])
    params, offset = {}, 0
    for spec in header["params"]:
        size = int(np.prod(spec["shape"])) * 8
        arr = np.frombuffer(blob[offset:offset + size], dtype=np.float64)
        params[spec["name"]] = arr.reshape(spec["shape"]).copy()
        offset += size
    return params, hp, header
