"""Token vocabulary with reserved special symbols."""
from collections import Counter

PAD, UNK, SOS, EOS, EOD, EOP, EOT = range(7)
SPECIAL_TOKENS = ["<pad>", "<unk>", "<sos>", "<eos>", "<eod>", "<eop>", "<eot>"]
NUM_SPECIALS = len(SPECIAL_TOKENS)


class Vocab:
    """Bijective token<->id mapping; ids 0..6 are reserved specials."""

    def __init__(self, tokens):
        self.itos = list(SPECIAL_TOKENS)
        seen = set(self.itos)
        for tok in tokens:
            if tok in seen:
                raise ValueError(f"duplicate token in vocab: {tok!r}")
            seen.add(tok)
            self.itos.append(tok)
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def encode(self, tokens):
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids, strip_specials=True):
        toks = [self.itos[i] for i in ids]
        if strip_specials:
            toks = [t for t in toks if t not in SPECIAL_TOKENS]
        return toks

    def save(self, path):
        # one non-special token per line; line number = id - NUM_SPECIALS
        with open(path, "w") as f:
            for tok in self.itos[NUM_SPECIALS:]:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls([line.rstrip("\n") for line in f if line.rstrip("\n")])

    def content_hash(self):
        import hashlib
        h = hashlib.sha256("\n".join(self.itos).encode())
        return h.hexdigest()[:16]


def build_vocab(examples, size=50000):
    """Most frequent tokens over sources and summaries of the train split.

    Ties are broken lexicographically (ascending). Specials never count
    against `size`.
    """
    counts = Counter()
    for ex in examples:
        counts.update(ex.title)
        counts.update(ex.source_tokens)
        for sent in ex.summary_sentences:
            counts.update(sent)
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab([tok for tok, _ in ranked[:size]])
