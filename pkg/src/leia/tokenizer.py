"""Corpus-fitted word-level tokenizer."""

import json
import re
from collections import Counter

SPECIAL_TOKENS = ("<mask>", "<pad>", "<unk>", "<s>", "</s>")
_TOKEN_RE = re.compile(r"<mask>|\w+|[^\w\s]")


class WordTokenizer:
    def __init__(self, vocab):
        vocab = list(vocab)
        if tuple(vocab[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        if len(set(vocab)) != len(vocab):
            raise ValueError("duplicate vocabulary entries")
        self.vocab = vocab
        self.index = {t: i for i, t in enumerate(vocab)}
        self.mask_id, self.pad_id, self.unk_id, self.bos_id, self.eos_id = range(5)
        self.special_ids = frozenset(range(len(SPECIAL_TOKENS)))

    def __len__(self):
        return len(self.vocab)

    @classmethod
    def fit(cls, texts, vocab_size=8000, min_count=1):
        counts = Counter()
        for t in texts:
            counts.update(m.group().lower() for m in _TOKEN_RE.finditer(t))
        for s in SPECIAL_TOKENS:
            counts.pop(s, None)
        ranked = sorted((c for c in counts.items() if c[1] >= min_count), key=lambda kv: (-kv[1], kv[0]))
        words = [w for w, _ in ranked[: max(0, vocab_size - len(SPECIAL_TOKENS))]]
        return cls(list(SPECIAL_TOKENS) + words)

    def tokenize_with_offsets(self, text):
        """Return ``[(token_id, start, end), ...]`` without special tokens."""
        out = []
        for m in _TOKEN_RE.finditer(text):
            tok = m.group()
            tok = tok if tok == "<mask>" else tok.lower()
            out.append((self.index.get(tok, self.unk_id), m.start(), m.end()))
        return out

    def encode(self, text, max_length=128):
        """Token ids wrapped in ``<s> ... </s>`` and truncated to ``max_length``."""
        return self.encode_with_offsets(text, max_length)[0]

    def encode_with_offsets(self, text, max_length=128):
        body = self.tokenize_with_offsets(text)[: max_length - 2]
        ids = [self.bos_id] + [i for i, _, _ in body] + [self.eos_id]
        offsets = [None] + [(s, e) for _, s, e in body] + [None]
        return ids, offsets

    def decode(self, ids):
        return " ".join(self.vocab[i] for i in ids if i not in (self.pad_id, self.bos_id, self.eos_id))

    def to_json(self):
        return {"type": "word", "vocab": self.vocab}

    @classmethod
    def from_json(cls, d):
        return cls(d["vocab"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, ensure_ascii=False)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))
