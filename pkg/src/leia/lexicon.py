"""Word-level emotion lexicon in the NRC ``word<TAB>category<TAB>flag`` format."""

import json
import string
from collections import defaultdict
from dataclasses import dataclass, field

from leia.labels import EmotionLabel

NRC_CATEGORIES = (
    "anger", "anticipation", "disgust", "fear", "joy",
    "negative", "positive", "sadness", "surprise", "trust",
)

# open-lexicon analogue of emo_anger / emo_anx / emo_sad / emo_pos
DEFAULT_CATEGORY_MAP = {
    "anger": EmotionLabel.ANGER,
    "fear": EmotionLabel.FEAR,
    "sadness": EmotionLabel.SADNESS,
    "positive": EmotionLabel.HAPPINESS,
}

_PUNCT = string.punctuation + "‘’“”…"


class LexiconFormatError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


@dataclass
class EmotionLexicon:
    words: dict = field(default_factory=dict)  # word -> frozenset of categories
    categories: tuple = NRC_CATEGORIES

    def __post_init__(self):
        words = {}
        for w, cats in self.words.items():
            w = w.strip().lower()
            if not w:
                raise ValueError("empty word in lexicon")
            cats = frozenset(cats)
            unknown = cats - set(self.categories)
            if unknown:
                raise ValueError(f"{w!r} has undeclared categories {sorted(unknown)}")
            if cats:
                words[w] = words.get(w, frozenset()) | cats
        self.words = words
        self.categories = tuple(self.categories)

    def lookup(self, word):
        return self.words.get(word.lower(), frozenset())

    def words_in(self, category):
        if category not in self.categories:
            raise KeyError(f"unknown lexicon category {category!r}")
        return frozenset(w for w, cats in self.words.items() if category in cats)

    def __len__(self):
        return len(self.words)


def load_lexicon(path) -> EmotionLexicon:
    words = defaultdict(set)
    seen_cats = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise LexiconFormatError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            word, cat, flag = (p.strip() for p in parts)
            if not word or not cat:
                raise LexiconFormatError(path, lineno, "empty word or category")
            if flag not in ("0", "1"):
                raise LexiconFormatError(path, lineno, f"flag must be 0 or 1, got {flag!r}")
            if cat not in seen_cats:
                seen_cats.append(cat)
            if flag == "1":
                words[word.lower()].add(cat)
    cats = tuple(NRC_CATEGORIES) + tuple(c for c in seen_cats if c not in NRC_CATEGORIES)
    return EmotionLexicon(dict(words), cats)


def save_lexicon(lex: EmotionLexicon, path):
    """Write flag=1 rows only, sorted, so load_lexicon(save_lexicon(x)) == x."""
    with open(path, "w", encoding="utf-8") as f:
        for w in sorted(lex.words):
            for c in sorted(lex.words[w]):
                f.write(f"{w}\t{c}\t1\n")


def emotion_word_set(lex: EmotionLexicon) -> frozenset:
    return frozenset(lex.words)


def tokenize(text):
    """Lowercased whitespace tokens with edge punctuation stripped."""
    out = []
    for tok in text.split():
        tok = tok.strip(_PUNCT).lower()
        if tok:
            out.append(tok)
    return out


def category_score(text, category, lex: EmotionLexicon) -> float:
    """Fraction of tokens of ``text`` listed under ``category``."""
    members = lex.words_in(category)
    toks = tokenize(text)
    if not toks:
        return 0.0
    return sum(t in members for t in toks) / len(toks)


class CategoryMap(dict):
    """lexicon category -> EmotionLabel. Affection may be left unmapped."""

    def __init__(self, mapping=None):
        mapping = DEFAULT_CATEGORY_MAP if mapping is None else mapping
        super().__init__({c: EmotionLabel.parse(l) for c, l in mapping.items()})
        labels = list(self.values())
        if len(labels) != len(set(labels)):
            raise ValueError("two categories map to the same label")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls(json.load(f))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump({c: l.value for c, l in self.items()}, f, indent=2, sort_keys=True)
