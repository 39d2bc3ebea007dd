"""Deterministic synthetic fixtures: a Vent-like raw corpus with class-marker
words and known defects, an NRC-format lexicon, and small out-of-domain
test sets."""

import json
from pathlib import Path

import numpy as np

from leia.corpus import TAG_LABELS
from leia.labels import EMOTION_LABELS, EmotionLabel

MARKERS = {
    "Sadness": "lonely sad miserable crying grief tears hopeless heartbroken gloomy sorrow".split(),
    "Anger": "angry furious hate rage annoyed unfair yelled outraged livid irritated".split(),
    "Fear": "scared anxious terrified nervous panic afraid worried dread frightened uneasy".split(),
    "Affection": "love hug cuddle adore sweetheart darling cherish tender caring kisses".split(),
    "Happiness": "happy excited awesome celebrate fun amazing yay thrilled cheerful wonderful".split(),
}

FILLER = (
    "today i went to the store with my friend and then we walked home "
    "it was a long day at work and the bus was late again so i "
    "just sat there thinking about everything that happened this week "
    "my mom called me in the morning about the weekend plans for dinner "
    "the weather outside is cold but the coffee is still warm on the table "
    "we talked about school and music and the new game that came out"
).split()

NON_ENGLISH = (
    "Σήμερα πήγα στο κατάστημα με τον φίλο μου",
    "Сегодня я ходил в магазин с моим другом",
    "今日は友達と一緒に店に行きました",
    "bcdfg hjklm npqrst vwxz bcdf ghjk",
)

# skewed label mix, Sadness most common and Happiness least
LABEL_WEIGHTS = np.array([0.27, 0.24, 0.21, 0.15, 0.13])

LEXICON_CATEGORIES = {
    "Sadness": ("sadness", "negative"),
    "Anger": ("anger", "negative"),
    "Fear": ("fear", "negative"),
    "Affection": ("joy", "trust", "positive"),
    "Happiness": ("joy", "positive"),
}


def _sentence(rng, label, noise=0.3):
    n_fill = int(rng.integers(4, 11))
    words = list(rng.choice(FILLER, size=n_fill))
    own = list(rng.choice(MARKERS[label], size=int(rng.integers(1, 3)), replace=False))
    words += own
    if rng.random() < noise:
        other = EMOTION_LABELS[int(rng.integers(len(EMOTION_LABELS)))]
        words.append(str(rng.choice(MARKERS[other])))
    rng.shuffle(words)
    return " ".join(words)


def make_raw_corpus(n_posts=5000, n_users=250, seed=0, noise=0.3, defects=True):
    """Raw JSONL-ready records plus a tally of injected defects.

    Defects (non-English text, unmapped tags, too-short texts, HTML and
    whitespace noise, exact duplicates, one meme copied by 12 users) are
    injected at fixed rates so that per-stage drop counts are known.
    """
    rng = np.random.default_rng(seed)
    t0 = 1_500_000_000
    stamps = np.sort(rng.integers(t0, t0 + 365 * 86400, size=n_posts))
    records = []
    for i in range(n_posts):
        label = EMOTION_LABELS[int(rng.choice(5, p=LABEL_WEIGHTS))]
        tag = str(rng.choice(TAG_LABELS[EmotionLabel(label)]))
        text = _sentence(rng, label, noise)
        records.append({
            "id": f"p{i:06d}",
            "user_id": f"u{int(rng.integers(n_users)):04d}",
            "timestamp": int(stamps[i]),
            "tag": tag.lower() if rng.random() < 0.5 else tag,
            "text": text,
            "_label": label,
        })
    tally = {"non_english": 0, "unmapped_tag": 0, "short": 0, "duplicate": 0, "meme": 0}
    if defects:
        for r in records:
            u = rng.random()
            if u < 0.03:
                r["text"] = str(rng.choice(NON_ENGLISH))
                r["_defect"] = "non_english"
            elif u < 0.05:
                r["tag"] = str(rng.choice(["Bored", "Tired", "Hungry", "Grateful"]))
                r["_defect"] = "unmapped_tag"
            elif u < 0.07:
                r["text"] = " ".join(rng.choice(MARKERS[r["_label"]], size=2)) + " [LINK]"
                r["_defect"] = "short"
            elif u < 0.10:
                r["text"] = "<p>" + r["text"].replace(" ", "\t", 1) + "</p>\n&amp; more  words"
            if "_defect" in r:
                tally[r["_defect"]] += 1
        # exact duplicates of earlier clean posts, posted later
        clean = [r for r in records if "_defect" not in r]
        for j in range(max(1, n_posts // 50)):
            src = clean[int(rng.integers(len(clean)))]
            records.append({**src, "id": f"d{j:06d}", "timestamp": src["timestamp"] + 60,
                             "user_id": f"u{int(rng.integers(n_users)):04d}", "_defect": "duplicate"})
        meme = "answer this if you dare what is your favourite colour and why"
        for j in range(12):
            records.append({"id": f"m{j:06d}", "user_id": f"meme{j:02d}", "timestamp": int(stamps[-1]) - j,
                            "tag": "Happy", "text": meme, "_label": "Happiness", "_defect": "meme"})
    return records


def make_lexicon_rows(extra_zero_rows=True):
    rows = []
    for label, words in MARKERS.items():
        for w in words:
            for c in LEXICON_CATEGORIES[label]:
                rows.append((w, c, 1))
            if extra_zero_rows:
                rows.append((w, "surprise", 0))
    if extra_zero_rows:
        for w in sorted(set(FILLER))[:20]:
            rows.append((w, "anger", 0))
    return rows


def write_lexicon(path):
    with open(path, "w", encoding="utf-8") as f:
        for w, c, flag in make_lexicon_rows():
            f.write(f"{w}\t{c}\t{flag}\n")
    return path


ENISEAR_WORDS = {
    "Sadness": ["sad", "unhappy"],
    "Anger": ["angry", "furious"],
    "Fear": ["afraid", "scared"],
    "Happiness": ["happy", "glad"],
}


def make_enisear(n=80, seed=0):
    """Template texts "I felt <emotion> when/because <situation>"."""
    rng = np.random.default_rng(seed)
    out = []
    labels = list(ENISEAR_WORDS)
    for i in range(n):
        label = labels[i % 4]
        word = str(rng.choice(ENISEAR_WORDS[label]))
        mod = "really " if rng.random() < 0.3 else ""
        conn = "when" if rng.random() < 0.5 else "because"
        situation = _sentence(rng, label, noise=0.2)
        out.append({"id": f"e{i:04d}", "text": f"I felt {mod}{word} {conn} {situation}", "label": label.lower()})
    return out


def make_ood_tweets(n=300, seed=1):
    """Short posts with dataset-style labels, including ones to exclude."""
    rng = np.random.default_rng(seed)
    names = {"Sadness": "sadness", "Anger": "anger", "Fear": "fear", "Happiness": "joy", "Affection": "affection"}
    out = []
    for i in range(n):
        if rng.random() < 0.1:
            out.append({"id": f"t{i:04d}", "text": " ".join(rng.choice(FILLER, size=8)), "label": "surprise"})
            continue
        label = EMOTION_LABELS[int(rng.choice(5, p=LABEL_WEIGHTS))]
        out.append({"id": f"t{i:04d}", "text": _sentence(rng, label, noise=0.4), "label": names[label]})
    return out


def write_fixture(out_dir, n_posts=5000, seed=0):
    """Write raw corpus, lexicon, OOD sets and an experiment config into
    ``out_dir``; returns the config path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "raw.jsonl", "w", encoding="utf-8") as f:
        for r in make_raw_corpus(n_posts, seed=seed):
            f.write(json.dumps({k: v for k, v in r.items() if not k.startswith("_")}) + "\n")
    write_lexicon(out / "lexicon.tsv")
    for name, rows in (("enisear", make_enisear(seed=seed)), ("tweets", make_ood_tweets(seed=seed + 1))):
        with open(out / f"{name}.jsonl", "w", encoding="utf-8") as f:
            for r in rows:
                f.write(json.dumps(r) + "\n")
    cfg = out / "experiment.toml"
    cfg.write_text(FIXTURE_CONFIG, encoding="utf-8")
    return cfg


# Desk-scale settings for the bundled fixture; see README for the mapping to
# the full-size recipe.
FIXTURE_CONFIG = """\
name = "fixture"
seed = 0

[paths]
corpus = "raw.jsonl"
lexicon = "lexicon.tsv"
run_dir = "run"

[paths.ood]
enisear = { file = "enisear.jsonl", prepare = "enisear" }
tweets = { file = "tweets.jsonl" }

[preprocess]
meme_k = 10

[split]
random_test_frac = 0.1
user_test_frac = 0.1
temporal_test_frac = 0.1
dev_frac = 0.1

[masking]
p_emotion = 0.5
p_other = 0.15

[encoder]
layers = 2
hidden = 64
heads = 4
ffn = 128
vocab_size = 2000

[train]
base_pretrain_steps = 150

[train.pretrain]
lr = 1e-3
batch_size = 64
steps = 150

[train.probe]
lr = 5e-3
steps = 300

[train.finetune]
lr = 3e-4
epochs = 5
effective_batch = 64
micro_batch = 64

[train.contrastive]
weight = 0.9
temperature = 0.3

[evaluation]
bootstrap = 1000
"""
