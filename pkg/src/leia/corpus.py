"""Raw post cleaning: normalization, language vote, tag mapping, length
filter, duplicate and meme removal."""

import html
import json
import logging
import re
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from leia.labels import EmotionLabel

logger = logging.getLogger(__name__)

# Vent tag -> label, row by row
TAG_LABELS = {
    EmotionLabel.SADNESS: ("Lonely", "Sad", "Miserable"),
    EmotionLabel.ANGER: ("Angry", "Annoyed", "Frustrated", "Furious"),
    EmotionLabel.FEAR: ("Anxious", "Stressed", "Afraid", "Nervous", "Worried"),
    EmotionLabel.AFFECTION: (
        "Affectionate", "Loving", "Caring", "Adoring",
        "Cuddly", "Supportive", "Passionate", "Infatuated",
    ),
    EmotionLabel.HAPPINESS: ("Happy", "Excited"),
}

DEFAULT_PLACEHOLDER_PATTERNS = (
    r"\[LINK\]",
    r"\[USER\]",
    r"https?://\S+",
    r"@\w+",
)

_TAG_RE = re.compile(r"<!--.*?-->|</?[A-Za-z][^<>]*>", re.DOTALL)
_CONTROL_WS_RE = re.compile(r"[\t\n\r]")
_SPACES_RE = re.compile(r" {2,}")


@dataclass(frozen=True)
class RawPost:
    id: str
    user_id: str
    timestamp: int
    tag: str
    text: str

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in ("id", "user_id", "timestamp", "tag", "text") if k not in d]
        if missing:
            raise ValueError(f"missing keys {missing}")
        ts = d["timestamp"]
        if isinstance(ts, bool) or not isinstance(ts, (int, float)) or ts < 0 or int(ts) != ts:
            raise ValueError(f"bad timestamp {ts!r}")
        if not isinstance(d["text"], str) or not isinstance(d["tag"], str):
            raise ValueError("text and tag must be strings")
        return cls(str(d["id"]), str(d["user_id"]), int(ts), d["tag"], d["text"])


@dataclass(frozen=True)
class CleanPost:
    id: str
    user_id: str
    timestamp: int
    label: EmotionLabel
    text: str

    def to_dict(self):
        return {
            "id": self.id,
            "user_id": self.user_id,
            "timestamp": self.timestamp,
            "label": self.label.value,
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(str(d["id"]), str(d["user_id"]), int(d["timestamp"]),
                   EmotionLabel.parse(d["label"]), d["text"])


class TagMapping:
    """Case-insensitive tag -> EmotionLabel lookup."""

    def __init__(self, mapping=None):
        if mapping is None:
            mapping = {tag: label for label, tags in TAG_LABELS.items() for tag in tags}
        self._map = {}
        for tag, label in mapping.items():
            key = tag.strip().lower()
            label = EmotionLabel.parse(label)
            if key in self._map and self._map[key] != label:
                raise ValueError(f"tag {tag!r} maps to both {self._map[key]} and {label}")
            self._map[key] = label

    def get(self, tag):
        return self._map.get(tag.strip().lower())

    def __len__(self):
        return len(self._map)

    def __contains__(self, tag):
        return tag.strip().lower() in self._map

    def items(self):
        return self._map.items()

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls(json.load(f))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump({k: v.value for k, v in sorted(self._map.items())}, f, indent=2)


class LanguageDetectorSet:
    """Three named text -> is-English voters."""

    def __init__(self, detectors):
        detectors = list(detectors)
        if len(detectors) != 3:
            raise ValueError(f"need exactly 3 language detectors, got {len(detectors)}")
        self.detectors = [(str(name), fn) for name, fn in detectors]

    @property
    def names(self):
        return [name for name, _ in self.detectors]

    def votes(self, text):
        out = []
        for name, fn in self.detectors:
            try:
                out.append(bool(fn(text)))
            except Exception:
                logger.warning("language detector %s failed; counting a false vote", name)
                out.append(False)
        return out


def normalize_text(text: str) -> str:
    """Strip HTML, decode entities and collapse whitespace.

    Tag stripping and entity decoding are repeated until the text stops
    changing so that the function is idempotent on nested escapes such as
    ``&amp;lt;b&amp;gt;``.
    """
    # every changing pass shortens the text, so this terminates
    while True:
        stripped = html.unescape(_TAG_RE.sub(" ", text))
        if stripped == text:
            break
        text = stripped
    text = _CONTROL_WS_RE.sub(" ", text)
    text = _SPACES_RE.sub(" ", text)
    return text.strip()


def is_english(text: str, detectors: LanguageDetectorSet) -> bool:
    return sum(detectors.votes(text)) >= 2


def map_tag(tag: str, mapping: TagMapping) -> Optional[EmotionLabel]:
    return mapping.get(tag)


def _compile_placeholders(patterns):
    return [re.compile(p) for p in patterns]


_DEFAULT_PLACEHOLDERS = _compile_placeholders(DEFAULT_PLACEHOLDER_PATTERNS)


def content_word_count(text, placeholder_patterns=None):
    pats = _DEFAULT_PLACEHOLDERS if placeholder_patterns is None else _compile_placeholders(placeholder_patterns)
    return sum(1 for tok in text.split() if not any(p.fullmatch(tok) for p in pats))


def passes_length_filter(text: str, min_words: int = 3, placeholder_patterns=None) -> bool:
    return content_word_count(text, placeholder_patterns) >= min_words


def flag_duplicates_and_memes(posts: Iterable[RawPost], meme_k: int = 10):
    """Yield ``(post, keep)`` in input order.

    Identical texts from ``meme_k`` or more distinct users are memes and all
    copies are dropped; otherwise only the earliest copy (timestamp, then id)
    is kept.
    """
    posts = list(posts)
    for p, st in zip(posts, duplicate_status(posts, meme_k)):
        yield p, st == "keep"


def duplicate_status(posts, meme_k=10):
    """Like flag_duplicates_and_memes, but says why a post was dropped."""
    posts = list(posts)
    groups = defaultdict(list)
    for i, p in enumerate(posts):
        groups[p.text].append(i)
    status = ["duplicate"] * len(posts)
    for idxs in groups.values():
        if len({posts[i].user_id for i in idxs}) >= meme_k:
            for i in idxs:
                status[i] = "meme"
            continue
        first = min(idxs, key=lambda i: (posts[i].timestamp, posts[i].id))
        status[first] = "keep"
    return status


@dataclass
class PipelineConfig:
    meme_k: int = 10
    min_words: int = 3
    placeholder_patterns: tuple = DEFAULT_PLACEHOLDER_PATTERNS


@dataclass
class PipelineStats:
    total: int = 0
    malformed: int = 0
    language_dropped: int = 0
    tag_dropped: int = 0
    length_dropped: int = 0
    duplicate_dropped: int = 0
    meme_dropped: int = 0
    kept: int = 0
    detector_names: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def run_pipeline(raw, mapping: TagMapping, detectors: LanguageDetectorSet, config=None):
    """Clean a stream of raw posts.

    ``raw`` may hold RawPost objects or plain dicts (JSONL records); records
    that cannot be parsed are counted as malformed and skipped. Returns the
    list of CleanPost in input order and the per-stage drop counts.
    """
    config = config or PipelineConfig()
    stats = PipelineStats(detector_names=detectors.names)
    survivors = []
    for rec in raw:
        stats.total += 1
        try:
            post = rec if isinstance(rec, RawPost) else RawPost.from_dict(rec)
        except (ValueError, TypeError, AttributeError) as e:
            logger.debug("malformed record skipped: %s", e)
            stats.malformed += 1
            continue
        text = normalize_text(post.text)
        if not is_english(text, detectors):
            stats.language_dropped += 1
            continue
        label = map_tag(post.tag, mapping)
        if label is None:
            stats.tag_dropped += 1
            continue
        if not passes_length_filter(text, config.min_words, config.placeholder_patterns):
            stats.length_dropped += 1
            continue
        survivors.append((RawPost(post.id, post.user_id, post.timestamp, post.tag, text), label))

    status = duplicate_status([p for p, _ in survivors], config.meme_k)
    out = []
    for (post, label), st in zip(survivors, status):
        if st == "keep":
            out.append(CleanPost(post.id, post.user_id, post.timestamp, label, post.text))
        elif st == "meme":
            stats.meme_dropped += 1
        else:
            stats.duplicate_dropped += 1
    stats.kept = len(out)
    return out, stats


def validate_clean_post(post: CleanPost, placeholder_patterns=None):
    """Raise ValueError if ``post`` breaks a CleanPost invariant."""
    if re.search(r"[\t\n\r]", post.text):
        raise ValueError(f"{post.id}: control whitespace in text")
    if "  " in post.text:
        raise ValueError(f"{post.id}: repeated spaces in text")
    if content_word_count(post.text, placeholder_patterns) < 3:
        raise ValueError(f"{post.id}: fewer than 3 content words")
    if not isinstance(post.label, EmotionLabel):
        raise ValueError(f"{post.id}: label is not an EmotionLabel")
    if post.timestamp < 0:
        raise ValueError(f"{post.id}: negative timestamp")


# --- default detectors -------------------------------------------------------
# Stand-ins for three off-the-shelf identifiers; each looks at a different
# surface signal so that they disagree on borderline text.

_EN_FUNCTION_WORDS = frozenset(
    "a an the and or but if of to in on at for with from by about as is am are was were be been "
    "i me my you your he she it we they them this that these those not no so just do did have "
    "has had will would can could what when why how all im its dont really feel like".split()
)


def _letters(text):
    return [c for c in text if c.isalpha()]


def ascii_letter_detector(text, threshold=0.9):
    letters = _letters(text)
    if not letters:
        return False
    return sum(c.isascii() for c in letters) / len(letters) >= threshold


def function_word_detector(text, threshold=0.1):
    toks = [t.strip(".,!?;:\"'()").lower() for t in text.split()]
    toks = [t for t in toks if t]
    if not toks:
        return False
    return sum(t in _EN_FUNCTION_WORDS for t in toks) / len(toks) >= threshold


def vowel_ratio_detector(text, low=0.25, high=0.55):
    letters = [c.lower() for c in _letters(text) if c.isascii()]
    if len(letters) < 3:
        return False
    r = sum(c in "aeiouy" for c in letters) / len(letters)
    return low <= r <= high


def default_detectors():
    return LanguageDetectorSet([
        ("ascii_letters", ascii_letter_detector),
        ("function_words", function_word_detector),
        ("vowel_ratio", vowel_ratio_detector),
    ])


# --- JSONL io ---------------------------------------------------------------

def read_jsonl(path):
    """Yield parsed records; undecodable lines yield None (counted as malformed)."""
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                yield None


def write_jsonl(path, records):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            if hasattr(r, "to_dict"):
                r = r.to_dict()
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def load_clean_posts(path):
    return [CleanPost.from_dict(d) for d in read_jsonl(path) if d is not None]
