"""Disjoint train / dev / user / temporal / random test splits."""

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from leia.labels import EMOTION_LABELS

SPLIT_NAMES = ("train", "dev", "user_test", "temporal_test", "random_test")


@dataclass(frozen=True)
class SplitSpec:
    random_test_frac: float = 0.10
    user_test_frac: float = 0.10
    temporal_test_frac: float = 0.10
    dev_frac: float = 0.10
    seed: int = 0

    def __post_init__(self):
        for name in ("random_test_frac", "user_test_frac", "temporal_test_frac", "dev_frac"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name}={v} outside (0, 1)")
        if self.random_test_frac + self.temporal_test_frac + self.dev_frac >= 1.0:
            raise ValueError("post-level fractions must sum to less than 1")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls(**json.load(f))


@dataclass
class SplitResult:
    train: set
    dev: set
    user_test: set
    temporal_test: set
    random_test: set
    manifest: dict = field(default_factory=dict)

    def sets(self):
        return {name: getattr(self, name) for name in SPLIT_NAMES}


class SplitError(ValueError):
    pass


def build_splits(posts, spec: SplitSpec = None) -> SplitResult:
    """Carve the five splits in a fixed order.

    1. temporal_test: the latest ``temporal_test_frac`` of all posts by
       (timestamp, id).
    2. user_test: every non-temporal post of a seeded sample of about
       ``user_test_frac`` of all users; users without temporal posts are
       drawn first.
    3. random_test: ``random_test_frac`` of all posts, drawn uniformly from
       what is left.
    4. dev: ``dev_frac`` of what is left after that.
    5. train: the rest.

    Posts are put in id order first, so the result does not depend on the
    input order.
    """
    spec = spec or SplitSpec()
    posts = sorted(posts, key=lambda p: p.id)
    if not posts:
        raise SplitError("no posts to split")
    n = len(posts)
    rng = np.random.default_rng(spec.seed)

    by_time = sorted(range(n), key=lambda i: (posts[i].timestamp, posts[i].id))
    n_temporal = int(round(spec.temporal_test_frac * n))
    temporal = set(by_time[n - n_temporal:]) if n_temporal else set()

    users = sorted({p.user_id for p in posts})
    n_users = int(round(spec.user_test_frac * len(users)))
    temporal_users = {posts[i].user_id for i in temporal}
    remaining_users = sorted({posts[i].user_id for i in range(n) if i not in temporal})
    preferred = [u for u in remaining_users if u not in temporal_users]
    fallback = [u for u in remaining_users if u in temporal_users]
    if n_users == 0 or n_users >= len(remaining_users):
        raise SplitError(
            f"user test would take {n_users} of {len(remaining_users)} users with non-temporal posts; "
            "need at least one user inside and one outside")
    picked = list(rng.permutation(preferred)[: n_users])
    if len(picked) < n_users:
        picked += list(rng.permutation(fallback)[: n_users - len(picked)])
    picked = set(picked)
    user_test = {i for i in range(n) if i not in temporal and posts[i].user_id in picked}

    rest = np.array(sorted(set(range(n)) - temporal - user_test), dtype=np.int64)
    n_random = int(round(spec.random_test_frac * n))
    perm = rng.permutation(rest)
    random_test = set(perm[:n_random].tolist())
    rest = np.array(sorted(set(rest.tolist()) - random_test), dtype=np.int64)
    n_dev = int(round(spec.dev_frac * len(rest)))
    perm = rng.permutation(rest)
    dev = set(perm[:n_dev].tolist())
    train = set(rest.tolist()) - dev

    parts = {"train": train, "dev": dev, "user_test": user_test,
             "temporal_test": temporal, "random_test": random_test}
    empty = [k for k, v in parts.items() if not v]
    if empty:
        raise SplitError(f"empty split(s): {empty}")

    ids = {k: {posts[i].id for i in v} for k, v in parts.items()}
    manifest = {
        "spec": asdict(spec),
        "n_posts": n,
        "n_users": len(users),
        "user_test_users": len(picked),
        "sizes": {k: len(v) for k, v in parts.items()},
        "fractions": {k: len(v) / n for k, v in parts.items()},
        "label_counts": {k: _label_counts(posts, v) for k, v in parts.items()},
    }
    return SplitResult(**ids, manifest=manifest)


def _label_counts(posts, idx):
    c = Counter(posts[i].label.value if hasattr(posts[i].label, "value") else str(posts[i].label) for i in idx)
    return {lab: c.get(lab, 0) for lab in EMOTION_LABELS}


def check_split_invariants(posts, result: SplitResult):
    """Raise AssertionError if any split invariant is broken."""
    sets = result.sets()
    names = list(sets)
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            common = sets[names[a]] & sets[names[b]]
            assert not common, f"{names[a]} and {names[b]} share {len(common)} ids"
    by_id = {p.id: p for p in posts}
    assert set().union(*sets.values()) <= set(by_id), "split ids outside the corpus"
    train_users = {by_id[i].user_id for i in result.train}
    user_users = {by_id[i].user_id for i in result.user_test}
    assert not train_users & user_users, "a user-test user also appears in train"
    assert max(by_id[i].timestamp for i in result.train) < min(by_id[i].timestamp for i in result.temporal_test) or \
        _boundary_tie_ok(by_id, result), "train reaches past the temporal cut"
    for name, ids in sets.items():
        assert sum(result.manifest["label_counts"][name].values()) == len(ids)


def _boundary_tie_ok(by_id, result):
    # equal timestamps at the cut are ordered by id
    last_train = max((by_id[i].timestamp, i) for i in result.train)
    first_temporal = min((by_id[i].timestamp, i) for i in result.temporal_test)
    return last_train < first_temporal


def write_splits(posts, result: SplitResult, out_dir):
    """One JSONL per split plus ``manifest.json``; posts keep corpus order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, ids in result.sets().items():
        with open(out / f"{name}.jsonl", "w", encoding="utf-8") as f:
            for p in posts:
                if p.id in ids:
                    f.write(json.dumps(p.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(result.manifest, f, indent=2, sort_keys=True)
    return out
