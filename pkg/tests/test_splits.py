import json
from collections import Counter

import numpy as np
import pytest

from leia.corpus import CleanPost
from leia.labels import EMOTION_LABELS, EmotionLabel
from leia.splits import SPLIT_NAMES, SplitError, SplitSpec, build_splits, check_split_invariants, write_splits


def make_posts(n, n_users, seed=0, block_users=False, distinct_times=True):
    rng = np.random.default_rng(seed)
    stamps = rng.permutation(10 * n)[:n] if distinct_times else rng.integers(0, n // 10, size=n)
    posts = []
    for i in range(n):
        user = i // (n // n_users) if block_users else int(rng.integers(n_users))
        ts = i if block_users else int(stamps[i])
        lab = EMOTION_LABELS[int(rng.integers(5))]
        posts.append(CleanPost(f"p{i:05d}", f"u{user:03d}", ts, EmotionLabel(lab), "some words here"))
    return posts


def brute_disjoint(sets):
    names = list(sets)
    for a in names:
        for b in names:
            if a != b:
                for x in sets[a]:
                    assert x not in sets[b]


def test_hundred_posts_ten_users():
    # user u owns timestamps 10u..10u+9, so the ten latest posts are user 9's
    posts = make_posts(100, 10, block_users=True)
    res = build_splits(posts, SplitSpec(seed=7))
    by_id = {p.id: p for p in posts}
    sets = res.sets()
    brute_disjoint(sets)
    assert len(res.random_test) == 10
    assert len({by_id[i].user_id for i in res.user_test}) == 1
    u = by_id[next(iter(res.user_test))].user_id
    assert res.user_test == {p.id for p in posts if p.user_id == u}
    latest = sorted(posts, key=lambda p: (p.timestamp, p.id))[-10:]
    assert res.temporal_test == {p.id for p in latest}
    assert len(res.dev) == 7  # 10% of the 70 left
    assert sum(len(s) for s in sets.values()) == 100
    check_split_invariants(posts, res)


def test_user_sample_keeps_temporal_posts_in_place():
    posts = make_posts(2000, 50, seed=3)
    res = build_splits(posts, SplitSpec(seed=1))
    by_id = {p.id: p for p in posts}
    users = {by_id[i].user_id for i in res.user_test}
    assert len(users) == 5
    for p in posts:
        if p.user_id in users:
            assert p.id in res.user_test or p.id in res.temporal_test


def test_single_user_is_an_error():
    posts = [CleanPost(str(i), "solo", i, EmotionLabel.SADNESS, "a b c") for i in range(50)]
    with pytest.raises(SplitError):
        build_splits(posts, SplitSpec())


def test_empty_input():
    with pytest.raises(SplitError):
        build_splits([], SplitSpec())


@pytest.mark.parametrize("kw", [dict(dev_frac=0.0), dict(user_test_frac=1.0),
                                dict(random_test_frac=0.5, temporal_test_frac=0.3, dev_frac=0.2)])
def test_bad_spec(kw):
    with pytest.raises(ValueError):
        SplitSpec(**kw)


def test_ten_thousand_invariants():
    posts = make_posts(10000, 500, seed=11)
    a = build_splits(posts, SplitSpec(seed=5))
    check_split_invariants(posts, a)
    by_id = {p.id: p for p in posts}
    assert max(by_id[i].timestamp for i in a.train) < min(by_id[i].timestamp for i in a.temporal_test)
    b = build_splits(list(posts), SplitSpec(seed=5))
    assert a.sets() == b.sets() and a.manifest == b.manifest
    c = build_splits(posts, SplitSpec(seed=6))
    assert c.random_test != a.random_test


def test_timestamp_ties_cut_by_id():
    posts = make_posts(3000, 100, seed=8, distinct_times=False)
    res = build_splits(posts, SplitSpec(seed=0))
    by_id = {p.id: p for p in posts}
    assert len(res.temporal_test) == 300
    last_train = max((by_id[i].timestamp, i) for i in res.train)
    assert last_train < min((by_id[i].timestamp, i) for i in res.temporal_test)
    check_split_invariants(posts, res)


def test_label_proportions_close_to_corpus():
    posts = make_posts(10000, 500, seed=2)
    res = build_splits(posts, SplitSpec(seed=0))
    overall = Counter(p.label.value for p in posts)
    for name in SPLIT_NAMES:
        counts = res.manifest["label_counts"][name]
        size = res.manifest["sizes"][name]
        for lab in EMOTION_LABELS:
            assert abs(counts[lab] / size - overall[lab] / len(posts)) < 0.05, (name, lab)


def test_manifest_counts_sum_to_sizes():
    posts = make_posts(1000, 40, seed=4)
    res = build_splits(posts, SplitSpec(seed=0))
    for name in SPLIT_NAMES:
        assert sum(res.manifest["label_counts"][name].values()) == res.manifest["sizes"][name]
    assert sum(res.manifest["sizes"].values()) == 1000


def test_write_splits(tmp_path):
    posts = make_posts(500, 20, seed=9)
    res = build_splits(posts, SplitSpec(seed=0))
    write_splits(posts, res, tmp_path)
    for name in SPLIT_NAMES:
        ids = {json.loads(l)["id"] for l in open(tmp_path / f"{name}.jsonl")}
        assert ids == getattr(res, name)
    assert json.load(open(tmp_path / "manifest.json"))["sizes"] == res.manifest["sizes"]


def test_input_order_does_not_matter():
    posts = make_posts(2000, 100, seed=4)
    a = build_splits(posts, SplitSpec(seed=2))
    shuffled = [posts[i] for i in np.random.default_rng(0).permutation(len(posts))]
    assert build_splits(shuffled, SplitSpec(seed=2)).sets() == a.sets()
