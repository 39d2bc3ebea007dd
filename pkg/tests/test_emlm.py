import numpy as np
import pytest

from leia.emlm import IGNORE_INDEX, MaskingConfig, make_mlm_example, mark_emotion_tokens, masking_stats
from leia.tokenizer import SPECIAL_TOKENS, WordTokenizer

VOCAB = 50
SPECIALS = frozenset(range(5))


def example(ids, emo, cfg, seed=0):
    return make_mlm_example(ids, emo, cfg, np.random.default_rng(seed), mask_id=0, vocab_size=VOCAB,
                            special_ids=SPECIALS)


@pytest.fixture
def tok():
    return WordTokenizer.fit(["i am angry and heart-broken today", "so calm"], vocab_size=100)


def test_tokenizer_specials_and_roundtrip(tok, tmp_path):
    assert tok.vocab[:5] == list(SPECIAL_TOKENS)
    ids = tok.encode("i am angry")
    assert ids[0] == tok.bos_id and ids[-1] == tok.eos_id
    assert tok.decode(ids) == "i am angry"
    assert tok.encode("zebra")[1] == tok.unk_id
    assert tok.encode("a <mask> b")[2] == tok.mask_id
    assert len(tok.encode(" ".join(["so"] * 500), 128)) == 128
    tok.save(tmp_path / "t.json")
    assert WordTokenizer.load(tmp_path / "t.json").vocab == tok.vocab


def test_mark_single_hit(tok):
    flags = mark_emotion_tokens("i am angry", tok, {"angry"})
    # <s> i am angry </s>
    assert flags.tolist() == [False, False, False, True, False]


def test_mark_none(tok):
    assert not mark_emotion_tokens("i am angry", tok, set()).any()


def test_split_word_all_pieces_marked(tok):
    text = "so heart-broken today"
    ids, offsets = tok.encode_with_offsets(text)
    flags = mark_emotion_tokens(text, tok, {"heart-broken"})
    # oracle: pieces whose character span lies inside the word
    start = text.index("heart-broken")
    end = start + len("heart-broken")
    expected = [off is not None and start <= off[0] and off[1] <= end for off in offsets]
    assert flags.tolist() == expected
    assert sum(expected) == 3  # heart, -, broken


def test_mark_case_and_punctuation(tok):
    flags = mark_emotion_tokens("ANGRY!", tok, {"angry"})
    assert flags.tolist() == [False, True, False, False]


def test_forced_probabilities():
    ids = np.array([3, 10, 11, 12, 13, 4])
    emo = np.array([False, True, False, True, False, False])
    cfg = MaskingConfig(p_emotion=1.0, p_other=0.0, mask_frac=1.0, random_frac=0.0, keep_frac=0.0)
    ex = example(ids, emo, cfg)
    assert ex.input_ids.tolist() == [3, 0, 11, 0, 13, 4]
    assert ex.labels.tolist() == [IGNORE_INDEX, 10, IGNORE_INDEX, 12, IGNORE_INDEX, IGNORE_INDEX]


def test_zero_probabilities():
    ids = np.arange(3, 20)
    emo = ids % 2 == 0
    ex = example(ids, emo, MaskingConfig(p_emotion=0.0, p_other=0.0))
    assert ex.input_ids.tolist() == ids.tolist()
    assert (ex.labels == IGNORE_INDEX).all()


def test_only_specials_unchanged():
    ids = np.array([3, 1, 1, 4])
    ex = example(ids, np.ones(4, bool), MaskingConfig(p_emotion=1.0, p_other=1.0))
    assert ex.input_ids.tolist() == ids.tolist() and (ex.labels == IGNORE_INDEX).all()


def test_determinism():
    ids = np.arange(5, 45)
    emo = ids % 3 == 0
    a, b = example(ids, emo, MaskingConfig(), seed=4), example(ids, emo, MaskingConfig(), seed=4)
    assert a.input_ids.tobytes() == b.input_ids.tobytes() and a.labels.tobytes() == b.labels.tobytes()


@pytest.mark.parametrize("kw", [dict(p_emotion=1.5), dict(mask_frac=0.7)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        MaskingConfig(**kw)


def test_plain_config():
    cfg = MaskingConfig.plain()
    assert cfg.p_emotion == cfg.p_other == 0.15


def generate(n_seq=2000, length=60, seed=0, cfg=None):
    rng = np.random.default_rng(seed)
    cfg = cfg or MaskingConfig()
    out, originals = [], []
    for _ in range(n_seq):
        ids = np.concatenate([[3], rng.integers(5, VOCAB, size=length - 2), [4]])
        emo = rng.random(length) < 0.3
        emo[[0, -1]] = False
        out.append(make_mlm_example(ids, emo, cfg, rng, mask_id=0, vocab_size=VOCAB, special_ids=SPECIALS))
        originals.append(ids)
    return out, originals


def test_rates_and_invariants():
    exs, originals = generate()
    stats = masking_stats(exs, SPECIALS)
    assert stats["emotion_positions"] + stats["other_positions"] >= 100_000
    assert abs(stats["emotion_rate"] - 0.50) <= 0.02
    assert abs(stats["other_rate"] - 0.15) <= 0.02
    n_sel = n_mask = n_rand = n_keep = 0
    for ex, orig in zip(exs, originals):
        sel = ex.labels != IGNORE_INDEX
        assert (ex.input_ids[~sel] == orig[~sel]).all()
        assert (ex.labels[sel] == orig[sel]).all()
        assert not sel[[0, -1]].any()
        n_sel += sel.sum()
        n_mask += (sel & (ex.input_ids == 0)).sum()
        changed = sel & (ex.input_ids != 0) & (ex.input_ids != orig)
        n_rand += changed.sum()
        n_keep += (sel & (ex.input_ids == orig)).sum()
        assert not np.isin(ex.input_ids[changed], list(SPECIALS)).any()
    assert abs(n_mask / n_sel - 0.8) < 0.02
    # random draws can land on the original id (1/45 of the time)
    assert abs((n_rand + n_keep) / n_sel - 0.2) < 0.02
