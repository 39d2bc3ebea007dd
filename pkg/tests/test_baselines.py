import math

import numpy as np
import pytest

from leia.baselines import (DictionaryModel, NbsvmModel, binarize, build_vocab, dict_predict,
                            dictionary_presence, fit_base_frequencies, nb_log_count_ratio, nbsvm_predict,
                            nbsvm_train, quotient_rule)
from leia.evaluation import macro_f1
from leia.labels import EMOTION_LABELS
from leia.lexicon import CategoryMap, EmotionLexicon, category_score
from leia.synthetic import FILLER, MARKERS, _sentence


@pytest.fixture
def lex():
    return EmotionLexicon({"angry": {"anger"}, "mad": {"anger"}, "scared": {"fear"}, "sad": {"sadness"},
                           "happy": {"positive", "joy"}})


# --- dictionary ---------------------------------------------------------------

def test_base_is_mean(lex):
    # anger scores 0.1 and 0.3
    dev = ["angry " + "x " * 9, "angry mad angry " + "x " * 7]
    model = fit_base_frequencies(dev, lex)
    assert model.base["anger"] == pytest.approx(0.2, abs=1e-12)


def test_base_recomputation_oracle(lex):
    rng = np.random.default_rng(0)
    pool = ["angry", "mad", "sad", "happy", "scared", "the", "a", "walk", "home"]
    dev = [" ".join(rng.choice(pool, size=int(rng.integers(1, 15)))) for _ in range(100)]
    model = fit_base_frequencies(dev, lex)
    for cat, members in (("anger", {"angry", "mad"}), ("fear", {"scared"}), ("sadness", {"sad"}),
                         ("positive", {"happy"})):
        total = 0.0
        for t in dev:
            toks = t.split()
            total += sum(w in members for w in toks) / len(toks)
        assert model.base[cat] == pytest.approx(total / 100, abs=1e-12)


def test_empty_dev_rejected(lex):
    with pytest.raises(ValueError):
        fit_base_frequencies([], lex)


@pytest.mark.parametrize("score, base, present", [
    (0.25, 0.2, True),
    (0.0, 0.2, False),
    (0.0, 0.0, False),
    (0.2, 0.2, False),
    (0.01, 0.0, True),
    (0.5, 1.0, False),
])
def test_quotient_decision_table(score, base, present):
    assert quotient_rule(score, base) is present


def test_zero_base_uses_score(lex):
    model = fit_base_frequencies(["nothing here at all"], lex)
    assert model.base["fear"] == 0.0
    assert dict_predict("so scared", "fear", model)
    assert not dict_predict("so calm", "fear", model)


def test_quotient_scale_free():
    rng = np.random.default_rng(1)
    for _ in range(200):
        scores = rng.random(10) * rng.integers(0, 2, size=10)
        test = float(rng.random())
        base = float(scores.mean())
        c = float(rng.uniform(0.1, 10))
        assert quotient_rule(test, base) == quotient_rule(test * c, float((scores * c).mean()))


def test_dictionary_has_no_affection(lex):
    with pytest.raises(ValueError):
        DictionaryModel(CategoryMap({"joy": "Affection"}), {"joy": 0.1}, lex)
    model = fit_base_frequencies(["a b c"], lex)
    assert model.labels == ("Sadness", "Anger", "Fear", "Happiness")
    presence = dictionary_presence(["so angry", "so happy"], model)
    assert set(presence) == set(model.labels)
    assert presence["Anger"] == [True, False] and presence["Happiness"] == [False, True]


def test_dictionary_roundtrip(tmp_path, lex):
    model = fit_base_frequencies(["angry a b", "x y z"], lex)
    model.save(tmp_path / "d.json")
    back = DictionaryModel.load(tmp_path / "d.json", lex)
    assert back.base == model.base and back.category_map == model.category_map


# --- NBSVM ----------------------------------------------------------------------

def test_log_count_ratio_hand_case():
    r = nb_log_count_ratio([1, 0], [0, 1], alpha=1.0)
    assert abs(r[0] - math.log(2)) < 1e-9 and abs(r[1] + math.log(2)) < 1e-9


def test_log_count_ratio_symmetry_and_limit():
    counts = np.array([3, 0, 7, 1])
    assert np.all(nb_log_count_ratio(counts, counts) == 0)
    assert np.all(np.abs(nb_log_count_ratio([1, 0, 2], [0, 3, 0], alpha=1e6)) < 1e-5)
    with pytest.raises(ValueError):
        nb_log_count_ratio([1], [1], alpha=0)


def separable(n_per=30, seed=0):
    rng = np.random.default_rng(seed)
    texts, labels = [], []
    for lab in EMOTION_LABELS:
        for _ in range(n_per):
            words = list(rng.choice(MARKERS[lab], size=2)) + list(rng.choice(FILLER, size=5))
            rng.shuffle(words)
            texts.append(" ".join(words))
            labels.append(lab)
    return texts, labels


def test_separable_corpus_perfect():
    texts, labels = separable()
    model = nbsvm_train(texts, labels)
    _, macro = macro_f1(labels, model.predict(texts), EMOTION_LABELS)
    assert macro == 100.0
    two = [t for t, l in zip(texts, labels) if l in ("Anger", "Fear")]
    two_l = [l for l in labels if l in ("Anger", "Fear")]
    m2 = nbsvm_train(two, two_l)
    assert m2.labels == ("Anger", "Fear")
    assert m2.predict(two) == two_l


def test_marker_only_text_and_order_invariance():
    texts, labels = separable()
    model = nbsvm_train(texts, labels)
    for lab in EMOTION_LABELS:
        words = MARKERS[lab][:4]
        assert nbsvm_predict(model, " ".join(words)) == lab
        assert nbsvm_predict(model, " ".join(reversed(words))) == lab


def test_empty_text_goes_to_sadness():
    texts, labels = separable()
    model = nbsvm_train(texts, labels)
    assert model.predict(["", "zzzz qqqq"]) == ["Sadness", "Sadness"]


def test_beta_endpoint_finite():
    texts, labels = separable()
    model = nbsvm_train(texts, labels, beta=1.0)
    assert np.isfinite(model.decision_scores(texts)).all()
    # w' is the constant mean |w|
    for row in model.w:
        assert np.allclose(row, row[0])


def test_duplicate_tokens_do_not_matter():
    texts, labels = separable()
    doubled = [t + " " + t for t in texts]
    a, b = nbsvm_train(texts, labels), nbsvm_train(doubled, labels)
    probe = ["lonely sad today", "furious at work", "happy fun day"]
    assert np.allclose(a.decision_scores(probe), b.decision_scores(probe))


def test_vocab_cutoff():
    top = [f"w{i:05d}" for i in range(64000)]
    docs = [top, top, ["zzlast"] + top[:10]]
    vocab = build_vocab(docs, 64000)
    assert len(vocab) == 64000 and "zzlast" not in vocab
    # ties broken alphabetically: 64,001 words of equal count drop the last one
    equal = [[f"v{i:05d}" for i in range(64001)]]
    vocab = build_vocab(equal, 64000)
    assert vocab[-1] == "v63999" and "v64000" not in vocab


def test_vocab_cutoff_in_trained_model():
    rng = np.random.default_rng(0)
    common = [f"c{i}" for i in range(30)]
    texts = [" ".join(list(rng.choice(common, 5)) + [m]) for m in ("lonely", "angry") for _ in range(10)]
    labels = ["Sadness"] * 10 + ["Anger"] * 10
    texts.append("rareword lonely")
    labels.append("Sadness")
    model = nbsvm_train(texts, labels, vocab_size=31)
    assert len(model.vocab) == 31 and "rareword" not in model.vocab
    X = binarize([["rareword"]], model.vocab)
    assert X.nnz == 0


def test_training_errors():
    with pytest.raises(ValueError):
        nbsvm_train(["a b", "c d"], ["Sadness", "Sadness"])
    with pytest.raises(ValueError):
        nbsvm_train(["a b", "c d", "e f"], ["Sadness", "Sadness", "Anger"])


def test_nbsvm_roundtrip(tmp_path):
    texts, labels = separable(10)
    model = nbsvm_train(texts, labels)
    model.save(tmp_path / "m")
    back = NbsvmModel.load(tmp_path / "m")
    assert back.vocab == model.vocab and back.labels == model.labels
    assert np.array_equal(back.decision_scores(texts), model.decision_scores(texts))


def test_noisy_corpus_reasonable():
    rng = np.random.default_rng(3)
    labels = [EMOTION_LABELS[i] for i in rng.integers(5, size=600)]
    texts = [_sentence(rng, lab, 0.3) for lab in labels]
    model = nbsvm_train(texts[:500], labels[:500])
    _, macro = macro_f1(labels[500:], model.predict(texts[500:]), EMOTION_LABELS)
    assert macro > 60
