"""
The pieces, one at a time
=========================

Emotion-word masking, the contrastive fine-tuning loss, weight averaging
and word attributions, on toy inputs.
"""

import numpy as np
import torch

from leia.attribution import explain
from leia.checkpoint import EncoderConfig, average_weights
from leia.emlm import MaskingConfig, make_mlm_example, mark_emotion_tokens, masking_stats
from leia.labels import EMOTION_LABELS
from leia.lexicon import EmotionLexicon, emotion_word_set
from leia.losses import joint_loss, supcon_loss
from leia.synthetic import _sentence
from leia.tokenizer import WordTokenizer
from leia.trainer import Predictor, TrainConfig, fine_tune, linear_probe, pretrain_mlm

###############################################################################
# Masking: lexicon words are picked far more often than the rest
lex = EmotionLexicon({"angry": {"anger"}, "scared": {"fear"}, "happy": {"joy"}})
tok = WordTokenizer.fit(["i am so angry and scared today", "happy days"], vocab_size=50)
sentence = "i am so angry and scared today"
ids = np.array(tok.encode(sentence))
emo = mark_emotion_tokens(sentence, tok, emotion_word_set(lex))
print([tok.vocab[i] for i, e in zip(ids, emo) if e])

rng = np.random.default_rng(0)
exs = [make_mlm_example(ids, emo, MaskingConfig(), rng, mask_id=tok.mask_id,
                         vocab_size=len(tok.vocab), special_ids=tok.special_ids)
       for _ in range(5000)]
print(masking_stats(exs, tok.special_ids))

###############################################################################
# SupCon only counts anchors with a same-label partner
z = torch.nn.functional.normalize(torch.randn(6, 8, dtype=torch.float64), dim=1)
print("all different:", supcon_loss(z, [0, 1, 2, 3, 4, 5], 0.3).item())
print("pairs:", supcon_loss(z, [0, 0, 1, 1, 2, 2], 0.3).item())
logits = torch.randn(6, 5, dtype=torch.float64)
print("joint:", joint_loss(logits, z, torch.tensor([0, 0, 1, 1, 2, 2])).item())

###############################################################################
# Two branches from one start, then the soup
labels = [EMOTION_LABELS[int(i)] for i in rng.integers(5, size=400)]
texts = [_sentence(rng, lab, 0.1) for lab in labels]
enc = EncoderConfig(hidden=32, heads=4, ffn=64, vocab_size=300)
cfg = TrainConfig.from_dict({"pretrain": {"steps": 50, "batch_size": 32}, "probe": {"steps": 200},
                             "finetune": {"lr": 1e-3, "epochs": 8, "effective_batch": 32, "micro_batch": 32}})
base = pretrain_mlm(texts, enc, cfg)
branches = []
for seed in (0, 1):
    cfg.seed = seed
    branches.append(fine_tune(linear_probe(base, texts, labels, cfg), texts, labels, cfg))
soup = average_weights(*branches)
print("soup parents:", soup.provenance["parents"])

###############################################################################
# Which words push the soup towards its prediction?
predictor = Predictor(soup)
preds = predictor(texts).labels
i = next(k for k in range(len(texts)) if preds[k] == labels[k])
exp = explain(predictor.proba, texts[i], labels[i], n_samples=300)
print(texts[i], "->", labels[i])
for word, w in exp.top(5):
    print(f"  {word:>12s} {w:+.3f}")
