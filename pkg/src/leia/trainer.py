"""Three-stage training: (e)MLM pre-training, linear probing, fine-tuning
with the joint contrastive objective; plus inference."""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from leia.checkpoint import EncoderConfig, ModelCheckpoint, config_hash
from leia.emlm import MaskingConfig, make_mlm_example, mark_emotion_tokens
from leia.labels import EMOTION_LABELS, label_index
from leia.losses import joint_loss
from leia.model import EmotionModel, build_model, init_head, to_numpy_state
from leia.tokenizer import WordTokenizer

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, stage, step, loss):
        super().__init__(f"{stage}: loss became {loss} at step {step}")
        self.stage, self.step = stage, step


@dataclass
class PretrainConfig:
    lr: float = 5e-5
    batch_size: int = 128
    steps: int = 5000
    weight_decay: float = 0.01
    log_every: int = 100


@dataclass
class ProbeConfig:
    lr: float = 5e-4
    steps: int = 1000
    batch_size: int = 256
    weight_decay: float = 0.01


@dataclass
class FinetuneConfig:
    lr: float = 1e-5
    weight_decay: float = 0.01
    label_smoothing: float = 0.1
    epochs: int = 5
    effective_batch: int = 256
    micro_batch: int = 256


@dataclass
class ContrastiveConfig:
    weight: float = 0.9
    temperature: float = 0.3


@dataclass
class TrainConfig:
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.contrastive.weight <= 1.0:
            raise ValueError("contrastive weight must lie in [0, 1]")
        if self.contrastive.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.finetune.label_smoothing < 1.0:
            raise ValueError("label smoothing must lie in [0, 1)")
        ft = self.finetune
        if ft.effective_batch % ft.micro_batch:
            raise ValueError("effective_batch must be a multiple of micro_batch")

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        parts = {
            "pretrain": PretrainConfig, "probe": ProbeConfig,
            "finetune": FinetuneConfig, "contrastive": ContrastiveConfig,
        }
        kw = {k: parts[k](**d.pop(k, {})) for k in parts}
        return cls(**kw, **d)

    def to_dict(self):
        return asdict(self)


def _label_ids(labels):
    return np.array([lab if isinstance(lab, (int, np.integer)) else label_index(lab) for lab in labels],
                    dtype=np.int64)


def pad_batch(seqs, pad_id):
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def encode_texts(tokenizer, texts, max_length=128):
    return [tokenizer.encode(t, max_length) for t in texts]


def _check(stage, step, loss):
    if not math.isfinite(loss):
        raise TrainingDiverged(stage, step, loss)


def _adamw(named_params, lr, weight_decay):
    decay, no_decay = [], []
    for name, p in named_params:
        if not p.requires_grad:
            continue
        (no_decay if p.ndim < 2 or "norm" in name else decay).append(p)
    return torch.optim.AdamW(
        [{"params": decay, "weight_decay": weight_decay}, {"params": no_decay, "weight_decay": 0.0}],
        lr=lr,
    )


def initial_checkpoint(encoder_cfg: EncoderConfig, tokenizer: WordTokenizer, seed=0):
    """Randomly initialized encoder + MLM head, seeded."""
    if len(tokenizer) > encoder_cfg.vocab_size:
        raise ValueError(f"tokenizer has {len(tokenizer)} types but vocab_size={encoder_cfg.vocab_size}")
    torch.manual_seed(seed)
    model = EmotionModel(encoder_cfg, with_mlm=True, pad_id=tokenizer.pad_id)
    return ModelCheckpoint(to_numpy_state(model), encoder_cfg, tokenizer,
                           {"stage": "init", "config_hash": config_hash({"seed": seed, **asdict(encoder_cfg)})})


def pretrain_mlm(texts, encoder_cfg: EncoderConfig = None, train_cfg: TrainConfig = None,
                 masking_cfg: MaskingConfig = None, emotion_words=frozenset(),
                 tokenizer=None, init: ModelCheckpoint = None, stage="pretrain"):
    """Masked-LM training on ``texts``; returns the checkpoint after
    ``train_cfg.pretrain.steps`` updates.

    With ``init`` given, training continues from that checkpoint (and its
    tokenizer); otherwise a tokenizer is fitted on ``texts`` and the model is
    initialized from ``train_cfg.seed``.
    """
    train_cfg = train_cfg or TrainConfig()
    masking_cfg = masking_cfg or MaskingConfig()
    pcfg = train_cfg.pretrain
    if init is not None:
        encoder_cfg = init.encoder_config
        tokenizer = init.tokenizer
        start = init
    else:
        encoder_cfg = encoder_cfg or EncoderConfig()
        if tokenizer is None:
            tokenizer = WordTokenizer.fit(texts, encoder_cfg.vocab_size)
        start = initial_checkpoint(encoder_cfg, tokenizer, train_cfg.seed)
    chash = config_hash({"pretrain": asdict(pcfg), "masking": asdict(masking_cfg), "seed": train_cfg.seed})
    if pcfg.steps == 0:
        return start.derive(dict(start.tensors), stage, chash)
    if not texts:
        raise ValueError("empty pre-training corpus")

    ids = [tokenizer.encode(t, encoder_cfg.max_length) for t in texts]
    emo = [mark_emotion_tokens(t, tokenizer, emotion_words, encoder_cfg.max_length) for t in texts]

    torch.manual_seed(train_cfg.seed)
    model = build_model(start, with_mlm=True, with_head=False)
    model.train()
    opt = _adamw(model.named_parameters(), pcfg.lr, pcfg.weight_decay)
    rng = np.random.default_rng([train_cfg.seed, masking_cfg.seed])
    ignore = masking_cfg.ignore_index
    history = []
    running = None
    for step in range(1, pcfg.steps + 1):
        idx = rng.integers(0, len(ids), size=pcfg.batch_size)
        exs = [make_mlm_example(ids[i], emo[i], masking_cfg, rng, mask_id=tokenizer.mask_id,
                                vocab_size=len(tokenizer), special_ids=tokenizer.special_ids) for i in idx]
        x = torch.from_numpy(pad_batch([e.input_ids for e in exs], tokenizer.pad_id))
        y = torch.from_numpy(pad_batch([e.labels for e in exs], ignore))
        if not bool((y != ignore).any()):
            continue
        logits = model.mlm_logits(x)
        loss = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), y.reshape(-1), ignore_index=ignore)
        _check(stage, step, loss.item())
        opt.zero_grad()
        loss.backward()
        opt.step()
        running = loss.item() if running is None else 0.9 * running + 0.1 * loss.item()
        if step % pcfg.log_every == 0 or step == 1 or step == pcfg.steps:
            history.append((step, loss.item(), running))
            logger.info("%s step %d loss %.4f (smoothed %.4f)", stage, step, loss.item(), running)
    out = start.derive(to_numpy_state(model), stage, chash)
    out.provenance["history"] = history
    return out


def mlm_accuracy(ckpt: ModelCheckpoint, texts, masking_cfg=None, emotion_words=frozenset(), seed=0):
    """Accuracy of predicting the selected tokens on ``texts``."""
    masking_cfg = masking_cfg or MaskingConfig()
    tok = ckpt.tokenizer
    model = build_model(ckpt, with_mlm=True, with_head=False).eval()
    rng = np.random.default_rng(seed)
    hit = total = 0
    with torch.no_grad():
        for t in texts:
            ids = tok.encode(t, ckpt.encoder_config.max_length)
            emo = mark_emotion_tokens(t, tok, emotion_words, ckpt.encoder_config.max_length)
            ex = make_mlm_example(ids, emo, masking_cfg, rng, mask_id=tok.mask_id,
                                  vocab_size=len(tok), special_ids=tok.special_ids)
            sel = ex.labels != masking_cfg.ignore_index
            if not sel.any():
                continue
            pred = model.mlm_logits(torch.from_numpy(ex.input_ids)[None])[0].argmax(-1).numpy()
            hit += int((pred[sel] == ex.labels[sel]).sum())
            total += int(sel.sum())
    return hit / total if total else float("nan")


def pooled_features(ckpt: ModelCheckpoint, texts, batch_size=256):
    """Frozen ``<s>`` representations in eval mode, as a float32 array."""
    model = build_model(ckpt, with_mlm=False, with_head=False).eval()
    ids = encode_texts(ckpt.tokenizer, texts, ckpt.encoder_config.max_length)
    out = []
    with torch.no_grad():
        for i in range(0, len(ids), batch_size):
            x = torch.from_numpy(pad_batch(ids[i: i + batch_size], ckpt.tokenizer.pad_id))
            out.append(model.pooled(x).numpy())
    return np.concatenate(out) if out else np.zeros((0, ckpt.encoder_config.hidden), np.float32)


def linear_probe(base: ModelCheckpoint, texts, labels, cfg: TrainConfig = None, features=None):
    """Train a fresh classifier head on frozen encoder features.

    Encoder tensors of the result are copied from ``base`` unchanged; any MLM
    head on ``base`` is dropped.
    """
    cfg = cfg or TrainConfig()
    pcfg = cfg.probe
    if len(texts) == 0 and features is None:
        raise ValueError("linear_probe needs labeled data")
    y = _label_ids(labels)
    if len(y) == 0:
        raise ValueError("linear_probe needs labeled data")
    hidden = base.encoder_config.hidden
    head = init_head(hidden, base.encoder_config.num_labels, cfg.seed)
    if pcfg.steps > 0:
        feats = pooled_features(base, texts) if features is None else np.asarray(features, np.float32)
        if len(feats) != len(y):
            raise ValueError("features and labels differ in length")
        lin = torch.nn.Linear(hidden, base.encoder_config.num_labels)
        with torch.no_grad():
            lin.weight.copy_(torch.from_numpy(head["head.weight"]))
            lin.bias.copy_(torch.from_numpy(head["head.bias"]))
        opt = _adamw([("weight", lin.weight), ("bias", lin.bias)], pcfg.lr, pcfg.weight_decay)
        X = torch.from_numpy(feats)
        Y = torch.from_numpy(y)
        rng = np.random.default_rng([cfg.seed, 1])
        bs = min(pcfg.batch_size, len(y))
        for step in range(1, pcfg.steps + 1):
            idx = torch.from_numpy(rng.choice(len(y), size=bs, replace=False))
            loss = F.cross_entropy(lin(X[idx]), Y[idx])
            _check("probe", step, loss.item())
            opt.zero_grad()
            loss.backward()
            opt.step()
        head = {"head.weight": lin.weight.detach().numpy().copy(), "head.bias": lin.bias.detach().numpy().copy()}
    tensors = {k: v for k, v in base.tensors.items() if k.startswith("encoder.")}
    tensors.update(head)
    return base.derive(tensors, "probe", config_hash({"probe": asdict(pcfg), "seed": cfg.seed}))


def fine_tune(probed: ModelCheckpoint, texts, labels, cfg: TrainConfig = None, dev=None):
    """Update all parameters with the joint SupCon + smoothed-CE objective.

    Constant learning rate, AdamW, gradient accumulation from ``micro_batch``
    up to ``effective_batch``. ``dev`` is an optional ``(texts, labels)``
    pair scored with macro-F1 after every epoch; scores land in the
    provenance ``history``.
    """
    from leia.evaluation import macro_f1

    cfg = cfg or TrainConfig()
    fcfg, ccfg = cfg.finetune, cfg.contrastive
    if not any(k.startswith("head.") for k in probed.tensors):
        raise ValueError("fine_tune expects a probed checkpoint with a trained head")
    chash = config_hash({"finetune": asdict(fcfg), "contrastive": asdict(ccfg), "seed": cfg.seed})
    if fcfg.epochs == 0:
        return probed.derive(dict(probed.tensors), "finetune", chash)
    y = _label_ids(labels)
    if len(y) < 2:
        raise ValueError("fine_tune needs at least 2 labeled examples")
    tok = probed.tokenizer
    ids = encode_texts(tok, texts, probed.encoder_config.max_length)

    torch.manual_seed(cfg.seed)
    model = build_model(probed, with_mlm=False, with_head=True)
    opt = _adamw(model.named_parameters(), fcfg.lr, fcfg.weight_decay)
    rng = np.random.default_rng([cfg.seed, 2])
    history = []
    step = 0
    for epoch in range(1, fcfg.epochs + 1):
        model.train()
        order = rng.permutation(len(y))
        batches = [order[i: i + fcfg.effective_batch] for i in range(0, len(order), fcfg.effective_batch)]
        losses = []
        for big in batches:
            if len(big) < 2:
                continue
            opt.zero_grad()
            parts = [big[i: i + fcfg.micro_batch] for i in range(0, len(big), fcfg.micro_batch)]
            for part in parts:
                if len(part) < 2:
                    continue
                x = torch.from_numpy(pad_batch([ids[i] for i in part], tok.pad_id))
                logits, pooled = model(x)
                loss = joint_loss(logits, pooled, torch.from_numpy(y[part]), ccfg.weight,
                                  ccfg.temperature, fcfg.label_smoothing)
                _check("finetune", step, loss.item())
                (loss * len(part) / len(big)).backward()
                losses.append(loss.item())
            opt.step()
            step += 1
        entry = {"epoch": epoch, "steps": step, "loss": float(np.mean(losses)) if losses else None}
        if dev is not None:
            ckpt_now = probed.derive(to_numpy_state(model), "finetune", chash)
            preds = predict(ckpt_now, dev[0]).labels
            golds = [EMOTION_LABELS[i] for i in _label_ids(dev[1])]
            entry["dev_macro_f1"] = macro_f1(golds, preds, EMOTION_LABELS)[1]
        history.append(entry)
        logger.info("finetune epoch %d: %s", epoch, entry)
    out = probed.derive(to_numpy_state(model), "finetune", chash)
    out.provenance["history"] = history
    return out


@dataclass
class Predictions:
    probs: np.ndarray
    labels: list
    degenerate: np.ndarray

    def __len__(self):
        return len(self.labels)


class Predictor:
    """Eval-mode model built once from a checkpoint; read-only after init."""

    def __init__(self, ckpt: ModelCheckpoint, batch_size=256):
        if not any(k.startswith("head.") for k in ckpt.tensors):
            raise ValueError("checkpoint has no classifier head")
        self.ckpt = ckpt
        self.tokenizer = ckpt.tokenizer
        self.model = build_model(ckpt, with_mlm=False, with_head=True).eval()
        self.batch_size = batch_size

    def __call__(self, texts) -> Predictions:
        texts = list(texts)
        k = self.ckpt.encoder_config.num_labels
        probs = np.full((len(texts), k), 1.0 / k)
        degenerate = np.array([not t.strip() for t in texts], dtype=bool)
        live = [i for i in range(len(texts)) if not degenerate[i]]
        with torch.no_grad():
            for s in range(0, len(live), self.batch_size):
                chunk = live[s: s + self.batch_size]
                ids = [self.tokenizer.encode(texts[i], self.ckpt.encoder_config.max_length) for i in chunk]
                x = torch.from_numpy(pad_batch(ids, self.tokenizer.pad_id))
                logits, _ = self.model(x)
                probs[chunk] = torch.softmax(logits.double(), dim=-1).numpy()
        labels = [EMOTION_LABELS[int(i)] for i in probs.argmax(1)]
        return Predictions(probs, labels, degenerate)

    def proba(self, texts):
        return self(texts).probs


def predict(ckpt: ModelCheckpoint, texts) -> Predictions:
    return Predictor(ckpt)(texts)
