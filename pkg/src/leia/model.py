"""Small transformer encoder with MLM and classification heads."""

import numpy as np
import torch
from torch import nn

from leia.checkpoint import EncoderConfig, ModelCheckpoint


class Encoder(nn.Module):
    def __init__(self, cfg: EncoderConfig, pad_id=1):
        super().__init__()
        self.pad_id = pad_id
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.hidden)
        self.pos_emb = nn.Embedding(cfg.max_length, cfg.hidden)
        self.emb_norm = nn.LayerNorm(cfg.hidden)
        self.emb_dropout = nn.Dropout(cfg.embedding_dropout)
        layer = nn.TransformerEncoderLayer(
            cfg.hidden, cfg.heads, cfg.ffn, dropout=cfg.dropout,
            activation="gelu", batch_first=True,
        )
        self.layers = nn.TransformerEncoder(layer, cfg.layers, enable_nested_tensor=False)

    def forward(self, ids):
        pos = torch.arange(ids.shape[1], device=ids.device)
        x = self.emb_dropout(self.emb_norm(self.tok_emb(ids) + self.pos_emb(pos)[None]))
        return self.layers(x, src_key_padding_mask=ids == self.pad_id)


class MLMHead(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.dense = nn.Linear(cfg.hidden, cfg.hidden)
        self.norm = nn.LayerNorm(cfg.hidden)
        self.decoder = nn.Linear(cfg.hidden, cfg.vocab_size)

    def forward(self, h):
        return self.decoder(self.norm(nn.functional.gelu(self.dense(h))))


class EmotionModel(nn.Module):
    """Encoder plus optional MLM head and 5-way classifier head.

    The pooled representation is the final hidden state of ``<s>``.
    """

    def __init__(self, cfg: EncoderConfig, with_mlm=False, with_head=False, pad_id=1):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg, pad_id)
        self.mlm_head = MLMHead(cfg) if with_mlm else None
        self.head = nn.Linear(cfg.hidden, cfg.num_labels) if with_head else None

    def pooled(self, ids):
        return self.encoder(ids)[:, 0]

    def mlm_logits(self, ids):
        return self.mlm_head(self.encoder(ids))

    def forward(self, ids):
        pooled = self.pooled(ids)
        return self.head(pooled), pooled


def to_numpy_state(module):
    return {k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def build_model(ckpt: ModelCheckpoint, with_mlm=None, with_head=None):
    """Instantiate a torch model holding the checkpoint's tensors."""
    has_mlm = any(k.startswith("mlm_head.") for k in ckpt.tensors)
    has_head = any(k.startswith("head.") for k in ckpt.tensors)
    with_mlm = has_mlm if with_mlm is None else with_mlm
    with_head = has_head if with_head is None else with_head
    pad_id = ckpt.tokenizer.pad_id if ckpt.tokenizer is not None else 1
    model = EmotionModel(ckpt.encoder_config, with_mlm, with_head, pad_id)
    state = model.state_dict()
    wanted = {k: torch.from_numpy(np.array(v)) for k, v in ckpt.tensors.items() if k in state}
    missing = set(state) - set(wanted)
    fresh = {k for k in missing if k.startswith("mlm_head.") or k.startswith("head.")}
    if missing - fresh:
        raise KeyError(f"checkpoint lacks tensors {sorted(missing - fresh)[:3]}")
    model.load_state_dict(wanted, strict=False)
    return model


def init_head(hidden, num_labels, seed):
    """Seeded random classifier head, as numpy tensors named ``head.*``."""
    g = torch.Generator().manual_seed(seed)
    bound = 1.0 / np.sqrt(hidden)
    w = (torch.rand(num_labels, hidden, generator=g) * 2 - 1) * bound
    b = (torch.rand(num_labels, generator=g) * 2 - 1) * bound
    return {"head.weight": w.numpy(), "head.bias": b.numpy()}
