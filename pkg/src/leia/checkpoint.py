"""On-disk model checkpoints: raw tensor blobs plus a JSON manifest."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from leia.tokenizer import WordTokenizer

MANIFEST = "manifest.json"


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    hidden: int = 128
    heads: int = 4
    ffn: int = 256
    vocab_size: int = 8000
    max_length: int = 128
    embedding_dropout: float = 0.1
    dropout: float = 0.1
    num_labels: int = 5

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError(f"hidden={self.hidden} not divisible by heads={self.heads}")
        if self.max_length != 128:
            raise ValueError("max_length is fixed at 128 tokens")
        if self.num_labels != 5:
            raise ValueError("classifier head must have 5 outputs")


def config_hash(obj):
    """Stable short hash of a JSON-able object (dataclasses allowed)."""
    if hasattr(obj, "__dataclass_fields__"):
        obj = asdict(obj)
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ModelCheckpoint:
    tensors: dict
    encoder_config: EncoderConfig = field(default_factory=EncoderConfig)
    tokenizer: WordTokenizer = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tensors = {k: np.ascontiguousarray(self.tensors[k]) for k in sorted(self.tensors)}
        self.provenance = {"stage": "init", "config_hash": None, "parents": [], **self.provenance}

    @property
    def manifest(self):
        return {k: {"shape": list(v.shape), "dtype": str(v.dtype)} for k, v in self.tensors.items()}

    def names(self, prefix=""):
        return [k for k in self.tensors if k.startswith(prefix)]

    def content_hash(self):
        h = hashlib.sha256()
        for k, v in self.tensors.items():
            h.update(k.encode())
            h.update(str(v.dtype).encode())
            h.update(repr(v.shape).encode())
            h.update(v.tobytes())
        h.update(json.dumps(asdict(self.encoder_config), sort_keys=True).encode())
        if self.tokenizer is not None:
            h.update(json.dumps(self.tokenizer.vocab).encode())
        return h.hexdigest()

    def derive(self, tensors, stage, config_hash=None, parents=None):
        """New checkpoint sharing config/tokenizer, with provenance pointing here."""
        return ModelCheckpoint(
            tensors,
            self.encoder_config,
            self.tokenizer,
            {"stage": stage, "config_hash": config_hash,
             "parents": parents if parents is not None else [self.content_hash()]},
        )

    def save(self, path):
        path = Path(path)
        (path / "tensors").mkdir(parents=True, exist_ok=True)
        entries = {}
        for i, (k, v) in enumerate(self.tensors.items()):
            fname = f"tensors/{i:04d}.bin"
            with open(path / fname, "wb") as f:
                f.write(v.tobytes(order="C"))
            entries[k] = {"shape": list(v.shape), "dtype": str(v.dtype), "file": fname}
        manifest = {
            "tensors": entries,
            "encoder_config": asdict(self.encoder_config),
            "provenance": self.provenance,
            "content_hash": self.content_hash(),
        }
        if self.tokenizer is not None:
            self.tokenizer.save(path / "tokenizer.json")
        tmp = path / (MANIFEST + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
        os.replace(tmp, path / MANIFEST)
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path / MANIFEST, encoding="utf-8") as f:
            manifest = json.load(f)
        tensors = {}
        for k, e in manifest["tensors"].items():
            raw = (path / e["file"]).read_bytes()
            tensors[k] = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
        tok = None
        if (path / "tokenizer.json").exists():
            tok = WordTokenizer.load(path / "tokenizer.json")
        ckpt = cls(tensors, EncoderConfig(**manifest["encoder_config"]), tok, manifest["provenance"])
        if ckpt.content_hash() != manifest["content_hash"]:
            raise ValueError(f"{path}: content hash mismatch")
        return ckpt


class ManifestMismatch(ValueError):
    pass


def _first_difference(a, b):
    ma, mb = a.manifest, b.manifest
    for name in sorted(set(ma) | set(mb)):
        if name not in ma or name not in mb:
            return name, "missing in " + ("first" if name not in ma else "second")
        if ma[name] != mb[name]:
            return name, f"{ma[name]} vs {mb[name]}"
    return None


def average_weights(a: ModelCheckpoint, b: ModelCheckpoint) -> ModelCheckpoint:
    """Elementwise mean of two checkpoints with identical manifests."""
    diff = _first_difference(a, b)
    if diff is not None:
        raise ManifestMismatch(f"tensor {diff[0]!r} differs: {diff[1]}")
    if a.encoder_config != b.encoder_config:
        raise ManifestMismatch("encoder configs differ")
    if (a.tokenizer is None) != (b.tokenizer is None) or (
        a.tokenizer is not None and a.tokenizer.vocab != b.tokenizer.vocab
    ):
        raise ManifestMismatch("tokenizer vocabularies differ")
    tensors = {}
    for k, va in a.tensors.items():
        vb = b.tensors[k]
        if np.issubdtype(va.dtype, np.floating):
            tensors[k] = ((va + vb) / 2).astype(va.dtype)
        else:
            tensors[k] = ((va.astype(np.int64) + vb.astype(np.int64)) // 2).astype(va.dtype)
    # parents sorted so that average(a, b) and average(b, a) are the same object
    parents = sorted([a.content_hash(), b.content_hash()])
    return a.derive(tensors, "soup", parents=parents)
