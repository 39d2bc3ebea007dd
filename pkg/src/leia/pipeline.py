"""Config-driven experiment runner: preprocess, split, two-branch training,
soup, baselines, evaluation and reports, with per-stage caching."""

import json
import logging
import os
import shutil
import subprocess
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from leia import __version__
from leia.baselines import (DictionaryModel, NbsvmModel, dictionary_presence, fit_base_frequencies,
                            nbsvm_train)
from leia.checkpoint import EncoderConfig, ModelCheckpoint, average_weights, config_hash
from leia.corpus import (PipelineConfig, TagMapping, default_detectors, load_clean_posts, read_jsonl,
                         run_pipeline, write_jsonl)
from leia.emlm import MaskingConfig
from leia.evaluation import (EvalReport, evaluate, evaluate_one_vs_rest, map_ood_labels,
                             prepare_enisear, write_reports)
from leia.labels import EMOTION_LABELS, OOD_LABELS
from leia.lexicon import CategoryMap, emotion_word_set, load_lexicon
from leia.splits import SplitSpec, build_splits, write_splits
from leia.trainer import Predictor, TrainConfig, fine_tune, linear_probe, pretrain_mlm

logger = logging.getLogger(__name__)

RUN_ROOT_ENV = "LEIA_RUN_ROOT"

STAGES = (
    "preprocess", "split", "pretrain_base", "pretrain_emlm",
    "probe", "finetune", "soup", "baselines", "evaluate",
)
IN_DOMAIN = ("user_test", "temporal_test", "random_test")
IN_DOMAIN_NAMES = {"user_test": "user", "temporal_test": "temporal", "random_test": "random"}

# column names in the reports
MODEL_PLAIN = "LEIA-noeMLM"
MODEL_EMLM = "LEIA-eMLM"
MODEL_SOUP = "LEIA"


class ConfigError(ValueError):
    pass


class StageFailed(RuntimeError):
    def __init__(self, stage, log_path, cause):
        super().__init__(f"stage {stage!r} failed: {cause} (log: {log_path})")
        self.stage = stage
        self.log_path = log_path


@dataclass
class ExperimentConfig:
    base_dir: Path
    name: str = "experiment"
    seed: int = 0
    paths: dict = field(default_factory=dict)
    preprocess: dict = field(default_factory=dict)
    split: SplitSpec = field(default_factory=SplitSpec)
    masking: MaskingConfig = field(default_factory=MaskingConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    base_pretrain_steps: int = None
    evaluation: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path, "rb") as f:
            raw = tomllib.load(f)
        return cls.from_dict(raw, path.parent)

    @classmethod
    def from_dict(cls, raw, base_dir="."):
        raw = json.loads(json.dumps(raw))
        seed = int(raw.get("seed", 0))
        train = dict(raw.get("train", {}))
        base_steps = train.pop("base_pretrain_steps", None)
        train.setdefault("seed", seed)
        try:
            cfg = cls(
                base_dir=Path(base_dir),
                name=raw.get("name", "experiment"),
                seed=seed,
                paths=raw.get("paths", {}),
                preprocess=raw.get("preprocess", {}),
                split=SplitSpec(**{"seed": seed, **raw.get("split", {})}),
                masking=MaskingConfig(**{"seed": seed, **raw.get("masking", {})}),
                encoder=EncoderConfig(**raw.get("encoder", {})),
                train=TrainConfig.from_dict(train),
                base_pretrain_steps=base_steps,
                evaluation=raw.get("evaluation", {}),
                raw=raw,
            )
        except TypeError as e:
            raise ConfigError(f"unknown config key: {e}") from None
        return cfg

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self):
        """Check referenced inputs exist before anything is written."""
        for key in ("corpus", "lexicon"):
            if key not in self.paths:
                raise ConfigError(f"paths.{key} is required")
            if not self.resolve(self.paths[key]).is_file():
                raise ConfigError(f"paths.{key}: {self.resolve(self.paths[key])} does not exist")
        for key in ("mapping", "category_map"):
            if key in self.paths and not self.resolve(self.paths[key]).is_file():
                raise ConfigError(f"paths.{key}: {self.resolve(self.paths[key])} does not exist")
        for name, spec in self.ood_sets().items():
            if not self.resolve(spec["file"]).is_file():
                raise ConfigError(f"paths.ood.{name}: {self.resolve(spec['file'])} does not exist")
        return self

    def ood_sets(self):
        out = {}
        for name, spec in self.paths.get("ood", {}).items():
            out[name] = {"file": spec} if isinstance(spec, str) else dict(spec)
        return out

    def run_dir(self):
        if "run_dir" in self.paths:
            return self.resolve(self.paths["run_dir"])
        root = os.environ.get(RUN_ROOT_ENV, "runs")
        return Path(root) / self.name

    def hash(self):
        return config_hash(self.raw)


def code_version():
    here = Path(__file__).resolve().parent
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here, capture_output=True,
                              text=True, timeout=5).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"leia {__version__}" + (f" ({desc})" if desc else "")


class Run:
    """Stage bookkeeping inside one run directory."""

    def __init__(self, cfg: ExperimentConfig, force=()):
        self.cfg = cfg
        self.dir = cfg.run_dir()
        self.force = set(force)
        self.version = code_version()
        self.keys = {}
        self.executed = []
        self.skipped = []

    def stage_key(self, stage, parts, deps=()):
        key = config_hash({"stage": stage, "parts": parts, "deps": [self.keys[d] for d in deps]})
        self.keys[stage] = key
        return key

    def stage_dir(self, stage):
        return self.dir / stage

    def cached(self, stage, key):
        marker = self.stage_dir(stage) / "stage.json"
        if stage in self.force or not marker.exists():
            return False
        with open(marker, encoding="utf-8") as f:
            return json.load(f).get("key") == key

    def run(self, stage, key, fn):
        if self.cached(stage, key):
            logger.info("stage %s: cached", stage)
            self.skipped.append(stage)
            return
        d = self.stage_dir(stage)
        if d.exists():
            shutil.rmtree(d)
        d.mkdir(parents=True)
        log_path = d / "stage.log"
        handler = logging.FileHandler(log_path, encoding="utf-8")
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root = logging.getLogger("leia")
        root.addHandler(handler)
        prev_level = root.level
        root.setLevel(logging.INFO)
        t = time.time()
        try:
            fn(d)
        except Exception as e:
            logger.exception("stage %s failed", stage)
            raise StageFailed(stage, log_path, e) from e
        finally:
            root.removeHandler(handler)
            root.setLevel(prev_level)
            handler.close()
        record = {"stage": stage, "key": key, "config_hash": self.cfg.hash(), "code_version": self.version,
                  "seconds": round(time.time() - t, 2)}
        with open(d / "stage.json", "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2, sort_keys=True)
        self.executed.append(stage)


def _posts(run, name):
    return load_clean_posts(run.stage_dir("split") / f"{name}.jsonl")


def _texts_labels(posts):
    return [p.text for p in posts], [p.label.value for p in posts]


def _load_ood(cfg, name, spec):
    rows = []
    for i, rec in enumerate(read_jsonl(cfg.resolve(spec["file"]))):
        if rec is None:
            continue
        label = map_ood_labels(rec.get("label"))
        if label is None:
            continue
        text = rec["text"]
        if spec.get("prepare") == "enisear":
            text = prepare_enisear(text)
        rows.append({"id": str(rec.get("id", i)), "text": text, "label": label})
    return rows


def run_experiment(config, stage=None, force=False):
    """Run (or resume) an experiment; returns the run directory.

    ``stage`` limits the run to that stage and its prerequisites. ``force``
    recomputes the requested stage (or every stage if none is named).
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.load(config)
    cfg.validate()
    if stage is not None and stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; choose from {STAGES}")
    last = STAGES.index(stage) if stage else len(STAGES) - 1
    forced = (STAGES if stage is None else (stage,)) if force else ()
    run = Run(cfg, forced)
    run.dir.mkdir(parents=True, exist_ok=True)
    todo = STAGES[: last + 1]

    lex_path = cfg.resolve(cfg.paths["lexicon"])
    corpus_path = cfg.resolve(cfg.paths["corpus"])
    mapping = TagMapping.load(cfg.resolve(cfg.paths["mapping"])) if "mapping" in cfg.paths else TagMapping()
    cmap = CategoryMap.load(cfg.resolve(cfg.paths["category_map"])) if "category_map" in cfg.paths \
        else CategoryMap(cfg.evaluation.get("category_map")) if "category_map" in cfg.evaluation else CategoryMap()
    B = int(cfg.evaluation.get("bootstrap", 10000))
    pre_cfg = PipelineConfig(**cfg.preprocess)

    def file_digest(p):
        import hashlib
        return hashlib.sha256(Path(p).read_bytes()).hexdigest()

    # -- preprocess
    key = run.stage_key("preprocess", {"corpus": file_digest(corpus_path), "pre": asdict(pre_cfg),
                                       "mapping": sorted((k, v.value) for k, v in mapping.items())})

    def do_preprocess(d):
        clean, stats = run_pipeline(read_jsonl(corpus_path), mapping, default_detectors(), pre_cfg)
        write_jsonl(d / "clean.jsonl", clean)
        with open(d / "stats.json", "w", encoding="utf-8") as f:
            json.dump(stats.to_dict(), f, indent=2, sort_keys=True)
        logger.info("preprocess: %s", stats.to_dict())

    run.run("preprocess", key, do_preprocess)
    if "split" not in todo:
        return _finish(run)

    # -- split
    key = run.stage_key("split", asdict(cfg.split), ["preprocess"])

    def do_split(d):
        posts = load_clean_posts(run.stage_dir("preprocess") / "clean.jsonl")
        write_splits(posts, build_splits(posts, cfg.split), d)

    run.run("split", key, do_split)
    if "pretrain_base" not in todo:
        return _finish(run)

    lexicon = load_lexicon(lex_path)
    emo_words = emotion_word_set(lexicon)
    train_cfg = cfg.train
    base_cfg = TrainConfig.from_dict({**train_cfg.to_dict()})
    if cfg.base_pretrain_steps is not None:
        base_cfg.pretrain.steps = int(cfg.base_pretrain_steps)
    plain_masking = MaskingConfig.plain(p_other=cfg.masking.p_other, seed=cfg.masking.seed)

    # -- pretrain_base: uniform masking from scratch; the no-eMLM branch starts here
    key = run.stage_key("pretrain_base", {"enc": asdict(cfg.encoder), "pretrain": asdict(base_cfg.pretrain),
                                          "seed": base_cfg.seed, "mask": asdict(plain_masking)}, ["split"])

    def do_base(d):
        texts, _ = _texts_labels(_posts(run, "train"))
        ckpt = pretrain_mlm(texts, cfg.encoder, base_cfg, plain_masking, stage="pretrain_base")
        ckpt.provenance["config_hash"] = cfg.hash()
        ckpt.save(d / "ckpt")

    run.run("pretrain_base", key, do_base)
    if "pretrain_emlm" not in todo:
        return _finish(run)

    # -- pretrain_emlm: continue from the base with emotion-word masking
    key = run.stage_key("pretrain_emlm", {"pretrain": asdict(train_cfg.pretrain), "seed": train_cfg.seed,
                                          "mask": asdict(cfg.masking),
                                          "lexicon": file_digest(lex_path)}, ["pretrain_base"])

    def do_emlm(d):
        texts, _ = _texts_labels(_posts(run, "train"))
        base = ModelCheckpoint.load(run.stage_dir("pretrain_base") / "ckpt")
        ckpt = pretrain_mlm(texts, train_cfg=train_cfg, masking_cfg=cfg.masking, emotion_words=emo_words,
                            init=base, stage="pretrain_emlm")
        ckpt.provenance["config_hash"] = cfg.hash()
        ckpt.save(d / "ckpt")

    run.run("pretrain_emlm", key, do_emlm)
    if "probe" not in todo:
        return _finish(run)

    branches = {"plain": "pretrain_base", "emlm": "pretrain_emlm"}

    # -- probe both branches
    key = run.stage_key("probe", {"probe": asdict(train_cfg.probe), "seed": train_cfg.seed},
                        ["pretrain_base", "pretrain_emlm"])

    def do_probe(d):
        texts, labels = _texts_labels(_posts(run, "train"))
        for b, src in branches.items():
            base = ModelCheckpoint.load(run.stage_dir(src) / "ckpt")
            ckpt = linear_probe(base, texts, labels, train_cfg)
            ckpt.provenance["config_hash"] = cfg.hash()
            ckpt.save(d / b)

    run.run("probe", key, do_probe)
    if "finetune" not in todo:
        return _finish(run)

    # -- finetune both branches
    key = run.stage_key("finetune", {"ft": asdict(train_cfg.finetune), "con": asdict(train_cfg.contrastive),
                                     "seed": train_cfg.seed}, ["probe"])

    def do_finetune(d):
        texts, labels = _texts_labels(_posts(run, "train"))
        dev = _texts_labels(_posts(run, "dev"))
        history = {}
        for b in branches:
            probed = ModelCheckpoint.load(run.stage_dir("probe") / b)
            ckpt = fine_tune(probed, texts, labels, train_cfg, dev=dev)
            history[b] = ckpt.provenance.get("history")
            ckpt.provenance["config_hash"] = cfg.hash()
            ckpt.save(d / b)
        with open(d / "history.json", "w", encoding="utf-8") as f:
            json.dump(history, f, indent=2)

    run.run("finetune", key, do_finetune)
    if "soup" not in todo:
        return _finish(run)

    # -- soup
    key = run.stage_key("soup", {}, ["finetune"])

    def do_soup(d):
        a = ModelCheckpoint.load(run.stage_dir("finetune") / "plain")
        b = ModelCheckpoint.load(run.stage_dir("finetune") / "emlm")
        soup = average_weights(a, b)
        soup.provenance["config_hash"] = cfg.hash()
        soup.save(d / "ckpt")

    run.run("soup", key, do_soup)
    if "baselines" not in todo:
        return _finish(run)

    # -- baselines
    key = run.stage_key("baselines", {"lexicon": file_digest(lex_path),
                                      "cmap": {c: l.value for c, l in cmap.items()}}, ["split"])

    def do_baselines(d):
        dev_texts, _ = _texts_labels(_posts(run, "dev"))
        fit_base_frequencies(dev_texts, lexicon, cmap).save(d / "dictionary.json")
        texts, labels = _texts_labels(_posts(run, "train"))
        nbsvm_train(texts, labels).save(d / "nbsvm")

    run.run("baselines", key, do_baselines)
    if "evaluate" not in todo:
        return _finish(run)

    # -- evaluate
    ood = cfg.ood_sets()
    key = run.stage_key("evaluate", {"B": B, "seed": cfg.seed,
                                     "ood": {n: [file_digest(cfg.resolve(s["file"])), s.get("prepare")]
                                             for n, s in ood.items()}},
                        ["soup", "baselines", "finetune"])

    def do_evaluate(d):
        _evaluate_all(run, cfg, lexicon, B, ood, d)

    run.run("evaluate", key, do_evaluate)
    return _finish(run)


def _evaluate_all(run, cfg, lexicon, B, ood, d):
    dictionary = DictionaryModel.load(run.stage_dir("baselines") / "dictionary.json", lexicon)
    nbsvm = NbsvmModel.load(run.stage_dir("baselines") / "nbsvm")
    neural = {
        MODEL_PLAIN: Predictor(ModelCheckpoint.load(run.stage_dir("finetune") / "plain")),
        MODEL_EMLM: Predictor(ModelCheckpoint.load(run.stage_dir("finetune") / "emlm")),
        MODEL_SOUP: Predictor(ModelCheckpoint.load(run.stage_dir("soup") / "ckpt")),
    }
    datasets = {}
    for split in IN_DOMAIN:
        posts = _posts(run, split)
        datasets[IN_DOMAIN_NAMES[split]] = ([p.id for p in posts], [p.text for p in posts],
                                            [p.label.value for p in posts], False)
    for name, spec in ood.items():
        rows = _load_ood(cfg, name, spec)
        datasets[name] = ([r["id"] for r in rows], [r["text"] for r in rows], [r["label"] for r in rows], True)

    pred_dir = d / "predictions"
    pred_dir.mkdir()
    reports = []
    for ds, (ids, texts, golds, is_ood) in datasets.items():
        if not ids:
            logger.warning("dataset %s has no usable instances; skipped", ds)
            continue
        label_set = OOD_LABELS if is_ood else EMOTION_LABELS
        presence = dictionary_presence(texts, dictionary)
        reports.append(evaluate_one_vs_rest(golds, presence, dictionary.labels, B, cfg.seed, ds, "Dictionary"))
        outputs = {"NBSVM": nbsvm.predict(texts)}
        probs = {}
        for name, predictor in neural.items():
            out = predictor(texts)
            outputs[name] = out.labels
            probs[name] = out.probs
        for name, preds in outputs.items():
            if is_ood:
                preds = [map_ood_labels(p) for p in preds]
            reports.append(evaluate(golds, preds, label_set, B, cfg.seed, ds, name))
            with open(pred_dir / f"{name}__{ds}.jsonl", "w", encoding="utf-8") as f:
                for i, (pid, g, p) in enumerate(zip(ids, golds, preds)):
                    rec = {"id": pid, "gold": g, "pred": p}
                    if name in probs:
                        rec["probs"] = [round(float(x), 6) for x in probs[name][i]]
                    f.write(json.dumps(rec, sort_keys=True) + "\n")

    in_names = set(IN_DOMAIN_NAMES.values())
    main = ("Dictionary", "NBSVM", MODEL_SOUP)
    inter = (MODEL_PLAIN, MODEL_EMLM, MODEL_SOUP)
    rep_dir = d / "reports"
    ind = [r for r in reports if r.dataset in in_names]
    oods = [r for r in reports if r.dataset not in in_names]
    write_reports([r for r in ind if r.model in main], rep_dir, "in_domain")
    write_reports([r for r in ind if r.model in inter], rep_dir, "intermediate_in_domain", rank=True)
    if oods:
        write_reports([r for r in oods if r.model in main], rep_dir, "out_of_domain")
        write_reports([r for r in oods if r.model in inter], rep_dir, "intermediate_out_of_domain", rank=True)
    with open(rep_dir / "reports.json", "w", encoding="utf-8") as f:
        json.dump([r.to_dict() for r in reports], f, indent=2, sort_keys=True)


def _finish(run):
    outputs = {}
    for p in sorted(run.dir.rglob("*")):
        if p.is_file() and p.name != "run_manifest.json":
            outputs[str(p.relative_to(run.dir))] = p.parent.relative_to(run.dir).parts[0] \
                if p.parent != run.dir else None
    manifest = {
        "name": run.cfg.name,
        "config_hash": run.cfg.hash(),
        "code_version": run.version,
        "stage_keys": run.keys,
        "outputs": outputs,
        "last_invocation": {"executed": run.executed, "cached": run.skipped},
    }
    with open(run.dir / "run_manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    logger.info("run %s: executed %s, cached %s", run.dir, run.executed, run.skipped)
    return run.dir


def load_reports(run_dir):
    with open(Path(run_dir) / "evaluate" / "reports" / "reports.json", encoding="utf-8") as f:
        return [EvalReport(**{**r, "label_set": tuple(r["label_set"]),
                              "ci": {k: tuple(v) for k, v in r["ci"].items()}}) for r in json.load(f)]
