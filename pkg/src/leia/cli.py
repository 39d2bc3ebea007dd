"""Command-line entry point: ``leia <command> ...``."""

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path


def _records(path):
    from leia.corpus import read_jsonl
    return [r for r in read_jsonl(path) if r is not None]


def _texts_labels(path):
    rows = _records(path)
    return [r["text"] for r in rows], [r.get("label") for r in rows], rows


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# --- TrainConfig / EncoderConfig flags -----------------------------------------

def _add_dataclass_flags(p, prefix, cls):
    for f in fields(cls):
        if f.type in (int, float, "int", "float"):
            typ = int if f.type in (int, "int") else float
            p.add_argument(f"--{prefix}-{f.name.replace('_', '-')}", type=typ, default=None,
                           dest=f"{prefix}__{f.name}", help=f"default {f.default}")


def _add_train_flags(p, sections):
    from leia.trainer import ContrastiveConfig, FinetuneConfig, PretrainConfig, ProbeConfig
    classes = {"pretrain": PretrainConfig, "probe": ProbeConfig, "finetune": FinetuneConfig,
               "contrastive": ContrastiveConfig}
    g = p.add_argument_group("training hyperparameters")
    for s in sections:
        _add_dataclass_flags(g, s, classes[s])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config", help="TOML/JSON file with a TrainConfig table")


def _train_config(args):
    from leia.trainer import TrainConfig
    base = {}
    if getattr(args, "config", None):
        base = _load_table(args.config).get("train", _load_table(args.config))
        base = {k: v for k, v in base.items() if k != "base_pretrain_steps"}
    d = TrainConfig.from_dict(base).to_dict()
    for key, v in vars(args).items():
        if "__" in key and v is not None and key.split("__")[0] in d:
            sec, name = key.split("__")
            d[sec][name] = v
    d["seed"] = args.seed
    return TrainConfig.from_dict(d)


def _load_table(path):
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    from leia.pipeline import tomllib
    with open(path, "rb") as f:
        return tomllib.load(f)


# --- commands -------------------------------------------------------------------

def cmd_preprocess(args):
    from leia.corpus import PipelineConfig, TagMapping, default_detectors, read_jsonl, run_pipeline, write_jsonl
    mapping = TagMapping.load(args.mapping) if args.mapping else TagMapping()
    clean, stats = run_pipeline(read_jsonl(args.inp), mapping, default_detectors(),
                                PipelineConfig(meme_k=args.meme_k, min_words=args.min_words))
    write_jsonl(args.out, clean)
    _dump(stats.to_dict(), args.stats)


def cmd_split(args):
    from leia.corpus import load_clean_posts
    from leia.splits import SplitSpec, build_splits, write_splits
    spec = SplitSpec.load(args.spec) if args.spec else SplitSpec()
    posts = load_clean_posts(args.inp)
    result = build_splits(posts, spec)
    write_splits(posts, result, args.out_dir)
    print(json.dumps(result.manifest["sizes"]))


def cmd_pretrain(args):
    from leia.checkpoint import EncoderConfig, ModelCheckpoint
    from leia.emlm import MaskingConfig
    from leia.lexicon import emotion_word_set, load_lexicon
    from leia.trainer import pretrain_mlm
    texts, _, _ = _texts_labels(args.train)
    cfg = _train_config(args)
    init = ModelCheckpoint.load(args.init) if args.init else None
    enc = None
    if init is None:
        enc = EncoderConfig(**{f.name: getattr(args, f"encoder__{f.name}") for f in fields(EncoderConfig)
                               if getattr(args, f"encoder__{f.name}", None) is not None})
    if args.lexicon:
        words = emotion_word_set(load_lexicon(args.lexicon))
        masking = MaskingConfig(p_emotion=args.p_emotion, p_other=args.p_other, seed=args.seed)
    else:
        words = frozenset()
        masking = MaskingConfig.plain(p_other=args.p_other, seed=args.seed)
    ckpt = pretrain_mlm(texts, enc, cfg, masking, words, init=init,
                        stage="pretrain_emlm" if args.lexicon else "pretrain_base")
    ckpt.save(args.out)


def cmd_probe(args):
    from leia.checkpoint import ModelCheckpoint
    from leia.trainer import linear_probe
    texts, labels, _ = _texts_labels(args.train)
    linear_probe(ModelCheckpoint.load(args.ckpt), texts, labels, _train_config(args)).save(args.out)


def cmd_finetune(args):
    from leia.checkpoint import ModelCheckpoint
    from leia.trainer import fine_tune
    texts, labels, _ = _texts_labels(args.train)
    dev = _texts_labels(args.dev)[:2] if args.dev else None
    ckpt = fine_tune(ModelCheckpoint.load(args.ckpt), texts, labels, _train_config(args), dev=dev)
    ckpt.save(args.out)


def cmd_soup(args):
    from leia.checkpoint import ModelCheckpoint, average_weights
    average_weights(ModelCheckpoint.load(args.a), ModelCheckpoint.load(args.b)).save(args.out)


def cmd_predict(args):
    from leia.checkpoint import ModelCheckpoint
    from leia.trainer import predict
    texts, golds, rows = _texts_labels(args.inp)
    out = predict(ModelCheckpoint.load(args.ckpt), texts)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as f:
        for i, r in enumerate(rows):
            rec = {"id": str(r.get("id", i)), "pred": out.labels[i],
                   "probs": [round(float(x), 6) for x in out.probs[i]], "degenerate": bool(out.degenerate[i])}
            if golds[i] is not None:
                rec["gold"] = golds[i]
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def cmd_baseline_dict(args):
    from leia.baselines import dictionary_presence, fit_base_frequencies
    from leia.evaluation import evaluate_one_vs_rest, write_reports
    from leia.lexicon import CategoryMap, load_lexicon
    lex = load_lexicon(args.lexicon)
    cmap = CategoryMap.load(args.cmap) if args.cmap else CategoryMap()
    dev, _, _ = _texts_labels(args.dev)
    model = fit_base_frequencies(dev, lex, cmap)
    texts, golds, _ = _texts_labels(args.test)
    rep = evaluate_one_vs_rest(golds, dictionary_presence(texts, model), model.labels, args.bootstrap,
                               args.seed, Path(args.test).stem, "Dictionary")
    Path(args.report).mkdir(parents=True, exist_ok=True)
    model.save(Path(args.report) / "dictionary.json")
    write_reports([rep], args.report, "dictionary")
    print(f"Dictionary macro-F1 {rep.macro:.2f}")


def cmd_baseline_nbsvm(args):
    from leia.baselines import nbsvm_train
    from leia.evaluation import evaluate, write_reports
    texts, labels, _ = _texts_labels(args.train)
    model = nbsvm_train(texts, labels, vocab_size=args.vocab_size, beta=args.beta)
    tt, golds, _ = _texts_labels(args.test)
    rep = evaluate(golds, model.predict(tt), B=args.bootstrap, seed=args.seed,
                   dataset=Path(args.test).stem, model="NBSVM")
    model.save(Path(args.report) / "nbsvm")
    write_reports([rep], args.report, "nbsvm")
    print(f"NBSVM macro-F1 {rep.macro:.2f}")


def _joined(pred_path, gold_path=None):
    preds = _records(pred_path)
    if gold_path is None:
        return [r["gold"] for r in preds], [r["pred"] for r in preds], preds
    gold = {str(r.get("id", i)): r["label"] for i, r in enumerate(_records(gold_path))}
    missing = [r["id"] for r in preds if str(r["id"]) not in gold]
    if missing:
        raise SystemExit(f"{len(missing)} predictions have no gold label (first: {missing[0]})")
    return [gold[str(r["id"])] for r in preds], [r["pred"] for r in preds], preds


def cmd_evaluate(args):
    from leia.evaluation import evaluate, map_ood_labels, write_reports
    from leia.labels import LABEL_SETS
    golds, preds, _ = _joined(args.pred, args.gold)
    label_set = LABEL_SETS[args.labels]
    if args.labels == "4class":
        keep = [i for i, g in enumerate(golds) if map_ood_labels(g) is not None]
        golds = [map_ood_labels(golds[i]) for i in keep]
        preds = [map_ood_labels(preds[i]) for i in keep]
    rep = evaluate(golds, preds, label_set, args.bootstrap, args.seed,
                   dataset=args.dataset or Path(args.gold or args.pred).stem, model=args.model)
    write_reports([rep], args.report, args.name)
    _dump(rep.to_dict(), Path(args.report) / f"{args.name}.json")
    print(f"macro-F1 {rep.macro:.2f} [{rep.ci['macro'][0]:.2f}, {rep.ci['macro'][1]:.2f}]" if rep.ci
          else f"macro-F1 {rep.macro:.2f}")


def _read_scores(path):
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    header = rows[0][1:]
    return {r[0]: {d: float(v) for d, v in zip(header, r[1:])} for r in rows[1:] if r}


def cmd_rank(args):
    from leia.evaluation import average_rank
    ranks = average_rank(_read_scores(args.scores))
    for m, r in ranks.items():
        print(f"{m}\t{r:.2f}")


def cmd_sample_errors(args):
    from leia.evaluation import sample_errors
    golds, preds, rows = _joined(args.pred, args.gold)
    recs = [{"id": str(r.get("id", i)), "gold": g, "pred": p} for i, (r, g, p) in enumerate(zip(rows, golds, preds))]
    texts = {}
    if args.texts:
        texts = {str(r.get("id", i)): r.get("text") for i, r in enumerate(_records(args.texts))}
    for e in sample_errors(recs, args.per_label, args.seed):
        out = {"id": e.id, "gold": e.gold, "pred": e.pred}
        if e.id in texts:
            out["text"] = texts[e.id]
        print(json.dumps(out, ensure_ascii=False))


def cmd_explain(args):
    from leia.attribution import explain
    from leia.checkpoint import ModelCheckpoint
    from leia.trainer import Predictor
    predictor = Predictor(ModelCheckpoint.load(args.ckpt))
    exp = explain(predictor.proba, args.text, args.target, n_samples=args.samples, seed=args.seed)
    _dump(exp.to_dict(), args.out)


def cmd_run(args):
    from leia.pipeline import run_experiment
    run_dir = run_experiment(args.config, stage=args.stage, force=args.force)
    print(run_dir)


def build_parser():
    from leia.checkpoint import EncoderConfig
    from leia.pipeline import STAGES

    ap = argparse.ArgumentParser(prog="leia", description="Emotion classification experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean a raw JSONL corpus")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mapping", help="JSON tag -> label map (default: built-in table)")
    p.add_argument("--meme-k", type=int, default=10)
    p.add_argument("--min-words", type=int, default=3)
    p.add_argument("--stats")
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("split", help="carve train/dev/test splits")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--spec", help="JSON SplitSpec")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("pretrain", help="masked-LM pre-training (eMLM when --lexicon is given)")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", help="checkpoint to continue from")
    p.add_argument("--lexicon")
    p.add_argument("--p-emotion", type=float, default=0.5)
    p.add_argument("--p-other", type=float, default=0.15)
    g = p.add_argument_group("encoder (ignored with --init)")
    _add_dataclass_flags(g, "encoder", EncoderConfig)
    _add_train_flags(p, ["pretrain"])
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("probe", help="train the classifier head on a frozen encoder")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p, ["probe"])
    p.set_defaults(fn=cmd_probe)

    p = sub.add_parser("finetune", help="full fine-tuning with the joint objective")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True)
    _add_train_flags(p, ["finetune", "contrastive"])
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("soup", help="average two fine-tuned checkpoints")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_soup)

    p = sub.add_parser("predict", help="label a JSONL file of texts")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_predict)

    for name, fn in (("baseline-dict", cmd_baseline_dict), ("baseline-nbsvm", cmd_baseline_nbsvm)):
        p = sub.add_parser(name)
        if name == "baseline-dict":
            p.add_argument("--dev", required=True)
            p.add_argument("--lexicon", required=True)
            p.add_argument("--cmap")
        else:
            p.add_argument("--train", required=True)
            p.add_argument("--vocab-size", type=int, default=64000)
            p.add_argument("--beta", type=float, default=0.25)
        p.add_argument("--test", required=True)
        p.add_argument("--report", required=True)
        p.add_argument("--bootstrap", type=int, default=10000)
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(fn=fn)

    p = sub.add_parser("evaluate", help="macro-F1 with bootstrap intervals")
    p.add_argument("--pred", required=True, help="JSONL with id, pred (and gold if --gold is omitted)")
    p.add_argument("--gold", help="JSONL with id, label")
    p.add_argument("--labels", choices=("5class", "4class"), default="5class")
    p.add_argument("--bootstrap", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.add_argument("--name", default="results")
    p.add_argument("--dataset")
    p.add_argument("--model", default="model")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("rank", help="average rank per model")
    p.add_argument("--scores", required=True, help="CSV (models x datasets) or JSON {model: {dataset: score}}")
    p.set_defaults(fn=cmd_rank)

    p = sub.add_parser("sample-errors", help="draw misclassified examples per gold label")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold")
    p.add_argument("--texts", help="JSONL with id, text to attach")
    p.add_argument("--per-label", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_sample_errors)

    p = sub.add_parser("explain", help="word-level perturbation explanation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--class", dest="target", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("run", help="run a configured experiment end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--stage", choices=STAGES)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_run)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except (ValueError, KeyError, FileNotFoundError) as e:
        print(f"leia {args.command}: error: {e}", file=sys.stderr)
        return 2
    except RuntimeError as e:
        print(f"leia {args.command}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
