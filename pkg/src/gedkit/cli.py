"""Command-line pipeline: prepare, train, predict, evaluate, analyze.

One JSON config file drives every command; command-line flags override
config values, which override defaults. Exit codes are a stable contract:
0 success, 2 input error, 3 configuration error, 4 checkpoint mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field

from gedkit import corpus as corpus_mod
from gedkit import edits as edits_mod
from gedkit import evaluation, training
from gedkit.corpus import AnnotatedSentence, Vocab
from gedkit.embeddings import load_static_vectors, read_store, write_pseudo_store
from gedkit.errors import CheckpointError, GedkitError, ParseError, ValidationError
from gedkit.model import ModelConfig, forward, predict_batch
from gedkit.training import TrainConfig, load_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_CHECKPOINT = 4


@dataclass
class RunConfig:
    seed: int = 0
    annotator: int = 0
    integration: str = "none"
    fmt: str = "tsv"
    min_count: int = 1
    paths: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str, overrides: argparse.Namespace) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ParseError(f"cannot read config: {exc}", path=path) from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f"config is not valid JSON: {exc}", path=path) from exc
        cfg = cls(
            seed=raw.get("seed", 0),
            annotator=raw.get("annotator", 0),
            integration=raw.get("integration", "none"),
            fmt=raw.get("format", "tsv"),
            min_count=raw.get("min_count", 1),
            paths=raw.get("paths", {}),
            train=raw.get("train", {}),
            model=raw.get("model", {}),
        )
        # CLI flag > config value > default.
        if getattr(overrides, "seed", None) is not None:
            cfg.seed = overrides.seed
        if getattr(overrides, "annotator", None) is not None:
            cfg.annotator = overrides.annotator
        if getattr(overrides, "integration", None) is not None:
            cfg.integration = overrides.integration
        if getattr(overrides, "format", None) is not None:
            cfg.fmt = overrides.format
        if getattr(overrides, "store", None) is not None:
            cfg.paths["store"] = overrides.store
        if cfg.integration not in ("none", "input", "output"):
            raise ValidationError(f"bad integration {cfg.integration!r}")
        return cfg

    @property
    def out_dir(self) -> str:
        return self.paths.get("out_dir", ".")

    def train_config(self, context_shape: tuple[int, int] | None = None) -> TrainConfig:
        model = dict(self.model)
        model["integration"] = self.integration
        if context_shape is not None:
            model["context_layers"], model["context_dim"] = context_shape
        mcfg = ModelConfig(**model)
        return TrainConfig(model=mcfg, seed=self.seed, annotator=self.annotator, **self.train)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_lines(path: str) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read input: {exc}", path=path) from exc


def _load_dataset(spec: dict, name: str, lexicon) -> list[AnnotatedSentence]:
    """A dataset is either {"m2": path} or {"orig": path, "corr": path}."""
    if "m2" in spec:
        text = "\n".join(_read_lines(spec["m2"]))
        return corpus_mod.parse_m2(text, path=spec["m2"], sid_prefix=f"{name}-")
    if "orig" in spec and "corr" in spec:
        orig = _read_lines(spec["orig"])
        corr = _read_lines(spec["corr"])
        if len(orig) != len(corr):
            raise ParseError(
                f"dataset {name!r}: parallel files differ in length "
                f"({len(orig)} vs {len(corr)} lines)"
            )
        pairs = list(zip(orig, corr))
        return edits_mod.annotate_corpus(pairs, lexicon=lexicon, sid_prefix=f"{name}-")
    raise ValidationError(f"dataset {name!r} needs either an 'm2' path or 'orig'+'corr' paths")


def _pick_annotator(records: list[AnnotatedSentence], annotator: int) -> list[AnnotatedSentence]:
    """One record per sid: the requested annotation set, or edit-free if absent."""
    by_sid: dict[str, dict[int, AnnotatedSentence]] = {}
    order: list[str] = []
    for rec in records:
        sid = rec.sentence.sid
        if sid not in by_sid:
            order.append(sid)
        by_sid.setdefault(sid, {})[rec.annotator] = rec
    out = []
    for sid in order:
        sets = by_sid[sid]
        if annotator in sets:
            out.append(sets[annotator])
        else:
            any_rec = next(iter(sets.values()))
            out.append(corpus_mod.make_annotated(sid, any_rec.sentence.surfaces, [], annotator))
    return out


def _input_sentences(records: list[AnnotatedSentence], vocab: Vocab):
    return [corpus_mod.encode(rec.sentence, vocab) for rec in records]


def _write_sid_corpus(records: list[AnnotatedSentence], path: str):
    """sid-prefixed tokenized corpus consumed by the extraction tool."""
    seen = set()
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            sid = rec.sentence.sid
            if sid in seen:
                continue
            seen.add(sid)
            fh.write(sid + "\t" + " ".join(rec.sentence.surfaces) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_prepare(cfg: RunConfig, args) -> int:
    lexicon = None
    if cfg.paths.get("lexicon"):
        lexicon = edits_mod.load_lexicon(cfg.paths["lexicon"])

    datasets: dict[str, list[AnnotatedSentence]] = {}
    inputs: dict[str, str] = {}
    for key in ("train", "dev"):
        if key in cfg.paths:
            datasets[key] = _load_dataset(cfg.paths[key], key, lexicon)
            inputs.update({p: _sha256(p) for p in cfg.paths[key].values()})
    for tspec in cfg.paths.get("tests", []):
        name = tspec.get("name")
        if not name:
            raise ValidationError("every tests[] entry needs a 'name'")
        datasets[f"test_{name}"] = _load_dataset(tspec, name, lexicon)
        inputs.update({p: _sha256(p) for k, p in tspec.items() if k != "name"})
    if "train" not in datasets:
        raise ValidationError("config has no paths.train dataset")

    train_selected = _pick_annotator(datasets["train"], cfg.annotator)
    vocab = corpus_mod.build_vocab(
        [rec.sentence for rec in train_selected], min_count=cfg.min_count
    )

    os.makedirs(cfg.out_dir, exist_ok=True)
    all_records: list[AnnotatedSentence] = []
    for name, records in datasets.items():
        corpus_mod.write_jsonl(records, os.path.join(cfg.out_dir, f"{name}.jsonl"))
        all_records.extend(records)
    with open(os.path.join(cfg.out_dir, "vocab.json"), "w", encoding="utf-8") as fh:
        fh.write(vocab.to_json() + "\n")
    _write_sid_corpus(all_records, os.path.join(cfg.out_dir, "corpus.sids.txt"))

    if args.pseudo_store:
        sentences = []
        seen = set()
        for rec in all_records:
            if rec.sentence.sid not in seen:
                seen.add(rec.sentence.sid)
                sentences.append(rec.sentence)
        write_pseudo_store(
            os.path.join(cfg.out_dir, "pseudo.ctx"),
            sentences,
            args.pseudo_layers,
            args.pseudo_dim,
            cfg.seed,
        )

    manifest = {
        "inputs": inputs,
        "seed": cfg.seed,
        "annotator": cfg.annotator,
        "min_count": cfg.min_count,
        "datasets": sorted(datasets),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(os.path.join(cfg.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"prepared {len(datasets)} dataset(s) into {cfg.out_dir}")
    return EXIT_OK


def _load_prepared(cfg: RunConfig, name: str) -> list[AnnotatedSentence]:
    path = os.path.join(cfg.out_dir, f"{name}.jsonl")
    if not os.path.exists(path):
        raise ParseError("prepared dataset missing; run `gedkit prepare` first", path=path)
    return corpus_mod.read_jsonl(path)


def _load_vocab(cfg: RunConfig) -> Vocab:
    path = os.path.join(cfg.out_dir, "vocab.json")
    try:
        with open(path, encoding="utf-8") as fh:
            return Vocab.from_json(fh.read())
    except OSError as exc:
        raise ParseError(f"vocab missing; run `gedkit prepare` first ({exc})", path=path) from exc


def _load_store(cfg: RunConfig):
    if cfg.integration == "none":
        return None
    store_path = cfg.paths.get("store")
    if not store_path:
        raise ValidationError("integration is enabled but paths.store is not set")
    return read_store(store_path)


def cmd_train(cfg: RunConfig, args) -> int:
    store = _load_store(cfg)
    vocab = _load_vocab(cfg)
    train_recs = _pick_annotator(_load_prepared(cfg, "train"), cfg.annotator)
    dev_recs = _pick_annotator(_load_prepared(cfg, "dev"), cfg.annotator)
    train_sents = _input_sentences(train_recs, vocab)
    dev_sents = _input_sentences(dev_recs, vocab)

    tcfg = cfg.train_config((store.layer_count, store.dim) if store else None)
    word_table = None
    if cfg.paths.get("vectors"):
        word_table = load_static_vectors(
            cfg.paths["vectors"], vocab, tcfg.model.word_dim, seed=cfg.seed
        )

    params, history = training.train(
        train_sents, dev_sents, tcfg, store=store, vocab=vocab, word_table=word_table,
        log=lambda msg: print(msg, flush=True),
    )
    ckpt = cfg.paths.get("checkpoint", os.path.join(cfg.out_dir, "model.ckpt"))
    save_checkpoint(params, tcfg, vocab, ckpt)
    with open(os.path.join(cfg.out_dir, "history.tsv"), "w", encoding="utf-8") as fh:
        fh.write(history.to_tsv())
    print(f"best epoch {history.best_epoch}; checkpoint written to {ckpt}")
    return EXIT_OK


def _open_checkpoint(cfg: RunConfig, args):
    ckpt = getattr(args, "checkpoint", None) or cfg.paths.get(
        "checkpoint", os.path.join(cfg.out_dir, "model.ckpt")
    )
    params, tcfg, vocab = load_checkpoint(ckpt)
    if tcfg.model.integration != cfg.integration and getattr(args, "integration", None) is None:
        # Checkpoint knows its own integration mode; follow it unless overridden.
        cfg.integration = tcfg.model.integration
    elif tcfg.model.integration != cfg.integration:
        raise CheckpointError(
            f"checkpoint was trained with integration={tcfg.model.integration!r}, "
            f"requested {cfg.integration!r}"
        )
    return params, tcfg, vocab


def _test_datasets(cfg: RunConfig) -> list[str]:
    names = [f"test_{t['name']}" for t in cfg.paths.get("tests", [])]
    if not names:
        raise ValidationError("config has no paths.tests datasets")
    return names


def cmd_predict(cfg: RunConfig, args) -> int:
    params, tcfg, vocab = _open_checkpoint(cfg, args)
    store = _load_store(cfg)
    out_lines = ["sid\tindex\ttoken\tp_incorrect\tlabel"]
    for name in _test_datasets(cfg):
        records = _pick_annotator(_load_prepared(cfg, name), cfg.annotator)
        sents = _input_sentences(records, vocab)
        for i in range(0, len(sents), 64):
            chunk = sents[i : i + 64]
            batch = training.batch_sentences(chunk)
            acts = forward(batch, params, store=store, training=False)
            p_inc = acts.label_distribution[:, :, 1]
            for b, sent in enumerate(chunk):
                for t in range(len(sent)):
                    p = p_inc[t, b]
                    label = "I" if p > 0.5 else "C"
                    out_lines.append(
                        f"{sent.sid}\t{t}\t{sent.tokens[t].surface}\t{p:.6f}\t{label}"
                    )
    text = "\n".join(out_lines) + "\n"
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _evaluate_datasets(cfg: RunConfig, params, vocab, store):
    """(dataset row name, EvalCounts) per test dataset and annotation set."""
    rows = []
    for name in _test_datasets(cfg):
        records = _load_prepared(cfg, name)
        annotators = sorted({r.annotator for r in records})
        for ann in annotators:
            selected = _pick_annotator(records, ann)
            sents = _input_sentences(selected, vocab)
            counts = evaluation.EvalCounts()
            for i in range(0, len(sents), 64):
                chunk = sents[i : i + 64]
                recs = selected[i : i + 64]
                batch = training.batch_sentences(chunk)
                preds = predict_batch(batch, params, store)
                for rec, sent, pred in zip(recs, chunk, preds):
                    types = corpus_mod.token_types(len(sent), rec.edits)
                    evaluation.accumulate(sent.gold_labels, pred, types, counts)
            label = name.removeprefix("test_")
            if len(annotators) > 1:
                label = f"{label}:a{ann}"
            rows.append((label, counts))
    return rows


def cmd_evaluate(cfg: RunConfig, args) -> int:
    params, tcfg, vocab = _open_checkpoint(cfg, args)
    store = _load_store(cfg)
    rows = _evaluate_datasets(cfg, params, vocab, store)
    score_rows = [(label, *evaluation.f_beta(c, beta=0.5)) for label, c in rows]
    sys.stdout.write(evaluation.render_scores(score_rows, cfg.fmt))
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, args) -> int:
    params, tcfg, vocab = _open_checkpoint(cfg, args)
    store = _load_store(cfg)
    rows = _evaluate_datasets(cfg, params, vocab, store)
    for label, counts in rows:
        sys.stdout.write(f"# {label}\n")
        sys.stdout.write(evaluation.render_typed(evaluation.recall_by_type(counts), cfg.fmt))
    merged = evaluation.merge_counts(c for _, c in rows)
    sys.stdout.write("# overall (micro-average)\n")
    sys.stdout.write(evaluation.render_typed(evaluation.recall_by_type(merged), cfg.fmt))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gedkit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON run config")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--integration", choices=["none", "input", "output"], default=None)
        sp.add_argument("--store", default=None, help="contextual vector store path")
        sp.add_argument("--annotator", type=int, default=None)
        sp.add_argument("--format", choices=["tsv", "table"], default=None)

    sp = sub.add_parser("prepare", help="parse corpora, build vocab, write artifacts")
    common(sp)
    sp.add_argument("--pseudo-store", action="store_true",
                    help="also emit a deterministic pseudo-contextual store")
    sp.add_argument("--pseudo-layers", type=int, default=1)
    sp.add_argument("--pseudo-dim", type=int, default=32)

    sp = sub.add_parser("train", help="train a labeler on the prepared corpus")
    common(sp)

    sp = sub.add_parser("predict", help="label a prepared test corpus")
    common(sp)
    sp.add_argument("--checkpoint", default=None)
    sp.add_argument("--output", default=None, help="write predictions here instead of stdout")

    sp = sub.add_parser("evaluate", help="P/R/F0.5 per test dataset")
    common(sp)
    sp.add_argument("--checkpoint", default=None)

    sp = sub.add_parser("analyze", help="recall by error type and edit operation")
    common(sp)
    sp.add_argument("--checkpoint", default=None)
    return p


_COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, args)
        return _COMMANDS[args.command](cfg, args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GedkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
