"""Command-line surface: generate | train | evaluate | explain.

Every command is deterministic given its flags and seed. Results go to
stdout (or --out); diagnostics and progress go to stderr. Exit code 0 means
the operation completed; 2 flags configuration/validation problems and 1
flags I/O failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig, load_run_config, resolved_config_lines
from .errors import CAttentionError
from .explain import (
    build_report,
    render_report_text,
    render_summary_text,
    report_to_json_dict,
    summarize_explanations,
    summary_to_json_dict,
    to_json,
)
from .features import (
    TagVocabulary,
    featurize,
    generate_synthetic_corpus,
    load_corpus,
    save_corpus,
    split_dataset,
)
from .models import CAttentionModel, load_checkpoint, save_checkpoint
from .training import evaluate, run_inference, train, write_epoch_log


def _eprint(*parts) -> None:
    print(*parts, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cattention",
        description="Explainable attention/CNN classification of tagged transcripts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic JSONL corpus")
    gen.add_argument("--out", required=True, help="output corpus path (JSON lines)")
    gen.add_argument("--n", type=int, required=True, help="number of records")
    gen.add_argument("--patient-fraction", type=float, default=0.85)
    gen.add_argument("--signal", type=float, default=0.8,
                     help="class signal strength in [0, 1]; 0 means identical classes")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--embedding-dim", type=int, default=64)

    tr = sub.add_parser("train", help="train a model from a TOML run config")
    tr.add_argument("--config", required=True, help="TOML run config path")

    ev = sub.add_parser("evaluate", help="score a checkpoint on a corpus split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--corpus", default=None,
                    help="corpus path (default: the path recorded in the checkpoint)")
    ev.add_argument("--split", choices=("train", "validation", "test"), default="test")
    ev.add_argument("--json", dest="json_out", default=None,
                    help="also write the metrics report as JSON to this path")
    ev.add_argument("--workers", type=int, default=1)

    ex = sub.add_parser("explain", help="emit explanation reports")
    ex.add_argument("--checkpoint", required=True)
    ex.add_argument("--corpus", default=None)
    target = ex.add_mutually_exclusive_group(required=True)
    target.add_argument("--record", default=None, help="explain one record by id")
    target.add_argument("--all", action="store_true",
                        help="explain every record in the split, plus a corpus summary")
    ex.add_argument("--split", choices=("train", "validation", "test", "all"), default="test")
    ex.add_argument("--json", action="store_true", help="emit JSON instead of text")
    ex.add_argument("--out", default=None, help="write output to this path instead of stdout")
    ex.add_argument("--top-n", type=int, default=3)
    ex.add_argument("--workers", type=int, default=1)
    return parser


def cmd_generate(args) -> int:
    records = generate_synthetic_corpus(
        n_records=args.n,
        patient_fraction=args.patient_fraction,
        signal_strength=args.signal,
        seed=args.seed,
        embedding_dim=args.embedding_dim,
    )
    save_corpus(records, args.out)
    patients = sum(r.label for r in records)
    print(f"wrote {len(records)} records to {args.out}: "
          f"patients={patients} controls={len(records) - patients}")
    return 0


def _featurize_split(records, run: RunConfig, model_config):
    return featurize(
        records,
        need_pos=model_config.uses_pos,
        need_emb=model_config.uses_emb,
        budget=run.utterance_budget,
        provider=run.embedding_provider,
        dim=run.embedding_dim,
        seed=run.seed,
    )


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    if not run.corpus:
        raise CAttentionError("config is missing data.corpus")
    _eprint("resolved configuration:")
    for line in resolved_config_lines(run):
        _eprint(f"  {line}" if line else "")
    model_config = run.model_config()
    records = load_corpus(run.corpus)
    _eprint(f"loaded {len(records)} records from {run.corpus}")
    splits = split_dataset(records, run.seed)
    train_set = _featurize_split(splits.train, run, model_config)
    val_set = _featurize_split(splits.validation, run, model_config)
    _eprint(f"split sizes: train={len(train_set)} validation={len(val_set)} "
            f"test={len(splits.test)}")
    model = CAttentionModel(model_config)
    result = train(model, train_set, val_set, run.train_config())
    write_epoch_log(result.history, run.epoch_log)
    save_checkpoint(model, run.checkpoint, metadata={"run_config": run.to_dict()})
    best = result.history[result.best_epoch - 1]
    print(f"best epoch {result.best_epoch}/{run.epochs}: "
          f"val_loss={best.val_loss:.6f} val_acc={best.val_acc:.4f}")
    _eprint(f"checkpoint written to {run.checkpoint}; epoch log to {run.epoch_log}")
    return 0


def _load_run_from_checkpoint(args) -> tuple[CAttentionModel, RunConfig]:
    model, metadata = load_checkpoint(args.checkpoint)
    run_dict = metadata.get("run_config", {})
    if args.corpus is not None:
        run_dict = dict(run_dict, corpus=args.corpus)
    run = RunConfig(**run_dict)
    if not run.corpus:
        raise CAttentionError(
            "no corpus recorded in the checkpoint; pass --corpus explicitly"
        )
    return model, run


def _select_split(records, run: RunConfig, name: str):
    if name == "all":
        return records
    return getattr(split_dataset(records, run.seed), name)


def cmd_evaluate(args) -> int:
    model, run = _load_run_from_checkpoint(args)
    records = load_corpus(run.corpus)
    subset = _select_split(records, run, args.split)
    features = _featurize_split(subset, run, model.config)
    report = evaluate(model, features, workers=args.workers)
    print(report.format_table())
    if args.json_out:
        Path(args.json_out).write_text(report.to_json() + "\n", encoding="utf-8")
        _eprint(f"metrics JSON written to {args.json_out}")
    return 0


def cmd_explain(args) -> int:
    model, run = _load_run_from_checkpoint(args)
    records = load_corpus(run.corpus)
    vocab = TagVocabulary()

    if args.record is not None:
        matching = [r for r in records if r.id == args.record]
        if not matching:
            known = ", ".join(r.id for r in records[:20])
            more = "" if len(records) <= 20 else f", ... ({len(records)} total)"
            raise CAttentionError(
                f"record {args.record!r} not found; available ids: {known}{more}"
            )
        subset = matching
    else:
        subset = _select_split(records, run, args.split)

    features = _featurize_split(subset, run, model.config)
    outputs = run_inference(model, features, workers=args.workers)
    reports = [
        build_report(record, probs, trace, model.config, vocab, top_n=args.top_n)
        for record, (probs, trace) in zip(subset, outputs)
    ]

    chunks = []
    if args.json:
        chunks.extend(to_json(report_to_json_dict(r)) for r in reports)
    else:
        chunks.extend(render_report_text(r) for r in reports)
    if args.all:
        summary = summarize_explanations([trace for _, trace in outputs], model.config, vocab)
        if args.json:
            chunks.append(to_json(summary_to_json_dict(summary)))
        else:
            chunks.append(render_summary_text(summary))

    text = ("\n" if args.json else "\n\n").join(chunks) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _eprint(f"explanations written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CAttentionError as exc:
        _eprint(f"error: {exc}")
        return 2
    except OSError as exc:
        _eprint(f"i/o error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
