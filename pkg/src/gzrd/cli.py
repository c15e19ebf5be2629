"""Command line entry point: ``gzrd {simulate,train,eval,detect,inspect}``.

Exit codes: 0 success, 2 usage or configuration, 3 bad data or file,
4 numeric failure.  Seeds come from ``--seed``, then the manifest, then the
``GZRD_SEED`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .checkpoint import MAGIC, load_checkpoint, read_header, save_checkpoint
from .data import MODALITIES, TASK_CLASSES, iter_records, read_clips, read_sequences, write_sequence
from .errors import ConfigError, DataError, GzrdError
from .geometry import gaze_span, project_window
from .metrics import ScoredExample, binary_summary, breakdown, multiclass_confusion, pr_curve, write_json, write_pr_csv
from .model import param_count, param_shapes, preset
from .rng import default_seed
from .sim import Manifest, class_counts, gen_alternating, gen_dataset
from .stream import DetectorConfig, detect, latency, windowed_accuracy
from .trainer import TrainConfig, batched_logits, target, train

BREAKDOWN_KEYS = ("scenario", "medium", "mode", "direction", "activity", "gaze_span_bucket")
EXIT_DATA = 3


def _echo(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _config_line(name: str, cfg: dict) -> None:
    """Effective configuration, on stderr so stdout stays machine-readable."""
    print(f"{name} config: {json.dumps(cfg, sort_keys=True)}", file=sys.stderr)


def _modalities(text: str | None) -> tuple | None:
    if text is None:
        return None
    mods = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in mods if m not in MODALITIES]
    if bad or not mods:
        raise ConfigError(f"modalities must be a comma list drawn from {', '.join(MODALITIES)}")
    return tuple(m for m in MODALITIES if m in mods)


# -- simulate ------------------------------------------------------------------------------
def cmd_simulate(args) -> int:
    if args.alternating is not None:
        if len(args.paths) != 1:
            raise ConfigError("with --alternating give only the output path")
        seed = args.seed if args.seed is not None else default_seed()
        _config_line("simulate", {"alternating": args.alternating, "duration": args.duration, "seed": seed})
        seq = gen_alternating(args.alternating, args.duration, seed)
        write_sequence(args.paths[0], seq)
        _echo({"id": seq.id, "duration": seq.duration, "change_points": [[t, s] for t, s in seq.change_points]})
        return 0
    if len(args.paths) != 2:
        raise ConfigError("usage: gzrd simulate MANIFEST OUT.jsonl")
    manifest_path, out = args.paths
    try:
        obj = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{manifest_path}: manifest is not valid JSON ({exc.msg})") from exc
    if args.seed is not None:
        obj["seed"] = args.seed
    elif "seed" not in obj:
        obj["seed"] = default_seed()
    manifest = Manifest.from_dict(obj)
    _config_line("simulate", manifest.to_dict())
    clips = gen_dataset(manifest, path=out)
    _echo({"clips": len(clips), "by_label": class_counts(clips), "by_mode": class_counts(clips, lambda c: c.meta.mode),
           "by_medium": class_counts(clips, lambda c: c.meta.medium)})
    return 0


# -- train -----------------------------------------------------------------------------------
def cmd_train(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    kw = {}
    if args.modalities:
        kw["modalities"] = _modalities(args.modalities)
    model_cfg = preset(args.model, args.task, **kw)
    tc = TrainConfig(
        lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=seed, rotate=not args.no_rotate,
        flip=args.flip, gaze_noise=args.gaze_noise, dropout=not args.no_dropout, task=args.task,
    )
    _config_line("model", model_cfg.to_dict())
    _config_line("train", asdict(tc))
    print(f"parameters: {param_count(model_cfg)}", file=sys.stderr)
    train_clips = read_clips(args.train)
    val_clips = read_clips(args.val) if args.val else []
    out = Path(args.out)
    epoch_dir = out.with_name(out.stem + "-epochs")
    model, report = train(train_clips, val_clips, model_cfg, tc, out_dir=epoch_dir)
    save_checkpoint(model, out, {"best_epoch": report.best_epoch})
    report_path = Path(args.report) if args.report else out.with_suffix(".report.json")
    report.write(report_path)
    last = report.epochs[-1]
    _echo({
        "checkpoint": str(out),
        "report": str(report_path),
        "parameters": param_count(model_cfg),
        "best_epoch": report.best_epoch,
        "final_loss": last.loss,
        "final_train_acc": last.train_acc,
        "final_val_acc": last.val_acc,
    })
    return 0


# -- eval ------------------------------------------------------------------------------------
def scored_examples(model, clips, modalities=None) -> list:
    logits = batched_logits(model, clips, modalities)
    z = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    task = model.cfg.task
    out = []
    for c, p in zip(clips, probs):
        meta = {**c.meta.to_meta(), "scenario": c.meta.tag}
        span = gaze_span(project_window(c.gaze)) if c.gaze is not None else None
        score = float(p[1]) if task == "binary" else p
        out.append(ScoredExample(score, target(c, task), meta, span))
    return out


def cmd_eval(args) -> int:
    model = load_checkpoint(args.ckpt)
    clips = read_clips(args.test)
    mods = _modalities(args.modalities)
    _config_line("eval", {"checkpoint": args.ckpt, "modalities": mods or list(model.cfg.modalities), "threshold": args.threshold})
    examples = scored_examples(model, clips, mods)
    if model.cfg.task == "binary":
        result = binary_summary(examples, args.threshold)
        if args.pr:
            write_pr_csv(args.pr, pr_curve(examples))
    else:
        if args.pr:
            raise ConfigError("--pr applies to binary models only")
        result = {"n": len(examples), **multiclass_confusion(examples, model.cfg.n_classes).to_dict(TASK_CLASSES[model.cfg.task])}
    for key in args.breakdown or []:
        if model.cfg.task != "binary":
            raise ConfigError("--breakdown applies to binary models only")
        result.setdefault("breakdown", {})[key] = breakdown(examples, key, args.threshold)
    if args.json:
        write_json(args.json, result)
    _echo(result)
    return 0


# -- detect ----------------------------------------------------------------------------------
def cmd_detect(args) -> int:
    model = load_checkpoint(args.ckpt)
    cfg = DetectorConfig(
        window=model.cfg.duration, stride=args.stride, threshold=args.threshold,
        hysteresis=args.hysteresis, max_match=args.max_match,
    )
    _config_line("detect", asdict(cfg))
    sequences = read_sequences(args.stream)
    if not sequences:
        raise DataError(f"{args.stream} holds no sequences")
    reports = []
    for seq in sequences:
        trace = detect(seq, model, cfg)
        if args.trace:
            path = Path(args.trace)
            if len(sequences) > 1:
                path = path.with_name(f"{path.stem}-{seq.id}{path.suffix}")
            trace.write_csv(path)
        lat = latency(trace, seq.change_points, cfg.max_match)
        acc = windowed_accuracy(trace, seq.change_points, seq.initial_state)
        reports.append({"id": seq.id, **lat.to_dict(), "detected": [[t, s] for t, s in trace.change_points], "window_metrics": acc})
    matched = [x for r in reports for x in r["latencies"] if x is not None]
    summary = {
        "sequences": reports,
        "mean_latency": float(np.mean(matched)) if matched else None,
        "matched": len(matched),
        "misses": sum(r["misses"] for r in reports),
        "false_alarms": sum(r["false_alarms"] for r in reports),
        "config": asdict(cfg),
    }
    if args.report:
        Path(args.report).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _echo(summary)
    return 0


# -- inspect ---------------------------------------------------------------------------------
def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        model = load_checkpoint(path)  # full validation, not just the header
        header = read_header(path)
        _echo({
            "kind": "checkpoint",
            "config": model.cfg.to_dict(),
            "precision": header["precision"],
            "parameters": param_count(model.cfg),
            "shapes": {k: list(v) for k, v in param_shapes(model.cfg).items()},
            "extra": header.get("extra", {}),
        })
        return 0
    records = list(iter_records(path))
    seqs = [r for r in records if "change_points" in r]
    clips = [r for r in records if "change_points" not in r]
    labels, modal = {}, {m: 0 for m in MODALITIES}
    for r in clips:
        if r.get("label") not in (0, 1):
            raise DataError(f"record {r.get('id')!r} has no binary label")
        name = "reading" if r["label"] == 1 else "not_reading"
        labels[name] = labels.get(name, 0) + 1
        for m in MODALITIES:
            modal[m] += r.get(m) is not None
    _echo({
        "kind": "jsonl",
        "records": len(records),
        "clips": len(clips),
        "by_label": labels,
        "with_modality": modal,
        "sequences": [{"id": s.get("id"), "change_points": len(s["change_points"])} for s in seqs],
    })
    return 0


# -- parser ----------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gzrd", description="Reading detection from gaze, IMU and scene crops.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a labelled clip dataset or an alternating recording")
    s.add_argument("paths", nargs="+", metavar="PATH", help="MANIFEST OUT.jsonl, or OUT.jsonl with --alternating")
    s.add_argument("--alternating", type=int, metavar="ID", help="write one alternating recording from template ID")
    s.add_argument("--duration", type=float, default=60.0, help="length of the alternating recording in seconds")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("train")
    t.add_argument("val", nargs="?")
    t.add_argument("--model", choices=("xs", "s", "m", "l"), default="m")
    t.add_argument("--task", choices=tuple(TASK_CLASSES), default="binary")
    t.add_argument("--modalities", help="comma list, default all three")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--gaze-noise", type=float, default=0.0, metavar="SIGMA")
    t.add_argument("--no-rotate", action="store_true")
    t.add_argument("--flip", action="store_true")
    t.add_argument("--no-dropout", action="store_true")
    t.add_argument("--out", required=True, help="best checkpoint path")
    t.add_argument("--report", help="report JSON path (default next to the checkpoint)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a labelled dataset")
    e.add_argument("test")
    e.add_argument("ckpt")
    e.add_argument("--breakdown", action="append", choices=BREAKDOWN_KEYS)
    e.add_argument("--pr", metavar="CSV")
    e.add_argument("--json", metavar="PATH")
    e.add_argument("--modalities")
    e.add_argument("--threshold", type=float, default=0.5)
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("detect", help="run the sliding-window detector over recordings")
    d.add_argument("stream")
    d.add_argument("ckpt")
    d.add_argument("--stride", type=float, default=0.1)
    d.add_argument("--hysteresis", type=int, default=3)
    d.add_argument("--threshold", type=float, default=0.5)
    d.add_argument("--max-match", type=float, default=5.0)
    d.add_argument("--trace", metavar="CSV")
    d.add_argument("--report", metavar="JSON")
    d.set_defaults(func=cmd_detect)

    i = sub.add_parser("inspect", help="describe a checkpoint or JSONL file")
    i.add_argument("path")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # usage errors exit 2 here
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except GzrdError as exc:
        print(f"gzrd {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"gzrd {args.command}: no such file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"gzrd {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
