"""``cursorcap`` command line: generate, run stages, train the keyframe head, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

from . import keyframe as kf
from .datasets import ManifestCorrupt, format_stats, load_manifest, stats, validate
from .metric import format_report
from .pipeline import (
    MANIFEST_NAME,
    PipelineConfig,
    StageError,
    caption_stage,
    check_s_box,
    detect_cursor,
    evaluate,
    generate,
    is_current,
    keyframes,
    run_pipeline,
    top2_accuracy,
    training_set,
)
from .prompting import S_BOX_PRESETS

log = logging.getLogger("cursorcap")

BACKEND_KINDS = ("oracle", "stub", "remote")


def load_config(path: str | Path | None) -> dict[str, Any]:
    """TOML settings; a ``[pipeline]`` table is used when present, else the top level."""
    if path is None:
        return {}
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    data = data.get("pipeline", data)
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return data


def build_config(args: argparse.Namespace) -> PipelineConfig:
    settings = load_config(args.config)
    flags = {
        "seed": args.seed,
        "s_box": args.s_box,
        "strategy": args.keyframe_strategy,
        "head_path": args.head,
        "n_samples": args.n_samples,
        "count": getattr(args, "count", None),
        "num_frames": getattr(args, "num_frames", None),
        "split": getattr(args, "split", None),
    }
    settings.update({k: v for k, v in flags.items() if v is not None})
    if args.backend is not None:
        backend = dict(settings.get("backend", {}))
        backend["kind"] = args.backend
        settings["backend"] = backend
    if args.dump_prompts:
        settings["dump_prompts"] = True
    if args.no_crop:
        settings["crop"] = False
    if args.no_annotate:
        settings["annotate"] = False
    return PipelineConfig(**settings)


def _manifest(args: argparse.Namespace) -> Path:
    if args.manifest is None:
        raise StageError("config", "--manifest is required for this command")
    return Path(args.manifest)


# ---------------------------------------------------------------- commands


def cmd_generate(args, config: PipelineConfig) -> int:
    root = Path(args.out)
    records = generate(root, config, args.jobs)
    print(f"wrote {len(records)} samples to {root / MANIFEST_NAME}")
    return 0


def cmd_detect_cursor(args, config: PipelineConfig) -> int:
    records = detect_cursor(_manifest(args), config, args.jobs, args.force)
    print(f"cursor fixes for {len(records)} samples")
    return 0


def cmd_keyframes(args, config: PipelineConfig) -> int:
    manifest = _manifest(args)
    check_s_box(manifest, config.s_box)
    records = keyframes(manifest, config, args.jobs, args.force)
    for r in records:
        print(f"{r.id}\t{r.keyframes['s']}\t{r.keyframes['e']}\t{r.keyframes['strategy']}")
    return 0


def cmd_caption(args, config: PipelineConfig) -> int:
    manifest = _manifest(args)
    check_s_box(manifest, config.s_box)
    records = caption_stage(manifest, config, args.jobs, args.force)
    print(f"captions for {len(records)} samples")
    return 0


def cmd_evaluate(args, config: PipelineConfig) -> int:
    report = evaluate(_manifest(args), config, args.out)
    print(format_report(report), end="")
    return 0


def cmd_pipeline(args, config: PipelineConfig) -> int:
    root = Path(args.out)
    report = run_pipeline(root, config, args.jobs, args.force)
    print(format_report(report), end="")
    return 0


def cmd_train_keyframe_head(args, config: PipelineConfig) -> int:
    manifest = _manifest(args)
    root = manifest.parent
    records = load_manifest(manifest)
    if not (is_current(root, "detect", config) and all(r.cursor_fixes for r in records)):
        detect_cursor(manifest, config, args.jobs, args.force)
    train = training_set(manifest, config, "train")
    if not train:
        raise StageError("train", "manifest has no train-split samples")
    head = kf.train_head(train, epochs=config.epochs, lr=config.lr, seed=config.seed)
    out = Path(args.out or (root / "keyframe_head.bin"))
    kf.save_head(head, out)
    test = training_set(manifest, config, "test")
    report = {"weights": str(out), "train_samples": len(train), "final_loss": head.final_loss,
              "train_top2": top2_accuracy(head, train)}
    if test:
        report.update(test_samples=len(test), test_top2=top2_accuracy(head, test))
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_stats(args, config: PipelineConfig) -> int:
    manifest = _manifest(args)
    records = load_manifest(manifest, check_files=False)
    print(format_stats(stats(records)), end="")
    for problem in validate(records, manifest.parent):
        print(f"warning: {problem}", file=sys.stderr)
    return 0


COMMANDS = {
    "generate": (cmd_generate, "render synthetic action videos and write a manifest"),
    "detect-cursor": (cmd_detect_cursor, "locate the cursor on every sampled frame"),
    "keyframes": (cmd_keyframes, "select start/end keyframes with the chosen strategy"),
    "caption": (cmd_caption, "query the caption backend with the prompted keyframes"),
    "evaluate": (cmd_evaluate, "score predictions against ground-truth captions"),
    "pipeline": (cmd_pipeline, "generate (if needed), detect, keyframes, caption, evaluate"),
    "train-keyframe-head": (cmd_train_keyframe_head, "fit the keyframe scoring head on the train split"),
    "stats": (cmd_stats, "split/class/source counts of a manifest"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="sample manifest (JSONL)")
    common.add_argument("--config", help="TOML settings file; flags override it")
    common.add_argument("--jobs", type=int, default=1, help="samples processed in parallel")
    common.add_argument("--seed", type=int)
    common.add_argument("--s-box", type=int, choices=S_BOX_PRESETS, help="prompt box side in pixels")
    common.add_argument("--keyframe-strategy", choices=kf.STRATEGIES)
    common.add_argument("--backend", choices=BACKEND_KINDS, help="caption backend kind")
    common.add_argument("--head", help="scoring-head weights for --keyframe-strategy model")
    common.add_argument("--n-samples", type=int, help="frames sampled per video")
    common.add_argument("--dump-prompts", action="store_true", help="save annotated and cropped keyframes")
    common.add_argument("--no-crop", action="store_true", help="omit the cursor crops from the query")
    common.add_argument("--no-annotate", action="store_true", help="omit the green box from full frames")
    common.add_argument("--force", action="store_true", help="recompute stages even when up to date")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cursorcap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name in ("generate", "pipeline"):
            p.add_argument("--out", required=True, help="directory for samples, manifest and run log")
            p.add_argument("--count", type=int)
            p.add_argument("--num-frames", type=int)
            p.add_argument("--split", choices=("train", "test"))
        elif name in ("evaluate", "train-keyframe-head"):
            p.add_argument("--out", help="results directory (evaluate) or weights file (train)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    stage = args.command
    try:
        config = build_config(args)
        log.info("command=%s config_hash=%s seed=%d", args.command, config.hash(), config.seed)
        fn, _ = COMMANDS[args.command]
        return fn(args, config)
    except StageError as exc:
        stage = exc.stage
        err = exc
    except (ManifestCorrupt, OSError, ValueError, KeyError, RuntimeError, LookupError) as exc:
        err = exc
    print(json.dumps({"error": type(err).__name__, "stage": stage, "message": str(err)}), file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
