"""Manifest-driven stages: generate, detect, keyframes, caption, evaluate, train.

Each stage reads the manifest, works per sample (optionally in a thread
pool), then writes all artifact updates in one locked rewrite.  A stage is
skipped when its artifacts exist and ``run.json`` shows they were produced
under the same stage settings, unless ``force`` is set.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import keyframe as kf
from .caption import QueryConfig, build_query, caption, make_backend
from .cursor import DEFAULT_THRESHOLD, HttpCursorDetector, TemplateCursorDetector, detect_sequence, format_fixes, parse_fixes
from .datasets import (
    SampleRecord,
    artifact_dir,
    load_manifest,
    relpath,
    update_artifacts,
    write_manifest,
)
from .frame import Frame, frame_paths, load_frames, save_frame, save_frames
from .metric import aggregate, category_of, format_report, score_sample
from .prompting import BACKEND_SIZE, S_BOX_DEFAULT, S_BOX_PRESETS, make_prompted
from .scene import sample_mix, write_keylog

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
RUN_NAME = "run.json"


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    s_box: int = S_BOX_DEFAULT
    n_samples: int = kf.N_SAMPLES  # frames sampled per video
    strategy: str = "heuristic"
    backend: dict[str, Any] = field(default_factory=lambda: {"kind": "oracle"})
    matcher: str = "builtin"
    seed: int = 0
    count: int = 20  # videos made by generate
    num_frames: int = 20
    split: str = "test"
    threshold: float = DEFAULT_THRESHOLD
    cursor_detector_url: str | None = None
    head_path: str | None = None
    resize: tuple[int, int] = BACKEND_SIZE
    crop: bool = True
    annotate: bool = True
    dump_prompts: bool = False
    epochs: int = 60
    lr: float = 1e-3

    def __post_init__(self):
        if self.s_box <= 0:
            raise ValueError("s_box must be positive")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if self.strategy not in kf.STRATEGIES:
            raise ValueError(f"strategy must be one of {kf.STRATEGIES}")
        if self.matcher != "builtin":
            raise ValueError("only the builtin matcher runs offline; use the judge API for LLM scoring")
        object.__setattr__(self, "resize", tuple(self.resize))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["resize"] = list(self.resize)
        return d

    def hash(self, keys: Iterable[str] | None = None) -> str:
        d = self.to_dict()
        if keys is not None:
            d = {k: d[k] for k in keys}
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


# settings each stage's output depends on
STAGE_KEYS = {
    "generate": ("seed", "count", "num_frames", "split"),
    "detect": ("n_samples", "threshold", "cursor_detector_url"),
    "detect_keyframes": ("n_samples", "strategy", "threshold", "cursor_detector_url"),
    "keyframes": ("n_samples", "strategy", "s_box", "head_path", "threshold", "cursor_detector_url"),
    "caption": ("n_samples", "strategy", "s_box", "backend", "resize", "crop", "annotate", "head_path",
                "threshold", "cursor_detector_url"),
    "evaluate": ("n_samples", "strategy", "s_box", "backend", "resize", "crop", "annotate", "matcher",
                 "head_path", "threshold", "cursor_detector_url"),
}


# ---------------------------------------------------------------- run log


def read_run(root: Path) -> dict:
    p = root / RUN_NAME
    return json.loads(p.read_text()) if p.exists() else {"stages": {}}


def stamp(root: Path, stage: str, config: PipelineConfig, extra: dict | None = None) -> None:
    run = read_run(root)
    entry = {"hash": config.hash(STAGE_KEYS.get(stage)), "config_hash": config.hash(), "seed": config.seed}
    entry.update(extra or {})
    run["stages"][stage] = entry
    run["config"] = config.to_dict()
    run["config_hash"] = config.hash()
    (root / RUN_NAME).write_text(json.dumps(run, indent=2, sort_keys=True) + "\n")


def invalidate(root: Path, stage: str) -> None:
    run = read_run(root)
    if run["stages"].pop(stage, None) is not None:
        (root / RUN_NAME).write_text(json.dumps(run, indent=2, sort_keys=True) + "\n")


def is_current(root: Path, stage: str, config: PipelineConfig) -> bool:
    return read_run(root)["stages"].get(stage, {}).get("hash") == config.hash(STAGE_KEYS.get(stage))


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- generate


def generate(root: str | Path, config: PipelineConfig, jobs: int = 1) -> list[SampleRecord]:
    """Render ``config.count`` synthetic videos under ``root`` and write the manifest."""
    root = Path(root)
    manifest = root / MANIFEST_NAME
    specs = sample_mix(config.count, seed=config.seed, num_frames=config.num_frames)

    def one(spec) -> SampleRecord:
        sample = spec.run()
        sdir = root / "samples" / spec.sample_id
        save_frames(sample.frames, sdir / "frames")
        write_keylog(sample.keylog, sdir / "keylog.tsv")
        return SampleRecord(
            id=spec.sample_id, split=config.split, frames_dir=relpath(sdir / "frames", manifest),
            keylog_path=relpath(sdir / "keylog.tsv", manifest), gt_caption=sample.gt_caption,
            action_class=sample.action_class.value, source="synthetic", gt_keyframes=sample.gt_keyframes,
        )

    records = _map(one, specs, jobs)
    write_manifest(records, manifest)
    stamp(root, "generate", config, {"count": len(records)})
    return records


# ---------------------------------------------------------------- shared helpers


def _sampled(root: Path, rec: SampleRecord, n: int) -> tuple[list[int], int]:
    count = len(frame_paths(root / rec.frames_dir))
    if count == 0:
        raise StageError("load", f"{rec.id}: no frames in {rec.frames_dir}")
    return kf.sample_indices(count, n), count


def _detector(config: PipelineConfig):
    if config.cursor_detector_url:
        return HttpCursorDetector(config.cursor_detector_url)
    return TemplateCursorDetector(threshold=config.threshold)


def _centers(root: Path, rec: SampleRecord) -> dict[int, tuple[int, int]]:
    if rec.cursor_fixes is None:
        raise StageError("cursor", f"{rec.id}: no cursor fixes; run detect-cursor first")
    path = root / rec.cursor_fixes
    if not path.exists():
        raise StageError("cursor", f"{rec.id}: cursor fixes file {rec.cursor_fixes} missing")
    return {f.frame_idx: f.center for f in parse_fixes(path.read_text())}


# ---------------------------------------------------------------- detect


def detect_cursor(manifest: str | Path, config: PipelineConfig, jobs: int = 1, force: bool = False) -> list[SampleRecord]:
    manifest = Path(manifest)
    root = manifest.parent
    records = load_manifest(manifest)
    if not force and is_current(root, "detect", config) and all(r.cursor_fixes for r in records):
        log.info("detect: up to date, skipping")
        return records
    detector = _detector(config)

    def one(rec: SampleRecord) -> tuple[str, dict]:
        idx, _ = _sampled(root, rec, config.n_samples)
        uniq = sorted(set(idx))
        frames = load_frames(root / rec.frames_dir, uniq)
        try:
            fixes = detect_sequence(frames, detector=detector)
        except Exception as exc:
            raise StageError("detect", f"{rec.id}: {exc}") from exc
        out = artifact_dir(manifest, rec.id) / "cursor.tsv"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(format_fixes(fixes))
        return rec.id, {"cursor_fixes": relpath(out, manifest)}

    updates = dict(_map(one, records, jobs))
    records = update_artifacts(manifest, updates)
    invalidate(root, "detect_keyframes")
    stamp(root, "detect", config, {"samples": len(records)})
    return records


# ---------------------------------------------------------------- keyframes


def _selection(root: Path, rec: SampleRecord, config: PipelineConfig, head) -> kf.KeyframeSelection:
    idx, _ = _sampled(root, rec, config.n_samples)
    if config.strategy == "start_end":
        return kf.start_end_keyframes(config.n_samples)
    if config.strategy == "ground_truth":
        if rec.gt_keyframes is None:
            raise StageError("keyframes", f"{rec.id}: no gt_keyframes for the ground_truth strategy")
        return kf.ground_truth_keyframes(rec.gt_keyframes, idx)
    centers = _centers(root, rec)
    frames = {i: f for i, f in zip(sorted(set(idx)), load_frames(root / rec.frames_dir, sorted(set(idx))))}
    sampled = [frames[i] for i in idx]
    cs = [centers[i] for i in idx]
    if config.strategy == "heuristic":
        return kf.heuristic_from_frames(sampled, cs, config.s_box)
    feats = sample_features(sampled, cs, config.s_box)
    return kf.select_keyframes(kf.score_frames(head, feats), "model")


def sample_features(frames: Sequence[Frame], centers: Sequence[tuple[int, int]], s_box: int) -> np.ndarray:
    return kf.embed_all([make_prompted(f, c, s_box).cropped for f, c in zip(frames, centers)])


def _load_head(config: PipelineConfig):
    if config.strategy != "model":
        return None
    if not config.head_path:
        raise StageError("keyframes", "strategy 'model' needs head_path (train-keyframe-head writes one)")
    if not Path(config.head_path).exists():
        raise StageError("keyframes", f"head weights {config.head_path} not found")
    return kf.load_head(config.head_path)


def keyframes(manifest: str | Path, config: PipelineConfig, jobs: int = 1, force: bool = False) -> list[SampleRecord]:
    manifest = Path(manifest)
    root = manifest.parent
    records = load_manifest(manifest)
    if not force and is_current(root, "keyframes", config) and all(r.keyframes for r in records):
        log.info("keyframes: up to date, skipping")
        return records
    head = _load_head(config)

    def one(rec: SampleRecord) -> tuple[str, dict]:
        sel = _selection(root, rec, config, head)
        return rec.id, {"keyframes": {"s": sel.s, "e": sel.e, "n": config.n_samples, "strategy": sel.strategy}}

    records = update_artifacts(manifest, dict(_map(one, records, jobs)))
    stamp(root, "keyframes", config, {"samples": len(records)})
    return records


# ---------------------------------------------------------------- caption


def caption_stage(manifest: str | Path, config: PipelineConfig, jobs: int = 1, force: bool = False,
                  client=None) -> list[SampleRecord]:
    manifest = Path(manifest)
    root = manifest.parent
    records = load_manifest(manifest)
    if not force and is_current(root, "caption", config) and all(r.prediction for r in records):
        log.info("caption: up to date, skipping")
        return records
    backend = make_backend(config.backend, {r.id: r.gt_caption for r in records}, client=client)
    qcfg = QueryConfig(resize=config.resize, crop=config.crop, annotate=config.annotate)

    def one(rec: SampleRecord) -> tuple[str, dict]:
        if not rec.keyframes:
            raise StageError("caption", f"{rec.id}: no keyframes; run keyframes first")
        idx, _ = _sampled(root, rec, config.n_samples)
        s_raw, e_raw = idx[rec.keyframes["s"]], idx[rec.keyframes["e"]]
        centers = _centers(root, rec)
        fs, fe = load_frames(root / rec.frames_dir, [s_raw, e_raw])
        ps = make_prompted(fs, centers[s_raw], config.s_box)
        pe = make_prompted(fe, centers[e_raw], config.s_box)
        query = build_query(ps, pe, qcfg, meta={"sample_id": rec.id, "strategy": rec.keyframes["strategy"]})
        out = artifact_dir(manifest, rec.id)
        out.mkdir(parents=True, exist_ok=True)
        if config.dump_prompts:
            for tag, p in (("s", ps), ("e", pe)):
                save_frame(p.annotated, out / f"prompt_{tag}_annotated.png")
                save_frame(p.cropped, out / f"prompt_{tag}_cropped.png")
        try:
            res = caption(backend, query)
        except Exception as exc:
            raise StageError("caption", f"{rec.id}: {exc}") from exc
        (out / "caption.json").write_text(json.dumps(
            {"text": res.text, "backend": res.backend_id, "latency_ms": res.latency_ms}, sort_keys=True) + "\n")
        return rec.id, {"prediction": res.text}

    records = update_artifacts(manifest, dict(_map(one, records, jobs)))
    stamp(root, "caption", config, {"samples": len(records)})
    return records


# ---------------------------------------------------------------- evaluate


def evaluate(manifest: str | Path, config: PipelineConfig, out_dir: str | Path | None = None):
    manifest = Path(manifest)
    root = manifest.parent
    records = load_manifest(manifest)
    missing = [r.id for r in records if not r.prediction]
    if missing:
        raise StageError("evaluate", f"missing prediction artifact for {len(missing)} samples, e.g. {missing[0]}")
    if not records:
        raise StageError("evaluate", "manifest is empty")
    per_sample = []
    entries = []
    updates = {}
    for r in records:
        mv, iou = score_sample(r.prediction, r.gt_caption)
        entries.append((category_of(r.gt_caption), mv))
        per_sample.append({"id": r.id, "bits": list(mv.bits), "union": mv.union_size, "iou": iou})
        updates[r.id] = {"score": iou}
    report = aggregate(entries)
    update_artifacts(manifest, updates)
    out = Path(out_dir) if out_dir else root
    out.mkdir(parents=True, exist_ok=True)
    results = {
        "config_hash": config.hash(),
        "per_category": report.per_category,
        "n_samples": report.n_samples,
        "average": report.average,
        "samples": per_sample,
    }
    (out / "results.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    (out / "report.txt").write_text(format_report(report))
    stamp(root, "evaluate", config, {"average": report.average})
    return report


# ---------------------------------------------------------------- end to end


def run_pipeline(root: str | Path, config: PipelineConfig, jobs: int = 1, force: bool = False, client=None):
    """generate (when no manifest) -> detect -> keyframes -> caption -> evaluate."""
    root = Path(root)
    manifest = root / MANIFEST_NAME
    if force or not manifest.exists() or not is_current(root, "generate", config):
        generate(root, config, jobs)
        force = True  # fresh samples invalidate every later artifact
    if config.strategy in ("ground_truth", "start_end"):
        # only the two chosen frames need a cursor fix
        keyframes(manifest, config, jobs, force)
        detect_keyframes_only(manifest, config, jobs, force)
    else:
        detect_cursor(manifest, config, jobs, force)
        keyframes(manifest, config, jobs, force)
    caption_stage(manifest, config, jobs, force, client=client)
    return evaluate(manifest, config)


def detect_keyframes_only(manifest: str | Path, config: PipelineConfig, jobs: int = 1,
                          force: bool = False) -> list[SampleRecord]:
    """Cursor fixes for the selected keyframes only; the full sampled set when none are selected."""
    manifest = Path(manifest)
    root = manifest.parent
    records = load_manifest(manifest)
    if not force and is_current(root, "detect_keyframes", config) and all(r.cursor_fixes for r in records):
        return records
    detector = _detector(config)

    def one(rec: SampleRecord) -> tuple[str, dict]:
        idx, _ = _sampled(root, rec, config.n_samples)
        wanted = sorted({idx[rec.keyframes["s"]], idx[rec.keyframes["e"]]}) if rec.keyframes else sorted(set(idx))
        frames = load_frames(root / rec.frames_dir, wanted)
        try:
            fixes = detect_sequence(frames, detector=detector)
        except Exception as exc:
            raise StageError("detect", f"{rec.id}: {exc}") from exc
        out = artifact_dir(manifest, rec.id) / "cursor.tsv"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(format_fixes(fixes))
        return rec.id, {"cursor_fixes": relpath(out, manifest)}

    records = update_artifacts(manifest, dict(_map(one, records, jobs)))
    invalidate(root, "detect")
    stamp(root, "detect_keyframes", config, {"samples": len(records)})
    return records


# ---------------------------------------------------------------- training


def training_set(manifest: str | Path, config: PipelineConfig, split: str) -> list[tuple[np.ndarray, tuple[int, int]]]:
    """(features, sampled gt keyframes) per record of ``split``, using stored cursor fixes."""
    manifest = Path(manifest)
    root = manifest.parent
    out = []
    for rec in load_manifest(manifest):
        if rec.split != split:
            continue
        if rec.gt_keyframes is None:
            raise StageError("train", f"{rec.id}: no gt_keyframes")
        idx, _ = _sampled(root, rec, config.n_samples)
        centers = _centers(root, rec)
        uniq = sorted(set(idx))
        frames = dict(zip(uniq, load_frames(root / rec.frames_dir, uniq)))
        feats = sample_features([frames[i] for i in idx], [centers[i] for i in idx], config.s_box)
        out.append((feats, kf.to_sampled(rec.gt_keyframes, idx)))
    return out


def top2_accuracy(head, samples: Sequence[tuple[np.ndarray, tuple[int, int]]]) -> float:
    if not samples:
        return float("nan")
    hits = 0
    for feats, gt in samples:
        sel = kf.select_keyframes(kf.score_frames(head, feats))
        hits += (sel.s, sel.e) == tuple(gt)
    return hits / len(samples)


def check_s_box(manifest: str | Path, s_box: int) -> None:
    """Fail early when ``s_box`` exceeds the smaller side of any sample's frames."""
    from PIL import Image

    manifest = Path(manifest)
    for rec in load_manifest(manifest):
        paths = frame_paths(manifest.parent / rec.frames_dir)
        if not paths:
            raise StageError("load", f"{rec.id}: no frames in {rec.frames_dir}")
        with Image.open(paths[0]) as im:
            w, h = im.size
        if s_box > min(w, h):
            raise StageError("prompt", f"{rec.id}: s_box {s_box} exceeds frame size {w}x{h}")
