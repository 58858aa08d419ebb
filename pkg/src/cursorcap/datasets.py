"""JSONL sample manifests, artifact updates, validation and split statistics."""

from __future__ import annotations

import fcntl
import json
import os
import tempfile
from collections import Counter
from contextlib import contextmanager
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

from .frame import frame_paths
from .scene.model import ACTION_CLASSES

SPLITS = ("train", "test")
SOURCES = ("auto", "manual", "synthetic")
GT_FIELDS = frozenset({"id", "split", "frames_dir", "keylog_path", "gt_caption", "action_class", "source",
                       "gt_keyframes"})
ARTIFACT_FIELDS = frozenset({"cursor_fixes", "keyframes", "prediction", "score"})


class ManifestCorrupt(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class SampleRecord:
    id: str
    split: str
    frames_dir: str  # relative to the manifest's directory
    keylog_path: str
    gt_caption: str
    action_class: str
    source: str
    gt_keyframes: tuple[int, int] | None = None  # raw frame indices
    cursor_fixes: str | None = None
    keyframes: dict[str, Any] | None = None  # {"s", "e", "n", "strategy"} in sampled positions
    prediction: str | None = None
    score: float | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if self.split not in SPLITS:
            raise ValueError(f"split {self.split!r} not in {SPLITS}")
        if self.source not in SOURCES:
            raise ValueError(f"source {self.source!r} not in {SOURCES}")
        if self.action_class not in ACTION_CLASSES:
            raise ValueError(f"action_class {self.action_class!r} not in {ACTION_CLASSES}")
        if self.gt_keyframes is not None:
            object.__setattr__(self, "gt_keyframes", tuple(int(v) for v in self.gt_keyframes))

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        if self.gt_keyframes is not None:
            d["gt_keyframes"] = list(self.gt_keyframes)
        return json.dumps(d, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown fields {sorted(extra)}")
        return cls(**d)


# ---------------------------------------------------------------- io


@contextmanager
def manifest_lock(path: str | Path):
    """Exclusive advisory lock held on a sidecar ``.lock`` file."""
    lock_path = Path(str(path) + ".lock")
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    with open(lock_path, "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_manifest(records: Iterable[SampleRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def write_manifest(records: Iterable[SampleRecord], path: str | Path) -> None:
    path = Path(path)
    text = dumps_manifest(records)
    with manifest_lock(path):
        _write_atomic(path, text)


def parse_manifest(text: str) -> list[SampleRecord]:
    out = []
    # JSON escapes newlines, so only "\n" separates records (splitlines would also cut at U+0085, U+2028)
    for lineno, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            if not isinstance(d, dict):
                raise ValueError("record is not a JSON object")
            rec = SampleRecord.from_dict(d)
        except (ValueError, TypeError) as exc:
            raise ManifestCorrupt(str(exc), lineno) from None
        out.append(rec)
    return out


def load_manifest(path: str | Path, check_files: bool = True) -> list[SampleRecord]:
    """Parse a manifest; with ``check_files`` every referenced path must exist."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    records = parse_manifest(text)
    if check_files:
        base = path.parent
        lines = [i for i, ln in enumerate(text.split("\n"), 1) if ln.strip()]
        for lineno, rec in zip(lines, records):
            for name in ("frames_dir", "keylog_path", "cursor_fixes"):
                rel = getattr(rec, name)
                if rel is not None and not (base / rel).exists():
                    raise ManifestCorrupt(f"{name} {rel!r} of {rec.id!r} does not exist", lineno)
    return records


def update_artifacts(path: str | Path, updates: dict[str, dict[str, Any]]) -> list[SampleRecord]:
    """Set artifact fields per sample id under the manifest lock; ground-truth fields are refused."""
    path = Path(path)
    for sid, change in updates.items():
        bad = set(change) - ARTIFACT_FIELDS
        if bad:
            raise ValueError(f"{sid}: refusing to modify non-artifact fields {sorted(bad)}")
    with manifest_lock(path):
        records = parse_manifest(path.read_text(encoding="utf-8"))
        known = {r.id for r in records}
        missing = set(updates) - known
        if missing:
            raise KeyError(f"unknown sample ids {sorted(missing)[:5]}")
        records = [replace(r, **updates[r.id]) if r.id in updates else r for r in records]
        _write_atomic(path, dumps_manifest(records))
    return records


def artifact_dir(manifest_path: str | Path, sample_id: str) -> Path:
    """Sibling directory for a sample's artifacts."""
    return Path(manifest_path).parent / "artifacts" / sample_id


def relpath(target: str | Path, manifest_path: str | Path) -> str:
    return os.path.relpath(Path(target), Path(manifest_path).parent)


# ---------------------------------------------------------------- stats


@dataclass(frozen=True)
class SplitStats:
    cells: dict[tuple[str, str, str], int]  # (split, action_class, source) -> count

    @property
    def by_split(self) -> dict[str, int]:
        out = {s: 0 for s in SPLITS}
        for (split, _, _), n in self.cells.items():
            out[split] += n
        return out

    @property
    def by_source(self) -> dict[tuple[str, str], int]:
        out: Counter = Counter()
        for (split, _, source), n in self.cells.items():
            out[(split, source)] += n
        return dict(out)

    @property
    def total(self) -> int:
        return sum(self.cells.values())


def stats(records: Iterable[SampleRecord]) -> SplitStats:
    return SplitStats(dict(Counter((r.split, r.action_class, r.source) for r in records)))


def format_stats(st: SplitStats) -> str:
    lines = [f"{'split':<6} {'source':<10} " + " ".join(f"{a:>12}" for a in ACTION_CLASSES) + f" {'total':>8}"]
    for split in SPLITS:
        for source in SOURCES:
            row = [st.cells.get((split, a, source), 0) for a in ACTION_CLASSES]
            if sum(row):
                lines.append(f"{split:<6} {source:<10} " + " ".join(f"{n:12d}" for n in row) + f" {sum(row):8d}")
        lines.append(f"{split:<6} {'all':<10} " + " ".join(
            f"{sum(st.cells.get((split, a, s), 0) for s in SOURCES):12d}" for a in ACTION_CLASSES)
            + f" {st.by_split[split]:8d}")
    lines.append(f"total {st.total}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- validation


def validate(records: Sequence[SampleRecord], base: str | Path | None = None) -> list[str]:
    """Human-readable violations; an empty list means the set is consistent.

    Checks referenced files (when ``base`` is given), keyframe bounds,
    caption grammar of synthetic records, and train/test id overlap.
    """
    from .metric import decompose
    from .scene.actions import ACTION_NAMES

    caption_class = {a.value: name for a, name in ACTION_NAMES.items()}
    caption_class.update(Drag="Drag", Type="Type")
    problems = []
    splits_by_id: dict[str, list[str]] = {}
    for rec in records:
        splits_by_id.setdefault(rec.id, []).append(rec.split)
        n_frames = None
        if base is not None:
            base = Path(base)
            fdir = base / rec.frames_dir
            if not fdir.is_dir():
                problems.append(f"{rec.id}: frames_dir {rec.frames_dir!r} missing")
            else:
                n_frames = len(frame_paths(fdir))
            if not (base / rec.keylog_path).exists():
                problems.append(f"{rec.id}: keylog {rec.keylog_path!r} missing")
            if rec.cursor_fixes is not None and not (base / rec.cursor_fixes).exists():
                problems.append(f"{rec.id}: cursor fixes {rec.cursor_fixes!r} missing")
        if rec.gt_keyframes is not None:
            s, e = rec.gt_keyframes
            if not 0 <= s < e or (n_frames is not None and e >= n_frames):
                problems.append(f"{rec.id}: gt_keyframes {rec.gt_keyframes} out of bounds")
        if rec.keyframes is not None:
            kf = rec.keyframes
            try:
                ok = 0 <= kf["s"] < kf["e"] < kf["n"]
            except (KeyError, TypeError):
                ok = False
            if not ok:
                problems.append(f"{rec.id}: keyframes {kf} out of bounds")
        if rec.source == "synthetic":
            got = decompose(rec.gt_caption).action_class
            if got != caption_class[rec.action_class]:
                problems.append(f"{rec.id}: caption parses as {got}, record says {rec.action_class}")
    for sid, splits in splits_by_id.items():
        if len(set(splits)) > 1:
            problems.append(f"{sid}: appears in both train and test")
        elif len(splits) > 1:
            problems.append(f"{sid}: duplicated {len(splits)} times in {splits[0]}")
    return problems
