"""Keylog text format and gesture segmentation of long recordings."""

from __future__ import annotations

from pathlib import Path

from ..frame import Frame
from .model import KeyEvent, KeyKind, Keylog

MS_PER_FRAME = 100
# a second DOWN this soon after the previous UP continues the same gesture (double-click)
MULTI_CLICK_MS = 250
# key presses closer than this belong to one typing gesture
TYPING_PAUSE_MS = 1000


class MalformedKeylog(ValueError):
    pass


def frame_of(timestamp_ms: int) -> int:
    return timestamp_ms // MS_PER_FRAME


def format_keylog(keylog: Keylog) -> str:
    lines = []
    for e in keylog:
        if isinstance(e.payload, str):
            payload = e.payload.encode("unicode_escape").decode("ascii")
        else:
            payload = f"{e.payload[0]},{e.payload[1]}"
        lines.append(f"{e.timestamp_ms}\t{e.kind.value}\t{payload}")
    return "".join(line + "\n" for line in lines)


def parse_keylog(text: str) -> Keylog:
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise MalformedKeylog(f"line {lineno}: expected 3 tab-separated fields")
        ts, kind, payload = parts
        try:
            kind = KeyKind(kind)
            ts = int(ts)
        except ValueError as exc:
            raise MalformedKeylog(f"line {lineno}: {exc}") from None
        if kind is KeyKind.KEY_PRESS:
            value = payload.encode("ascii").decode("unicode_escape")
        else:
            try:
                x, y = payload.split(",")
                value = (int(x), int(y))
            except ValueError:
                raise MalformedKeylog(f"line {lineno}: bad coordinate {payload!r}") from None
        entries.append(KeyEvent(ts, kind, value))
    return Keylog(tuple(entries))


def write_keylog(keylog: Keylog, path: str | Path) -> None:
    Path(path).write_text(format_keylog(keylog), encoding="utf-8")


def read_keylog(path: str | Path) -> Keylog:
    return parse_keylog(Path(path).read_text(encoding="utf-8"))


def gestures(keylog: Keylog) -> list[tuple[int, int]]:
    """Group events into gestures; returns ``(first_ms, last_ms)`` per gesture.

    A mouse gesture runs from a MOUSE_DOWN to its MOUSE_UP (moves in between
    belong to it); click pairs within ``MULTI_CLICK_MS`` merge.  Consecutive
    key presses within ``TYPING_PAUSE_MS`` form one typing gesture.  Free
    cursor moves outside gestures are not gestures.
    """
    spans: list[list] = []  # [start, end, kind]
    down_at = None
    prev = None
    for e in keylog:
        if prev is not None and e.timestamp_ms < prev:
            raise MalformedKeylog("timestamps decrease")
        prev = e.timestamp_ms
        if e.kind is KeyKind.MOUSE_DOWN:
            if down_at is not None:
                raise MalformedKeylog(f"MOUSE_DOWN at {e.timestamp_ms} ms before previous MOUSE_UP")
            down_at = e.timestamp_ms
        elif e.kind is KeyKind.MOUSE_UP:
            if down_at is None:
                raise MalformedKeylog(f"MOUSE_UP at {e.timestamp_ms} ms without MOUSE_DOWN")
            last = spans[-1] if spans else None
            if last and last[2] == "mouse" and down_at - last[1] <= MULTI_CLICK_MS:
                last[1] = e.timestamp_ms
            else:
                spans.append([down_at, e.timestamp_ms, "mouse"])
            down_at = None
        elif e.kind is KeyKind.KEY_PRESS:
            if down_at is not None:
                continue  # chord with a held button stays in the mouse gesture
            last = spans[-1] if spans else None
            if last and last[2] == "keys" and e.timestamp_ms - last[1] <= TYPING_PAUSE_MS:
                last[1] = e.timestamp_ms
            else:
                spans.append([e.timestamp_ms, e.timestamp_ms, "keys"])
    if down_at is not None:
        raise MalformedKeylog(f"MOUSE_DOWN at {down_at} ms never released")
    return [(s, e) for s, e, _ in spans]


def segment_by_keylog(frames: list[Frame], keylog: Keylog) -> list[tuple[list[Frame], Keylog]]:
    """Split a recording into one sub-video per gesture.

    Cut points sit halfway between consecutive gestures; the first segment
    starts at frame 0 and the last one ends at the final frame.  Sub-keylog
    timestamps are rebased to the segment's first frame.
    """
    spans = gestures(keylog)
    if not spans:
        return []
    n = len(frames)
    last_frame = frame_of(keylog.entries[-1].timestamp_ms)
    if last_frame >= n:
        raise MalformedKeylog(f"keylog reaches frame {last_frame} but only {n} frames were given")
    cuts = [0]
    for (_, end_a), (start_b, _) in zip(spans, spans[1:]):
        mid_ms = (end_a + start_b) // 2
        cut = frame_of(mid_ms) + 1
        cut = min(max(cut, frame_of(end_a) + 1), frame_of(start_b))
        cuts.append(cut)
    cuts.append(n)
    out = []
    for i in range(len(spans)):
        lo, hi = cuts[i], cuts[i + 1]
        t0, t1 = lo * MS_PER_FRAME, hi * MS_PER_FRAME
        sub = [
            KeyEvent(e.timestamp_ms - t0, e.kind, e.payload)
            for e in keylog
            if t0 <= e.timestamp_ms < t1 or (i == len(spans) - 1 and e.timestamp_ms >= t1)
        ]
        sub_frames = [f.with_index(j) for j, f in enumerate(frames[lo:hi])]
        out.append((sub_frames, Keylog(tuple(sub))))
    return out
