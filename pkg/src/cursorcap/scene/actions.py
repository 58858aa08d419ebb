"""Scripted execution of atomic actions into frames, keylog and ground truth.

Timeline for ``F`` frames (100 ms each):

* the cursor rests at a seeded start point for a seeded delay drawn from the
  first third of the video, then travels linearly to the target;
* it arrives on frame ``a - 1`` and the action's first visible effect is on
  frame ``a``;
* the final state is reached on frame ``e`` and held to the end.

Ground-truth keyframes are ``(a - 1, e)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..frame import Frame
from .keylog import MS_PER_FRAME
from .model import (
    Action,
    ActionScript,
    GuiScene,
    KeyEvent,
    KeyKind,
    Keylog,
    UnsupportedAction,
    WidgetKind,
    rect_contains,
)
from .render import GLYPH_H, GLYPH_W, INK, KIND_FILL, Overlay, render_scene

ACTION_NAMES = {
    Action.LEFT_CLICK: "Left-Click",
    Action.RIGHT_CLICK: "Right-Click",
    Action.DOUBLE_CLICK: "Double-Click",
}
CLICK_HOLD_MS = 40
DOUBLE_CLICK_GAP_MS = 80  # DOWN-to-DOWN spacing of the two clicks
HIGHLIGHT = (0, 120, 215)
GRABBED = (60, 110, 200)
CARET_W = 3
CONTEXT_ITEMS = ("Cut", "Copy", "Paste", "Rename", "Properties")
MARGIN = 40


@dataclass(frozen=True, eq=False)
class GeneratedSample:
    frames: list[Frame]
    keylog: Keylog
    gt_caption: str
    gt_keyframes: tuple[int, int]
    action_class: Action
    scene_snapshot: GuiScene
    cursor_track: tuple[tuple[int, int], ...]  # hotspot per frame

    def same_as(self, other: "GeneratedSample") -> bool:
        return (
            len(self.frames) == len(other.frames)
            and all(a.same_pixels(b) for a, b in zip(self.frames, other.frames))
            and self.keylog == other.keylog
            and self.gt_caption == other.gt_caption
            and self.gt_keyframes == other.gt_keyframes
            and self.action_class is other.action_class
            and self.scene_snapshot == other.scene_snapshot
            and self.cursor_track == other.cursor_track
        )


def caption_template(script: ActionScript, scene: GuiScene) -> str:
    """Ground-truth narration of ``script`` on ``scene``."""
    wd = scene.widget(script.target_widget)
    if script.action is Action.DRAG:
        return f"Drag the {wd.label} from {script.drag_from} to {script.drag_to} to {script.purpose}"
    if script.action is Action.TYPE:
        return f"Type '{script.typed_text}' in {wd.label} {wd.kind.value}"
    return f"{ACTION_NAMES[script.action]} on {wd.label} {wd.kind.value}"


def _lerp(p0, p1, t: float) -> tuple[int, int]:
    return (int(round(p0[0] + (p1[0] - p0[0]) * t)), int(round(p0[1] + (p1[1] - p0[1]) * t)))


def _context_menu(scene: GuiScene, at: tuple[int, int]) -> Overlay:
    W, H = scene.resolution
    w, h = 260, len(CONTEXT_ITEMS) * (GLYPH_H + 8) + 12
    x = min(at[0] + 4, W - w)
    y = min(at[1] + 4, H - h)
    return Overlay("context_menu", (x, y, w, h), fill=(250, 250, 252), border=(90, 90, 96),
                   text="\n".join(CONTEXT_ITEMS))


def _panel_swap(scene: GuiScene, target_center: tuple[int, int], label: str) -> Overlay:
    W, H = scene.resolution
    w, h = 820, 520
    x = int(np.clip(target_center[0] - w // 2, 0, W - w))
    y = int(np.clip(target_center[1] - h // 2, 0, H - h))
    return Overlay("panel_swap", (x, y, w, h), fill=(48, 50, 58), border=(20, 20, 24),
                   text=f"{label}\nproperties\nopened", text_color=(235, 235, 240))


def _tail_frames(script: ActionScript, num_frames: int) -> int:
    """Frames from the first effect through the final state, inclusive."""
    if script.action is Action.LEFT_CLICK:
        return max(1, num_frames // 6) + 1
    if script.action is Action.DRAG:
        return max(1, num_frames // 5) + 2
    if script.action is Action.TYPE:
        return min(len(script.typed_text), max(2, num_frames // 4))
    return 1


def execute_action(scene: GuiScene, script: ActionScript, num_frames: int) -> GeneratedSample:
    """Run ``script`` on ``scene`` and record ``num_frames`` frames.

    Raises UnknownWidget for a missing target and UnsupportedAction when the
    script does not fit the scene (wrong widget kind, drag panels, or too few
    frames for the action).
    """
    if num_frames < 4:
        raise ValueError("num_frames must be >= 4")
    wd = scene.widget(script.target_widget)
    action = script.action
    W, H = scene.resolution
    if action is Action.TYPE and wd.kind is not WidgetKind.TEXT_FIELD:
        raise UnsupportedAction(f"cannot type into {wd.kind.value} {wd.id!r}")
    if action is Action.DRAG:
        src, dst = scene.panel(script.drag_from), scene.panel(script.drag_to)
        if not rect_contains(src.rect, *wd.center):
            raise UnsupportedAction(f"widget {wd.id!r} is not inside panel {src.name!r}")
        if src.name == dst.name:
            raise UnsupportedAction("drag source and destination panels are the same")

    rng = np.random.default_rng([script.seed, num_frames])
    F = num_frames
    tail = _tail_frames(script, F)

    # cursor lands inside the middle half of the target; typing clicks near
    # the left end of the field, where the text will appear
    x, y, w, h = wd.rect
    if action is Action.TYPE:
        tx = x + 8 + int(rng.integers(0, max(1, min(w // 4, 96))))
    else:
        tx = x + w // 4 + int(rng.integers(0, max(1, w // 2)))
    target = (int(tx), int(y + h // 4 + rng.integers(0, max(1, h // 2))))
    start = (int(rng.integers(MARGIN, W - MARGIN)), int(rng.integers(MARGIN, H - MARGIN)))
    delay = int(rng.integers(0, max(1, F // 3)))
    travel = max(1, F // 10)
    # shrink the lead-in until the action fits
    while delay + travel + 1 + tail > F:
        if delay > 0:
            delay -= 1
        elif travel > 0:
            travel -= 1
        else:
            raise UnsupportedAction(f"{F} frames are too few for {action.value}")
    if travel == 0:
        start = target
    a = delay + travel + 1

    cursor: list[tuple[int, int]] = []
    for i in range(F):
        if i <= delay:
            cursor.append(start)
        elif i < a:
            cursor.append(_lerp(start, target, (i - delay) / travel))
        else:
            cursor.append(target)

    events: list[KeyEvent] = []
    for i in range(1, a):
        if cursor[i] != cursor[i - 1]:
            events.append(KeyEvent(i * MS_PER_FRAME, KeyKind.MOUSE_MOVE, cursor[i]))

    t_a = a * MS_PER_FRAME
    scenes = [scene] * F
    overlays: list[list[Overlay]] = [[] for _ in range(F)]

    if action in (Action.LEFT_CLICK, Action.RIGHT_CLICK):
        events += [KeyEvent(t_a, KeyKind.MOUSE_DOWN, target), KeyEvent(t_a + CLICK_HOLD_MS, KeyKind.MOUSE_UP, target)]
    elif action is Action.DOUBLE_CLICK:
        for k in range(2):
            t = t_a + k * DOUBLE_CLICK_GAP_MS
            events += [KeyEvent(t, KeyKind.MOUSE_DOWN, target), KeyEvent(t + CLICK_HOLD_MS, KeyKind.MOUSE_UP, target)]

    if action is Action.LEFT_CLICK:
        hl = Overlay("highlight", wd.rect, fill=HIGHLIGHT, border=(0, 60, 130), text=wd.label,
                     text_color=(255, 255, 255))
        for i in range(a, a + tail - 1):
            overlays[i].append(hl)
        e = a + tail - 1
    elif action is Action.RIGHT_CLICK:
        menu = _context_menu(scene, target)
        for i in range(a, F):
            overlays[i].append(menu)
        e = a
    elif action is Action.DOUBLE_CLICK:
        swap = _panel_swap(scene, wd.center, wd.label)
        for i in range(a, F):
            overlays[i].append(swap)
        e = a
    elif action is Action.TYPE:
        text = script.typed_text
        chunks = np.array_split(np.arange(len(text)), tail)
        typed = ""
        for j, idx in enumerate(chunks):
            frame = a + j
            step = MS_PER_FRAME // max(1, len(idx))
            for m, ci in enumerate(idx):
                events.append(KeyEvent(frame * MS_PER_FRAME + m * step, KeyKind.KEY_PRESS, text[ci]))
                typed += text[ci]
            box = Overlay("active_field", wd.rect, fill=KIND_FILL[WidgetKind.TEXT_FIELD])
            # keep the caret end visible in narrow fields
            visible = typed[-max(1, (wd.rect[2] - 24) // GLYPH_W):]
            ink = Overlay("typed_text", wd.rect, text=visible, text_only=True)
            cx = wd.rect[0] + 8 + GLYPH_W * len(visible)
            caret = Overlay("caret", (cx + 1, wd.rect[1] + 6, CARET_W, GLYPH_H),
                            fill=INK, border=None)
            for i in range(frame, F):
                overlays[i] = [box, ink, caret]
        e = a + tail - 1
    else:  # Drag
        D = tail - 2
        dst = scene.panel(script.drag_to)
        px, py, pw, ph = dst.rect
        off = (target[0] - wd.rect[0], target[1] - wd.rect[1])
        lo_x, hi_x = px + off[0] + 4, px + pw - (w - off[0]) - 4
        lo_y, hi_y = py + GLYPH_H + 16 + off[1], py + ph - (h - off[1]) - 4
        if hi_x <= lo_x or hi_y <= lo_y:
            raise UnsupportedAction(f"widget {wd.id!r} does not fit in panel {dst.name!r}")
        drop = (int(rng.integers(lo_x, hi_x)), int(rng.integers(lo_y, hi_y)))
        events.append(KeyEvent(t_a, KeyKind.MOUSE_DOWN, target))
        for k in range(F - a):
            i = a + k
            pos = _lerp(target, drop, min(k, D) / D) if k > 0 else target
            cursor[i] = pos
            moved = scene.move_widget(wd.id, pos[0] - off[0], pos[1] - off[1])
            scenes[i] = moved
            if k <= D:
                grabbed = moved.widget(wd.id)
                overlays[i].append(Overlay("grabbed", grabbed.rect, fill=GRABBED, border=(20, 40, 90),
                                           text=grabbed.label, text_color=(255, 255, 255)))
            if 0 < k <= D:
                events.append(KeyEvent(i * MS_PER_FRAME, KeyKind.MOUSE_MOVE, pos))
        e = a + D + 1
        events.append(KeyEvent(e * MS_PER_FRAME, KeyKind.MOUSE_UP, drop))

    frames = [render_scene(scenes[i], cursor[i], overlays[i], index=i) for i in range(F)]
    events.sort(key=lambda ev: ev.timestamp_ms)
    return GeneratedSample(
        frames=frames,
        keylog=Keylog(tuple(events)),
        gt_caption=caption_template(script, scene),
        gt_keyframes=(a - 1, e),
        action_class=action,
        scene_snapshot=scene,
        cursor_track=tuple(cursor),
    )
