"""Editor-like screen layouts at 1920x1080.

``default_scene()`` is fixed; ``random_scene(seed)`` jitters the same
skeleton and draws labels, colors and cursor style from a seeded RNG.
"""

from __future__ import annotations

import numpy as np

from .model import GuiScene, Panel, Widget, WidgetKind
from .render import GLYPH_W

RESOLUTION = (1920, 1080)

MENU_LABELS = ["File", "Edit", "Clip", "Sequence", "Markers", "Graphics", "View", "Window", "Help", "Layer"]
TOOL_LABELS = [
    "Export", "Import", "Render", "Save", "Undo", "Redo", "Crop", "Zoom", "Split", "Mute",
    "Snap", "Record", "Share", "Publish", "Preview", "Trim", "Ripple", "Link",
]
ICON_LABELS = ["media folder", "audio file", "title card", "color matte", "bin", "proxy file", "caption track"]
EFFECT_LABELS = [
    "Gaussian Blur", "Lumetri Color", "Cross Dissolve", "Drop Shadow", "Warp Stabilizer",
    "Sharpen", "Noise Reduction", "Dip to Black", "Film Grain", "Echo",
]
FIELD_LABELS = ["search box", "name field", "filter field", "marker note", "title text"]
HANDLE_LABELS = ["keyframe marker", "clip handle", "playhead", "audio clip", "title clip", "volume knob"]
PURPOSES = {
    "keyframe marker": ["extend the clip", "shift the animation", "retime the effect"],
    "clip handle": ["trim the clip", "extend the clip", "move the clip"],
    "playhead": ["scrub the preview", "jump to the end"],
    "audio clip": ["sync the sound", "move the clip"],
    "title clip": ["add the title", "reorder the layers"],
    "volume knob": ["raise the volume", "fade the audio"],
}

PANEL_FILLS = [(226, 228, 234), (232, 230, 226), (224, 232, 228), (230, 226, 234), (220, 226, 234)]


def _text_width(label: str) -> int:
    return GLYPH_W * len(label) + 28


def _build(rng: np.random.Generator | None) -> GuiScene:
    def pick(seq, k):
        if rng is None:
            return list(seq[:k])
        return [seq[i] for i in rng.choice(len(seq), size=k, replace=False)]

    def jit(n):
        return 0 if rng is None else int(rng.integers(-n, n + 1))

    W, H = RESOLUTION
    widgets: list[Widget] = []

    x = 12
    for i, lab in enumerate(pick(MENU_LABELS, 8)):
        w = _text_width(lab)
        widgets.append(Widget(f"menu_{i}", lab, WidgetKind.MENU_ITEM, (x, 6, w, 32)))
        x += w + 6

    x = 20 + jit(8)
    for i, lab in enumerate(pick(TOOL_LABELS, 10)):
        w = max(96, _text_width(lab))
        kind = WidgetKind.BUTTON if (rng is None or rng.random() < 0.7) else WidgetKind.ICON
        widgets.append(Widget(f"tool_{i}", lab, kind, (x, 52 + jit(3), w, 40)))
        x += w + 14 + max(0, jit(10))

    fills = PANEL_FILLS if rng is None else [PANEL_FILLS[i] for i in rng.permutation(len(PANEL_FILLS))]
    split_l = 470 + jit(30)
    split_r = 1450 + jit(30)
    split_y = 650 + jit(30)
    tl_mid = 960 + jit(120)
    panels = [
        Panel("project panel", (0, 110, split_l, split_y - 120), fills[0]),
        Panel("preview", (split_l + 10, 110, split_r - split_l - 20, split_y - 120), fills[1]),
        Panel("effect panel", (split_r, 110, W - split_r, split_y - 120), fills[2]),
        Panel("timeline start", (0, split_y, tl_mid, H - split_y), fills[3]),
        Panel("timeline end", (tl_mid, split_y, W - tl_mid, H - split_y), fills[4]),
    ]

    for i, lab in enumerate(pick(ICON_LABELS, 4)):
        px = 30 + (i % 2) * 210 + jit(10)
        py = 170 + (i // 2) * 140 + jit(10)
        widgets.append(Widget(f"icon_{i}", lab, WidgetKind.ICON, (px, py, 190, 96)))

    ex = split_r + 24
    field_labels = pick(FIELD_LABELS, 2)
    widgets.append(Widget("field_0", field_labels[0], WidgetKind.TEXT_FIELD, (ex, 160, W - ex - 24, 40)))
    for i, lab in enumerate(pick(EFFECT_LABELS, 5)):
        widgets.append(Widget(f"effect_{i}", lab, WidgetKind.BUTTON, (ex, 230 + i * 62 + jit(4), W - ex - 24, 44)))

    widgets.append(Widget("field_1", field_labels[1], WidgetKind.TEXT_FIELD, (split_l + 40, split_y - 70, 420, 40)))

    for i, lab in enumerate(pick(HANDLE_LABELS, 3)):
        hx = 80 + i * 260 + jit(40)
        hy = split_y + 80 + i * 90 + jit(20)
        w = max(110, _text_width(lab))
        widgets.append(Widget(f"handle_{i}", lab, WidgetKind.HANDLE, (hx, hy, w, 44)))

    if rng is None:
        return GuiScene(RESOLUTION, tuple(widgets), tuple(panels))
    sprite = "arrow" if rng.random() < 0.75 else "hand"
    scale = float(rng.choice([1.0, 1.0, 1.5, 2.0]))
    return GuiScene(RESOLUTION, tuple(widgets), tuple(panels), cursor_sprite=sprite, cursor_scale=scale)


def default_scene() -> GuiScene:
    return _build(None)


def random_scene(seed: int) -> GuiScene:
    return _build(np.random.default_rng([seed, 0x5CE7E]))
