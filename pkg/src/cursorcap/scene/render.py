"""Flat-shaded rasterizer for :class:`GuiScene`."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from ..frame import Frame
from ..sprites import get_sprite
from .model import GuiScene, Rect, WidgetKind

RGB = tuple[int, int, int]

TEXT_SCALE = 2
GLYPH_W = 6 * TEXT_SCALE
GLYPH_H = 11 * TEXT_SCALE

INK: RGB = (30, 30, 34)
BORDER: RGB = (150, 150, 158)
PLACEHOLDER: RGB = (214, 214, 218)
KIND_FILL: dict[WidgetKind, RGB] = {
    WidgetKind.BUTTON: (222, 222, 228),
    WidgetKind.ICON: (214, 220, 230),
    WidgetKind.MENU_ITEM: (232, 232, 236),
    WidgetKind.TEXT_FIELD: (250, 250, 250),
    WidgetKind.HANDLE: (236, 168, 72),
}


class CursorOutOfBounds(ValueError):
    pass


@dataclass(frozen=True)
class Overlay:
    """Transient drawing on top of the scene (menus, highlights, typed text).

    ``text_only`` overlays draw their text without filling the rect.
    """

    kind: str
    rect: Rect
    fill: RGB = (255, 255, 255)
    border: RGB | None = BORDER
    text: str = ""
    text_color: RGB = INK
    text_only: bool = False


@lru_cache(maxsize=1)
def _font():
    return ImageFont.load_default_imagefont()


@lru_cache(maxsize=4096)
def text_mask(text: str) -> np.ndarray:
    """Boolean glyph mask of ``text`` in the built-in monospaced bitmap font."""
    if not text:
        return np.zeros((GLYPH_H, 0), bool)
    font = _font()
    w = GLYPH_W // TEXT_SCALE * len(text)
    im = Image.new("L", (w, GLYPH_H // TEXT_SCALE), 0)
    ImageDraw.Draw(im).text((0, 0), text, fill=255, font=font)
    small = np.asarray(im) > 127
    return np.repeat(np.repeat(small, TEXT_SCALE, axis=0), TEXT_SCALE, axis=1)


def _fill(img: np.ndarray, rect: Rect, color: RGB) -> None:
    x, y, w, h = rect
    img[max(y, 0) : y + h, max(x, 0) : x + w] = color


def _outline(img: np.ndarray, rect: Rect, color: RGB, width: int = 1) -> None:
    x, y, w, h = rect
    _fill(img, (x, y, w, width), color)
    _fill(img, (x, y + h - width, w, width), color)
    _fill(img, (x, y, width, h), color)
    _fill(img, (x + w - width, y, width, h), color)


def draw_text(img: np.ndarray, x: int, y: int, text: str, color: RGB, clip: Rect | None = None) -> None:
    mask = text_mask(text)
    if mask.size == 0:
        return
    H, W = img.shape[:2]
    x0, y0, x1, y1 = 0, 0, W, H
    if clip is not None:
        cx, cy, cw, ch = clip
        x0, y0, x1, y1 = max(cx, 0), max(cy, 0), min(cx + cw, W), min(cy + ch, H)
    mh, mw = mask.shape
    sx0, sy0 = max(x, x0), max(y, y0)
    sx1, sy1 = min(x + mw, x1), min(y + mh, y1)
    if sx0 >= sx1 or sy0 >= sy1:
        return
    sub = mask[sy0 - y : sy1 - y, sx0 - x : sx1 - x]
    img[sy0:sy1, sx0:sx1][sub] = color


def _label_origin(rect: Rect, text: str) -> tuple[int, int]:
    x, y, w, h = rect
    tw = GLYPH_W * len(text)
    return x + max(4, (w - tw) // 2), y + (h - GLYPH_H) // 2


def draw_overlay(img: np.ndarray, ov: Overlay) -> None:
    if not ov.text_only:
        _fill(img, ov.rect, ov.fill)
        if ov.border is not None:
            _outline(img, ov.rect, ov.border)
    if ov.text:
        x, y, w, h = ov.rect
        lines = ov.text.split("\n")
        if len(lines) == 1 and not ov.text_only:
            tx, ty = _label_origin(ov.rect, ov.text)
            draw_text(img, tx, ty, ov.text, ov.text_color, clip=ov.rect)
        else:
            for i, line in enumerate(lines):
                draw_text(img, x + 8, y + 6 + i * (GLYPH_H + 8), line, ov.text_color, clip=ov.rect)


def _composite_cursor(img: np.ndarray, scene: GuiScene, pos: tuple[int, int]) -> None:
    sprite = get_sprite(scene.cursor_sprite).scaled(scene.cursor_scale)
    H, W = img.shape[:2]
    x = pos[0] - sprite.hotspot[0]
    y = pos[1] - sprite.hotspot[1]
    sh, sw = sprite.rgba.shape[:2]
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + sw, W), min(y + sh, H)
    if x0 >= x1 or y0 >= y1:
        return
    part = sprite.rgba[y0 - y : y1 - y, x0 - x : x1 - x]
    alpha = part[..., 3] > 0
    img[y0:y1, x0:x1][alpha] = part[..., :3][alpha]


def render_scene(
    scene: GuiScene,
    cursor_pos: tuple[int, int] | None,
    overlays: list[Overlay] | tuple[Overlay, ...] = (),
    index: int = 0,
) -> Frame:
    """Rasterize ``scene`` with overlays, then the cursor on top.

    The sprite hotspot lands on ``cursor_pos``; sprite pixels past the screen
    edge are clipped.  ``cursor_pos=None`` renders a cursor-free frame.
    """
    W, H = scene.resolution
    if cursor_pos is not None:
        cx, cy = cursor_pos
        if not (0 <= cx < W and 0 <= cy < H):
            raise CursorOutOfBounds(f"cursor {cursor_pos} outside {W}x{H}")
    img = _static_layer(scene).copy()
    for ov in overlays:
        draw_overlay(img, ov)
    if cursor_pos is not None:
        _composite_cursor(img, scene, cursor_pos)
    return Frame(img, index)


@lru_cache(maxsize=16)
def _static_layer(scene: GuiScene) -> np.ndarray:
    """Panels and widgets without overlays or cursor; cached per scene, read-only."""
    W, H = scene.resolution
    img = np.empty((H, W, 3), np.uint8)
    img[:] = scene.background
    for p in scene.panels:
        _fill(img, p.rect, p.fill)
        _outline(img, p.rect, BORDER)
        draw_text(img, p.rect[0] + 8, p.rect[1] + 6, p.name, (90, 90, 98), clip=p.rect)
    for wd in scene.widgets:
        _fill(img, wd.rect, KIND_FILL[wd.kind])
        _outline(img, wd.rect, BORDER)
        if wd.kind is WidgetKind.TEXT_FIELD:
            draw_text(img, wd.rect[0] + 8, _label_origin(wd.rect, wd.label)[1], wd.label, PLACEHOLDER, clip=wd.rect)
        else:
            tx, ty = _label_origin(wd.rect, wd.label)
            draw_text(img, tx, ty, wd.label, INK, clip=wd.rect)
    img.flags.writeable = False
    return img


def cursor_footprint(scene: GuiScene, cursor_pos: tuple[int, int]) -> Rect:
    """Screen rect covered by the cursor sprite (unclipped)."""
    sprite = get_sprite(scene.cursor_sprite).scaled(scene.cursor_scale)
    sh, sw = sprite.rgba.shape[:2]
    return (cursor_pos[0] - sprite.hotspot[0], cursor_pos[1] - sprite.hotspot[1], sw, sh)
