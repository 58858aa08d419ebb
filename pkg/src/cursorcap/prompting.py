"""Cursor-centred visual prompts: the fixed-size box, its green outline, and the crop."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .frame import Frame

S_BOX_DEFAULT = 256
S_BOX_PRESETS = (128, 256, 512, 768)
STROKE_PX = 4
GREEN = (0, 255, 0)
BACKEND_SIZE = (960, 512)


class BoxExceedsImage(ValueError):
    pass


@dataclass(frozen=True)
class PromptBox:
    rect: tuple[int, int, int, int]  # left, top, size, size
    source_center: tuple[int, int]
    s_box: int

    @property
    def left(self) -> int:
        return self.rect[0]

    @property
    def top(self) -> int:
        return self.rect[1]


def prompt_box(center: tuple[int, int], img_w: int, img_h: int, s_box: int = S_BOX_DEFAULT) -> PromptBox:
    """Square box of side ``s_box`` centred on ``center``, shifted to stay inside the image."""
    if s_box <= 0:
        raise ValueError("s_box must be positive")
    if s_box > img_w or s_box > img_h:
        raise BoxExceedsImage(f"s_box {s_box} does not fit a {img_w}x{img_h} image")
    x, y = center
    if not (0 <= x < img_w and 0 <= y < img_h):
        raise ValueError(f"center {center} outside {img_w}x{img_h}")
    half = s_box // 2
    left = min(max(x - half, 0), img_w - s_box)
    top = min(max(y - half, 0), img_h - s_box)
    return PromptBox((int(left), int(top), s_box, s_box), (int(x), int(y)), s_box)


def _check_inside(frame: Frame, box: PromptBox) -> None:
    l, t, s, _ = box.rect
    if l < 0 or t < 0 or l + s > frame.width or t + s > frame.height:
        raise BoxExceedsImage(f"box {box.rect} outside {frame.width}x{frame.height} frame")


def annotate(frame: Frame, box: PromptBox, stroke_px: int = STROKE_PX) -> Frame:
    """Copy of ``frame`` with a pure green outline drawn inward from the box border."""
    _check_inside(frame, box)
    l, t, s, _ = box.rect
    k = min(stroke_px, (s + 1) // 2)
    img = frame.pixels.copy()
    img[t : t + k, l : l + s] = GREEN
    img[t + s - k : t + s, l : l + s] = GREEN
    img[t : t + s, l : l + k] = GREEN
    img[t : t + s, l + s - k : l + s] = GREEN
    return Frame(img, frame.index)


def stroke_mask(s_box: int, stroke_px: int = STROKE_PX) -> np.ndarray:
    """Boolean (s_box, s_box) mask of the pixels ``annotate`` paints, in box coordinates."""
    k = min(stroke_px, (s_box + 1) // 2)
    m = np.zeros((s_box, s_box), bool)
    m[:k] = m[-k:] = True
    m[:, :k] = m[:, -k:] = True
    return m


def crop(frame: Frame, box: PromptBox) -> Frame:
    _check_inside(frame, box)
    l, t, s, _ = box.rect
    return Frame(np.ascontiguousarray(frame.pixels[t : t + s, l : l + s]), frame.index)


def resize_for_backend(frame: Frame, target_w: int = BACKEND_SIZE[0], target_h: int = BACKEND_SIZE[1]) -> Frame:
    """Bilinear resize to exactly ``target_w`` x ``target_h``."""
    if target_w <= 0 or target_h <= 0:
        raise ValueError("target dims must be positive")
    if (frame.width, frame.height) == (target_w, target_h):
        return Frame(frame.pixels.copy(), frame.index)
    out = cv2.resize(frame.pixels, (target_w, target_h), interpolation=cv2.INTER_LINEAR)
    return Frame(out, frame.index)


@dataclass(frozen=True, eq=False)
class PromptedFrame:
    annotated: Frame
    cropped: Frame
    box: PromptBox
    raw: Frame  # unannotated source, used by the no-prompt ablations


def make_prompted(frame: Frame, center: tuple[int, int], s_box: int = S_BOX_DEFAULT,
                  stroke_px: int = STROKE_PX) -> PromptedFrame:
    box = prompt_box(center, frame.width, frame.height, s_box)
    return PromptedFrame(annotate(frame, box, stroke_px), crop(frame, box), box, frame)
