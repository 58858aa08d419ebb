"""Built-in cursor sprites.

Each sprite is drawn from an ASCII mask: ``B`` black outline, ``W`` white
fill, ``.`` transparent.  The hotspot is the pixel the OS treats as the
pointer position.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import cv2
import numpy as np

_ARROW = """
B...........
BB..........
BWB.........
BWWB........
BWWWB.......
BWWWWB......
BWWWWWB.....
BWWWWWWB....
BWWWWWWWB...
BWWWWWWWWB..
BWWWWWWWWWB.
BWWWWWWBBBBB
BWWWBWWB....
BWWBBWWB....
BWB..BWWB...
BB...BWWB...
B.....BWWB..
......BWWB..
.......BB...
"""

_HAND = """
.....BB.........
....BWWB........
....BWWB........
....BWWB........
....BWWB........
....BWWBBB......
....BWWBWWBBB...
....BWWBWWBWWBB.
.BB.BWWBWWBWWBWB
BWWBBWWWWWWWWBWB
BWWWBWWWWWWWWWWB
.BWWBWWWWWWWWWWB
..BWWWWWWWWWWWWB
..BWWWWWWWWWWWB.
...BWWWWWWWWWWB.
...BWWWWWWWWWB..
....BWWWWWWWWB..
....BWWWWWWWWB..
....BBBBBBBBBB..
"""

SCALES = (1.0, 1.5, 2.0)


@dataclass(frozen=True, eq=False)
class Sprite:
    id: str
    rgba: np.ndarray  # (h, w, 4) uint8, alpha is 0 or 255
    hotspot: tuple[int, int]  # (x, y) inside the sprite

    def __post_init__(self):
        h, w = self.rgba.shape[:2]
        hx, hy = self.hotspot
        if h == 0 or w == 0 or not self.mask.any():
            raise ValueError(f"sprite {self.id!r} is empty")
        if not (0 <= hx < w and 0 <= hy < h):
            raise ValueError(f"hotspot {self.hotspot} outside {w}x{h} sprite {self.id!r}")

    @property
    def mask(self) -> np.ndarray:
        return self.rgba[..., 3] > 0

    @property
    def gray(self) -> np.ndarray:
        p = self.rgba[..., :3].astype(np.float32)
        return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]

    def scaled(self, scale: float) -> "Sprite":
        if scale == 1.0:
            return self
        return _scaled(self, scale)


@lru_cache(maxsize=64)
def _scaled(sprite: Sprite, scale: float) -> Sprite:
    h, w = sprite.rgba.shape[:2]
    nw, nh = max(1, round(w * scale)), max(1, round(h * scale))
    rgba = cv2.resize(sprite.rgba, (nw, nh), interpolation=cv2.INTER_NEAREST)
    hx = min(nw - 1, int(sprite.hotspot[0] * scale))
    hy = min(nh - 1, int(sprite.hotspot[1] * scale))
    return Sprite(f"{sprite.id}@{scale:g}", rgba, (hx, hy))


def sprite_from_ascii(sprite_id: str, art: str, hotspot: tuple[int, int]) -> Sprite:
    rows = [r for r in art.strip("\n").splitlines()]
    w = max(len(r) for r in rows)
    rgba = np.zeros((len(rows), w, 4), np.uint8)
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            if ch == "B":
                rgba[y, x] = (0, 0, 0, 255)
            elif ch == "W":
                rgba[y, x] = (255, 255, 255, 255)
    return Sprite(sprite_id, rgba, hotspot)


BUILTIN_SPRITES: dict[str, Sprite] = {
    "arrow": sprite_from_ascii("arrow", _ARROW, (0, 0)),
    "hand": sprite_from_ascii("hand", _HAND, (5, 0)),
}


def get_sprite(sprite_id: str) -> Sprite:
    try:
        return BUILTIN_SPRITES[sprite_id]
    except KeyError:
        raise KeyError(f"unknown cursor sprite {sprite_id!r}; known: {sorted(BUILTIN_SPRITES)}") from None
