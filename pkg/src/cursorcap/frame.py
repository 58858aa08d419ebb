"""Frame container and PNG persistence."""

from __future__ import annotations

import os
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

FRAME_PATTERN = "frame_{:04d}.png"


@dataclass(frozen=True, eq=False)
class Frame:
    """One screenshot: an ``(H, W, 3)`` uint8 RGB buffer plus its index in the video."""

    pixels: np.ndarray
    index: int = 0

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.dtype != np.uint8:
            raise ValueError(f"expected (H, W, 3) uint8 pixels, got {self.pixels.shape} {self.pixels.dtype}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def gray(self) -> np.ndarray:
        """Luma as float32 (ITU-R 601 weights)."""
        p = self.pixels.astype(np.float32)
        return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]

    def same_pixels(self, other: "Frame") -> bool:
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    def with_index(self, index: int) -> "Frame":
        return Frame(self.pixels, index)


def png_bytes(frame: Frame) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(frame.pixels).save(buf, format="PNG", compress_level=1)
    return buf.getvalue()


def save_frame(frame: Frame, path: str | Path) -> None:
    # compress_level=1 keeps 1080p flat-shaded frames at a few ms each
    Image.fromarray(frame.pixels).save(path, format="PNG", compress_level=1)


def load_frame(path: str | Path, index: int = 0) -> Frame:
    with Image.open(path) as im:
        return Frame(np.asarray(im.convert("RGB")).copy(), index)


def save_frames(frames: list[Frame], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    for i, fr in enumerate(frames):
        p = directory / FRAME_PATTERN.format(i)
        if p.exists():
            p.unlink()
        if paths and fr.same_pixels(frames[i - 1]):
            # idle stretches repeat the previous screenshot; link instead of re-encoding
            try:
                os.link(paths[-1], p)
            except OSError:
                shutil.copyfile(paths[-1], p)
        else:
            save_frame(fr, p)
        paths.append(p)
    return paths


def frame_paths(directory: str | Path) -> list[Path]:
    """Sorted ``frame_%04d.png`` files of a frame directory."""
    return sorted(Path(directory).glob("frame_[0-9][0-9][0-9][0-9].png"))


def load_frames(directory: str | Path, indices: list[int] | None = None) -> list[Frame]:
    paths = frame_paths(directory)
    if indices is None:
        indices = list(range(len(paths)))
    return [load_frame(paths[i], i) for i in indices]
