"""Cursor grounding: find the pointer hotspot in each frame.

The built-in detector is a masked normalized cross-correlation matcher over
a sprite library at scales 1.0, 1.5 and 2.0.  Candidates come from a
mask-aware NCC pass (``cv2.filter2D`` correlations) on a zero-padded
half-resolution copy of the frame, against a template averaged over all
sub-pixel placements; each candidate is then rescored exactly at full
resolution in a small window.  :class:`HttpCursorDetector` speaks the external
detector protocol (PNG in, ``"x y confidence"`` or ``"NONE"`` out).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import cv2
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .frame import Frame, png_bytes
from .sprites import BUILTIN_SPRITES, SCALES, Sprite

DEFAULT_THRESHOLD = 0.85
COARSE = 2  # downsampling factor of the candidate pass
TOP_K = 3  # candidates kept per template
FLAT_STD = 2.0  # coarse windows with a masked std below this (gray levels) are skipped
MIN_VISIBLE = 0.3  # smallest on-screen fraction of a sprite that may match at a frame edge


class CursorNotFound(LookupError):
    def __init__(self, frame_idx: int, best_score: float):
        super().__init__(f"no cursor in frame {frame_idx} (best score {best_score:.3f})")
        self.frame_idx = frame_idx
        self.best_score = best_score


class AllFramesUndetected(LookupError):
    pass


@dataclass(frozen=True)
class CursorFix:
    frame_idx: int
    center: tuple[int, int]
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


class CursorDetector(Protocol):
    def detect(self, frame: Frame) -> CursorFix: ...


@dataclass(frozen=True, eq=False)
class _Template:
    sprite_id: str
    mask: np.ndarray  # bool (h, w)
    hotspot: tuple[int, int]
    tc: np.ndarray  # zero-mean template values at mask pixels, float64
    tnorm: float
    factor: int  # downsampling factor of the candidate pass
    coarse_tc: np.ndarray  # float32, zero-mean, 0 off the coarse mask
    coarse_mask: np.ndarray  # float32 0/1
    coarse_norm: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


def _phase_averaged(gray: np.ndarray, mask: np.ndarray, f: int) -> tuple[np.ndarray, np.ndarray]:
    """Downsample by ``f`` averaged over all ``f*f`` sub-pixel placements.

    Returns (mean intensity over covered pixels, coverage fraction).
    """
    h, w = gray.shape
    ch, cw = -(-(h + f - 1) // f), -(-(w + f - 1) // f)
    acc_g = np.zeros((ch, cw))
    acc_m = np.zeros((ch, cw))
    for dy in range(f):
        for dx in range(f):
            g = np.zeros((ch * f, cw * f))
            m = np.zeros((ch * f, cw * f))
            g[dy : dy + h, dx : dx + w] = gray * mask
            m[dy : dy + h, dx : dx + w] = mask
            acc_g += g.reshape(ch, f, cw, f).sum(axis=(1, 3))
            acc_m += m.reshape(ch, f, cw, f).sum(axis=(1, 3))
    mean = acc_g / np.maximum(acc_m, 1e-9)
    return mean, acc_m / (f**4)


def _prepare(sprite: Sprite) -> _Template:
    gray = sprite.gray.astype(np.float64)
    mask = sprite.mask
    vals = gray[mask]
    tc = vals - vals.mean()
    f = COARSE
    mean, cover = _phase_averaged(gray, mask, f)
    cmask = cover >= 0.35
    ctc = np.where(cmask, mean - mean[cmask].mean(), 0.0)
    return _Template(
        sprite.id, mask, sprite.hotspot, tc, float(np.sqrt((tc**2).sum())),
        f, ctc.astype(np.float32), cmask.astype(np.float32), float(np.sqrt((ctc**2).sum())),
    )


class CursorSpriteLibrary:
    """Immutable set of cursor sprites with precomputed scaled templates."""

    def __init__(self, sprites: Sequence[Sprite], scales: Sequence[float] = SCALES):
        if not sprites:
            raise ValueError("sprite library is empty")
        self.sprites = tuple(sprites)
        self.scales = tuple(scales)
        self._templates = tuple(_prepare(s.scaled(k)) for s in self.sprites for k in self.scales)

    @property
    def templates(self) -> tuple[_Template, ...]:
        return self._templates


def default_library() -> CursorSpriteLibrary:
    return CursorSpriteLibrary(list(BUILTIN_SPRITES.values()))


def gray_of(frame: Frame) -> np.ndarray:
    return cv2.cvtColor(frame.pixels, cv2.COLOR_RGB2GRAY)


def masked_ncc(patches: np.ndarray, tpl: _Template) -> np.ndarray:
    """Mask-aware NCC of ``tpl`` against patches shaped ``(..., h, w)``.

    Zero-variance patches score 0.
    """
    vals = patches[..., tpl.mask].astype(np.float64)
    vals = vals - vals.mean(axis=-1, keepdims=True)
    num = vals @ tpl.tc
    den = np.sqrt((vals**2).sum(axis=-1)) * tpl.tnorm
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 1e-6, num / den, 0.0)


def _correlate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return cv2.filter2D(img, cv2.CV_32F, kernel, anchor=(0, 0), borderType=cv2.BORDER_CONSTANT)


def _partial_ncc(s_i, s_ii, s_it, s_t, s_tt, n, m: float, flat: float = 0.0) -> np.ndarray:
    """NCC over the visible part of a mask from its correlation sums.

    ``n`` counts visible mask pixels out of ``m``; placements showing less
    than ``MIN_VISIBLE`` of the mask, or flatter than ``flat`` per pixel,
    score 0.
    """
    n = np.maximum(n, 1e-9)
    var_i = s_ii - s_i * s_i / n
    var_t = s_tt - s_t * s_t / n
    ok = (n >= MIN_VISIBLE * m - 1e-6) & (var_i > np.maximum(n * flat, 1e-6)) & (var_t > 1e-6)
    den = np.sqrt(np.where(ok, var_i * var_t, 1.0))
    return np.where(ok, (s_it - s_i * s_t / n) / den, 0.0)


def _coarse_response(img: np.ndarray, img2: np.ndarray, valid_terms, tpl: _Template) -> np.ndarray:
    """Coarse NCC at every placement of the padded image that overlaps it."""
    ch, cw = tpl.coarse_tc.shape
    vh, vw = img.shape[0] - ch + 1, img.shape[1] - cw + 1
    if vh <= 0 or vw <= 0:
        return np.zeros((0, 0), np.float32)
    s_t, s_tt, n = (a[:vh, :vw] for a in valid_terms)
    s_it = _correlate(img, tpl.coarse_tc)[:vh, :vw]
    s_i = _correlate(img, tpl.coarse_mask)[:vh, :vw]
    s_ii = _correlate(img2, tpl.coarse_mask)[:vh, :vw]
    resp = _partial_ncc(s_i, s_ii, s_it, s_t, s_tt, n, float(tpl.coarse_mask.sum()), FLAT_STD**2)
    return resp.astype(np.float32)


def _window_ncc(region: np.ndarray, valid: np.ndarray, tpl: _Template) -> np.ndarray:
    """Exact NCC of every ``tpl``-sized window of ``region``, restricted to ``valid`` pixels."""
    h, w = tpl.shape
    vals = sliding_window_view(region, (h, w))[..., tpl.mask].astype(np.float64)
    vis = sliding_window_view(valid, (h, w))[..., tpl.mask].astype(np.float64)
    vals = vals * vis
    t = tpl.tc
    return _partial_ncc(vals.sum(-1), (vals * vals).sum(-1), vals @ t, vis @ t, vis @ (t * t),
                        vis.sum(-1), float(t.size))


def _top_k(resp: np.ndarray, k: int, radius: tuple[int, int]) -> list[tuple[int, int]]:
    out = []
    if resp.size == 0:
        return out
    ry, rx = radius
    resp = resp.copy()
    for _ in range(k):
        _, mx, _, (x, y) = cv2.minMaxLoc(resp)
        if mx <= 0:
            break
        out.append((y, x))
        resp[max(0, y - ry) : y + ry + 1, max(0, x - rx) : x + rx + 1] = -1.0
    return out


class TemplateCursorDetector:
    """Built-in matcher; immutable, safe to share across threads."""

    def __init__(self, library: CursorSpriteLibrary | None = None, threshold: float = DEFAULT_THRESHOLD):
        if not 0.0 < threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        self.library = library or default_library()
        self.threshold = threshold
        self._cache: dict = {}

    def score(self, frame: Frame, only: int | None = None) -> tuple[float, tuple[int, int]]:
        """Best NCC score and hotspot position, before thresholding.

        ``only`` restricts the search to one template index.
        """
        best, center, _ = self._search(frame, only)
        return best, center

    def _valid_terms(self, ti: int, shape: tuple[int, int]):
        """Frame-independent coarse sums over the padded validity map, cached per frame shape."""
        key = (ti, shape)
        hit = self._cache.get(key)
        if hit is None:
            tpl = self.library.templates[ti]
            ch, cw = tpl.coarse_tc.shape
            valid = np.pad(np.ones(shape, np.float32), ((ch - 1, ch - 1), (cw - 1, cw - 1)))
            hit = (_correlate(valid, tpl.coarse_tc), _correlate(valid, tpl.coarse_tc * tpl.coarse_tc),
                   _correlate(valid, tpl.coarse_mask))
            self._cache[key] = hit
        return hit

    def _search(self, frame: Frame, only: int | None = None) -> tuple[float, tuple[int, int], int]:
        gray = gray_of(frame)
        H, W = gray.shape
        pyramid: dict[int, np.ndarray] = {}
        best, center, which = -1.0, (0, 0), -1
        templates = self.library.templates
        for ti in range(len(templates)) if only is None else (only,):
            tpl = templates[ti]
            h, w = tpl.shape
            if h > H or w > W:
                continue
            f = tpl.factor
            if f not in pyramid:
                pyramid[f] = cv2.resize(gray, (W // f, H // f), interpolation=cv2.INTER_AREA).astype(np.float32) - 128.0
            small = pyramid[f]
            ch, cw = tpl.coarse_tc.shape
            padded = np.pad(small, ((ch - 1, ch - 1), (cw - 1, cw - 1)))
            resp = _coarse_response(padded, padded * padded, self._valid_terms(ti, small.shape), tpl)
            for cy, cx in _top_k(resp, TOP_K, (max(1, ch // 2), max(1, cw // 2))):
                # candidate's top-left in full-resolution frame coordinates (may be negative)
                ty, tx = (cy - ch + 1) * f, (cx - cw + 1) * f
                y0, y1 = max(ty - f, 1 - h), min(ty + 2 * f, H - 1)
                x0, x1 = max(tx - f, 1 - w), min(tx + 2 * f, W - 1)
                if y0 > y1 or x0 > x1:
                    continue
                region = np.zeros((y1 - y0 + h, x1 - x0 + w), np.uint8)
                valid = np.zeros(region.shape, bool)
                ry0, rx0 = max(y0, 0), max(x0, 0)
                ry1, rx1 = min(y1 + h, H), min(x1 + w, W)
                region[ry0 - y0 : ry1 - y0, rx0 - x0 : rx1 - x0] = gray[ry0:ry1, rx0:rx1]
                valid[ry0 - y0 : ry1 - y0, rx0 - x0 : rx1 - x0] = True
                scores = _window_ncc(region, valid, tpl)
                iy, ix = np.unravel_index(int(np.argmax(scores)), scores.shape)
                s = float(scores[iy, ix])
                if s > best:
                    best, which = s, ti
                    center = (x0 + int(ix) + tpl.hotspot[0], y0 + int(iy) + tpl.hotspot[1])
        cx = min(max(center[0], 0), W - 1)
        cy = min(max(center[1], 0), H - 1)
        return best, (cx, cy), which

    def detect(self, frame: Frame) -> CursorFix:
        best, center = self.score(frame)
        if best < self.threshold:
            raise CursorNotFound(frame.index, best)
        return CursorFix(frame.index, center, float(min(max(best, 0.0), 1.0)))

    def detect_hinted(self, frame: Frame, hint: int | None) -> tuple[CursorFix, int]:
        """Try template ``hint`` first, falling back to the full library.

        Within one recording the sprite and scale rarely change, so the
        template that matched the previous frame usually matches again.
        """
        if hint is not None:
            best, center, which = self._search(frame, hint)
            if best >= self.threshold:
                return CursorFix(frame.index, center, float(min(best, 1.0))), which
        best, center, which = self._search(frame)
        if best < self.threshold:
            raise CursorNotFound(frame.index, best)
        return CursorFix(frame.index, center, float(min(max(best, 0.0), 1.0))), which


def detect(frame: Frame, library: CursorSpriteLibrary | None = None, threshold: float = DEFAULT_THRESHOLD) -> CursorFix:
    return TemplateCursorDetector(library, threshold).detect(frame)


class HttpCursorDetector:
    """Adapter for an external detector service.

    POSTs the frame as ``image/png`` to ``url``; the reply body is one line,
    either ``"x y confidence"`` or ``"NONE"``.
    """

    def __init__(self, url: str, client=None, timeout: float = 30.0):
        import httpx

        self.url = url
        self._client = client or httpx.Client(timeout=timeout)

    def detect(self, frame: Frame) -> CursorFix:
        resp = self._client.post(self.url, content=png_bytes(frame), headers={"Content-Type": "image/png"})
        resp.raise_for_status()
        return parse_detector_reply(resp.text, frame)


def parse_detector_reply(text: str, frame: Frame) -> CursorFix:
    body = text.strip()
    if body.upper() == "NONE":
        raise CursorNotFound(frame.index, 0.0)
    try:
        xs, ys, cs = body.split()
        x, y, conf = float(xs), float(ys), float(cs)
    except ValueError:
        raise ValueError(f"malformed detector reply {text!r}") from None
    cx = min(max(int(round(x)), 0), frame.width - 1)
    cy = min(max(int(round(y)), 0), frame.height - 1)
    return CursorFix(frame.index, (cx, cy), min(max(conf, 0.0), 1.0))


def detect_sequence(
    frames: Sequence[Frame],
    library: CursorSpriteLibrary | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    detector: CursorDetector | None = None,
) -> list[CursorFix]:
    """One fix per frame; misses copy the nearest detected fix (earlier wins ties) with confidence 0."""
    if not frames:
        raise ValueError("need at least one frame")
    det = detector or TemplateCursorDetector(library, threshold)
    found: list[CursorFix | None] = []
    hint = None
    for fr in frames:
        try:
            if isinstance(det, TemplateCursorDetector):
                fix, hint = det.detect_hinted(fr, hint)
            else:
                fix = det.detect(fr)
            found.append(fix)
        except CursorNotFound:
            found.append(None)
    hits = [i for i, f in enumerate(found) if f is not None]
    if not hits:
        raise AllFramesUndetected(f"cursor not found in any of {len(frames)} frames")
    out = []
    for i, (fr, f) in enumerate(zip(frames, found)):
        if f is None:
            j = min(hits, key=lambda h: (abs(h - i), h))
            f = CursorFix(fr.index, found[j].center, 0.0)
        out.append(f)
    return out


def format_fixes(fixes: Sequence[CursorFix]) -> str:
    return "".join(f"{f.frame_idx}\t{f.center[0]}\t{f.center[1]}\t{f.confidence!r}\n" for f in fixes)


def parse_fixes(text: str) -> list[CursorFix]:
    out = []
    for line in text.splitlines():
        if line.strip():
            i, x, y, c = line.split("\t")
            out.append(CursorFix(int(i), (int(x), int(y)), float(c)))
    return out
