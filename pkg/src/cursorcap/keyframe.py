"""Temporal sampling and keyframe selection.

Strategies:

* ``model``: a small self-attention head scores each sampled crop, top-2 win;
* ``heuristic``: the window of large consecutive crop differences;
* ``start_end``: first and last sampled frame;
* ``ground_truth``: keylog-derived indices mapped into sampled space.

The head's numpy forward pass sums every reduction over tokens in sorted
order, so permuting the input rows permutes the scores bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .frame import Frame, png_bytes

N_SAMPLES = 10
EMBED_SIDE = 16
D_V = EMBED_SIDE * EMBED_SIDE
TAU = 0.3
STRATEGIES = ("model", "heuristic", "start_end", "ground_truth")
MAGIC = b"AKFH"
FORMAT_VERSION = 1
LN_EPS = 1e-5


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class KeyframeSelection:
    s: int
    e: int
    strategy: str

    def __post_init__(self):
        if not 0 <= self.s < self.e:
            raise ValueError(f"need 0 <= s < e, got ({self.s}, {self.e})")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")


# ---------------------------------------------------------------- sampling


def sample_indices(raw_count: int, n: int = N_SAMPLES) -> list[int]:
    if raw_count < 1 or n < 2:
        raise ValueError("need raw_count >= 1 and n >= 2")
    # exact integer round-half-up of i*(R-1)/(N-1)
    return [(2 * i * (raw_count - 1) + (n - 1)) // (2 * (n - 1)) for i in range(n)]


def sample_uniform(frames: Sequence[Frame], n: int = N_SAMPLES) -> tuple[list[Frame], list[int]]:
    idx = sample_indices(len(frames), n)
    return [frames[i] for i in idx], idx


def to_sampled(gt: tuple[int, int], indices: Sequence[int]) -> tuple[int, int]:
    """Map raw keyframes into sampled positions.

    ``s`` goes to the last sample at or before it, ``e`` to the first sample
    at or after it; positions are forced apart when both land on one sample.
    """
    s_raw, e_raw = gt
    s = max((k for k, i in enumerate(indices) if i <= s_raw), default=0)
    e = min((k for k, i in enumerate(indices) if i >= e_raw), default=len(indices) - 1)
    if e <= s:
        s, e = (s - 1, s) if s == len(indices) - 1 else (s, s + 1)
    return s, e


# ---------------------------------------------------------------- features


def embed(crop: Frame) -> np.ndarray:
    """256-d descriptor: 16x16 grayscale thumbnail, mean-centred, unit norm."""
    gray = crop.pixels.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    small = cv2.resize(gray, (EMBED_SIDE, EMBED_SIDE), interpolation=cv2.INTER_AREA).ravel()
    v = small - small.mean()
    norm = float(np.sqrt((v * v).sum()))
    # brightness offsets leave rounding noise far below this
    if norm < 1e-9:
        return np.zeros(D_V)
    return v / norm


def embed_all(crops: Sequence[Frame]) -> np.ndarray:
    return np.stack([embed(c) for c in crops])


class HttpEmbedder:
    """Embedding service adapter: POST a PNG, read newline-separated floats."""

    def __init__(self, url: str, dim: int, client=None, timeout: float = 30.0):
        import httpx

        self.url = url
        self.dim = dim
        self._client = client or httpx.Client(timeout=timeout)

    def __call__(self, crop: Frame) -> np.ndarray:
        resp = self._client.post(self.url, content=png_bytes(crop), headers={"Content-Type": "image/png"})
        resp.raise_for_status()
        vals = np.array([float(t) for t in resp.text.split()], dtype=np.float64)
        if vals.shape != (self.dim,):
            raise DimensionMismatch(f"embedding service returned {vals.size} values, expected {self.dim}")
        return vals


# ---------------------------------------------------------------- scoring head


@dataclass(frozen=True, eq=False)
class ScoringHead:
    """L post-norm self-attention blocks over frame tokens, then a linear score."""

    n_layers: int
    n_heads: int
    d_v: int
    blocks: tuple[dict[str, np.ndarray], ...]
    w_out: np.ndarray  # (d_v,)
    b_out: float
    seed: int = 0
    final_loss: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.d_v % self.n_heads:
            raise DimensionMismatch("d_v must be divisible by n_heads")
        if len(self.blocks) != self.n_layers:
            raise DimensionMismatch("block count differs from n_layers")
        d = self.d_v
        for blk in self.blocks:
            for name, shape in _block_shapes(d).items():
                if blk[name].shape != shape:
                    raise DimensionMismatch(f"{name} has shape {blk[name].shape}, expected {shape}")
        if self.w_out.shape != (d,):
            raise DimensionMismatch("w_out shape")

    def params(self) -> list[np.ndarray]:
        out = []
        for blk in self.blocks:
            out += [blk[k] for k in _block_shapes(self.d_v)]
        return out + [self.w_out, np.array([self.b_out])]

    def same_weights(self, other: "ScoringHead") -> bool:
        a, b = self.params(), other.params()
        return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _block_shapes(d: int) -> dict[str, tuple[int, ...]]:
    return {
        "wq": (d, d), "bq": (d,), "wk": (d, d), "bk": (d,), "wv": (d, d), "bv": (d,),
        "wo": (d, d), "bo": (d,), "ln_g": (d,), "ln_b": (d,),
    }


def init_head(seed: int = 0, n_layers: int = 2, n_heads: int = 4, d_v: int = D_V) -> ScoringHead:
    rng = np.random.default_rng(seed)
    lim = 1.0 / np.sqrt(d_v)
    blocks = []
    for _ in range(n_layers):
        blk = {}
        for name, shape in _block_shapes(d_v).items():
            if name == "ln_g":
                blk[name] = np.ones(shape)
            elif name == "ln_b" or name.startswith("b"):
                blk[name] = np.zeros(shape)
            else:
                blk[name] = rng.uniform(-lim, lim, size=shape)
        blocks.append(blk)
    w_out = rng.uniform(-lim, lim, size=d_v)
    return ScoringHead(n_layers, n_heads, d_v, tuple(blocks), w_out, 0.0, seed)


def _linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # row-local product: each token's output depends on that token alone,
    # never on a BLAS blocking that varies with its position
    return (x[:, :, None] * w[None, :, :]).sum(axis=1) + b


def _sorted_sum(terms: np.ndarray, axis: int) -> np.ndarray:
    return np.sort(terms, axis=axis).sum(axis=axis)


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * g + b


def _attention(x: np.ndarray, blk: dict[str, np.ndarray], n_heads: int) -> np.ndarray:
    n, d = x.shape
    dh = d // n_heads
    q = _linear(x, blk["wq"], blk["bq"]).reshape(n, n_heads, dh)
    k = _linear(x, blk["wk"], blk["bk"]).reshape(n, n_heads, dh)
    v = _linear(x, blk["wv"], blk["bv"]).reshape(n, n_heads, dh)
    # logits[i, j, h]; the reduction runs over the head dim, not over tokens
    logits = (q[:, None, :, :] * k[None, :, :, :]).sum(axis=-1) / np.sqrt(dh)
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p = p / _sorted_sum(p, axis=1)[:, None, :]
    mixed = _sorted_sum(p[:, :, :, None] * v[None, :, :, :], axis=1)  # (n, h, dh)
    return _linear(mixed.reshape(n, d), blk["wo"], blk["bo"])


def score_frames(head: ScoringHead, feats: np.ndarray) -> np.ndarray:
    """One score per row of ``feats`` (N x d_v)."""
    x = np.asarray(feats, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.d_v:
        raise DimensionMismatch(f"features {x.shape} do not match head dim {head.d_v}")
    if x.shape[0] < 2:
        raise ValueError("need at least two frames")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    for blk in head.blocks:
        x = _layer_norm(x + _attention(x, blk, head.n_heads), blk["ln_g"], blk["ln_b"])
    return (x * head.w_out).sum(axis=1) + head.b_out


# ---------------------------------------------------------------- selection


def select_keyframes(scores: Sequence[float], strategy: str = "model") -> KeyframeSelection:
    """Top-2 scores, ties toward the lower index, returned in time order."""
    sc = np.asarray(scores, dtype=np.float64)
    if sc.ndim != 1 or sc.size < 2:
        raise ValueError("need at least two scores")
    order = sorted(range(sc.size), key=lambda i: (-sc[i], i))
    s, e = sorted(order[:2])
    return KeyframeSelection(s, e, strategy)


def crop_diffs(crops: Sequence[Frame]) -> np.ndarray:
    return np.array([
        np.abs(a.pixels.astype(np.int16) - b.pixels.astype(np.int16)).mean()
        for a, b in zip(crops, crops[1:])
    ])


def heuristic_keyframes(crops: Sequence[Frame], tau: float = TAU) -> KeyframeSelection:
    """Bracket the window where consecutive crops change by more than ``tau`` of the peak change."""
    n = len(crops)
    if n < 2:
        raise ValueError("need at least two crops")
    return _window(crop_diffs(crops), n, tau)


def _window(d: np.ndarray, n: int, tau: float) -> KeyframeSelection:
    peak = d.max()
    if peak == 0:
        return KeyframeSelection(0, n - 1, "heuristic")
    window = np.flatnonzero(d > tau * peak)
    return KeyframeSelection(int(window[0]), int(window[-1]) + 1, "heuristic")


def cursor_guard(library=None, margin: int = 2) -> tuple[int, int, int, int]:
    """Hotspot-relative rect covering every sprite of the detector library."""
    from .cursor import default_library

    lib = library or default_library()
    x0 = y0 = 0
    x1 = y1 = 1
    for t in lib.templates:
        h, w = t.shape
        hx, hy = t.hotspot
        x0, y0 = min(x0, -hx), min(y0, -hy)
        x1, y1 = max(x1, w - hx), max(y1, h - hy)
    return (x0 - margin, y0 - margin, x1 - x0 + 2 * margin, y1 - y0 + 2 * margin)


def colocated_diffs(
    frames: Sequence[Frame],
    centers: Sequence[tuple[int, int]],
    s_box: int,
    guard: tuple[int, int, int, int] | None = None,
) -> np.ndarray:
    """Change between consecutive frames, measured inside shared boxes.

    Each pair is compared inside the prompt box of either frame (the larger
    mean absolute difference wins) with both cursor footprints blanked, so a
    moving cursor or a box that follows it adds nothing.
    """
    from .prompting import prompt_box

    if len(frames) != len(centers):
        raise ValueError("need one center per frame")
    gx, gy, gw, gh = guard if guard is not None else cursor_guard()
    H, W = frames[0].height, frames[0].width
    keep = np.ones((H, W), bool)
    out = []
    for t in range(len(frames) - 1):
        keep[:] = True
        for cx, cy in (centers[t], centers[t + 1]):
            keep[max(cy + gy, 0) : max(cy + gy + gh, 0), max(cx + gx, 0) : max(cx + gx + gw, 0)] = False
        best = 0.0
        for c in (centers[t], centers[t + 1]):
            l, tp, sz, _ = prompt_box(c, W, H, s_box).rect
            a = frames[t].pixels[tp : tp + sz, l : l + sz].astype(np.int16)
            b = frames[t + 1].pixels[tp : tp + sz, l : l + sz].astype(np.int16)
            diff = np.abs(a - b).sum(axis=2) * keep[tp : tp + sz, l : l + sz]
            best = max(best, float(diff.sum()) / (3 * sz * sz))
        out.append(best)
    return np.array(out)


def heuristic_from_frames(
    frames: Sequence[Frame],
    centers: Sequence[tuple[int, int]],
    s_box: int,
    tau: float = TAU,
) -> KeyframeSelection:
    """The heuristic window rule applied to :func:`colocated_diffs`."""
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    return _window(colocated_diffs(frames, centers, s_box), len(frames), tau)


def start_end_keyframes(n: int) -> KeyframeSelection:
    if n < 2:
        raise ValueError("need n >= 2")
    return KeyframeSelection(0, n - 1, "start_end")


def ground_truth_keyframes(gt: tuple[int, int], indices: Sequence[int]) -> KeyframeSelection:
    s, e = to_sampled(gt, indices)
    return KeyframeSelection(s, e, "ground_truth")


# ---------------------------------------------------------------- training


def two_hot(n: int, s: int, e: int) -> np.ndarray:
    t = np.zeros(n)
    t[[s, e]] = 1.0
    return t


def bce_loss(head: ScoringHead, samples: Sequence[tuple[np.ndarray, tuple[int, int]]]) -> float:
    """Mean per-frame binary cross-entropy of sigmoid(scores) against two-hot targets."""
    total, count = 0.0, 0
    for feats, (s, e) in samples:
        z = score_frames(head, feats)
        t = two_hot(len(z), s, e)
        # log(1 + exp(-|z|)) form keeps large logits finite
        total += float((np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))).sum())
        count += len(z)
    return total / max(count, 1)


def train_head(
    samples: Sequence[tuple[np.ndarray, tuple[int, int]]],
    epochs: int = 60,
    lr: float = 1e-3,
    seed: int = 0,
    n_layers: int = 2,
    n_heads: int = 4,
    batch_size: int = 16,
    weight_decay: float = 0.0,
    shift_noise: float = 0.0,
) -> ScoringHead:
    """Fit a head with Adam on per-frame BCE; deterministic for a given seed.

    Gradients come from torch in float64 on one thread; the returned head
    carries numpy copies of the weights and the final training loss.
    Samples are batched by frame count.
    """
    if not samples:
        raise ValueError("need at least one training sample")
    d_v = samples[0][0].shape[1]
    for feats, _ in samples:
        if feats.ndim != 2 or feats.shape[1] != d_v:
            raise DimensionMismatch("inconsistent feature dims across samples")
    head = init_head(seed, n_layers, n_heads, d_v)
    if epochs == 0:
        return head

    import torch

    torch.set_num_threads(1)
    torch.manual_seed(seed)
    names = list(_block_shapes(d_v))
    tensors = [{k: torch.tensor(blk[k], requires_grad=True) for k in names} for blk in head.blocks]
    w_out = torch.tensor(head.w_out, requires_grad=True)
    b_out = torch.tensor(head.b_out, dtype=torch.float64, requires_grad=True)
    params = [t for blk in tensors for t in blk.values()] + [w_out, b_out]
    opt = torch.optim.AdamW(params, lr=lr, weight_decay=weight_decay)
    dh = d_v // n_heads

    def forward(x):  # (B, N, d) -> (B, N)
        bsz, n, _ = x.shape
        for blk in tensors:
            def heads(w, b):
                return (x @ w + b).reshape(bsz, n, n_heads, dh).transpose(1, 2)

            q, k, v = heads(blk["wq"], blk["bq"]), heads(blk["wk"], blk["bk"]), heads(blk["wv"], blk["bv"])
            att = torch.softmax(q @ k.transpose(-1, -2) / dh**0.5, dim=-1)
            mixed = (att @ v).transpose(1, 2).reshape(bsz, n, d_v)
            x = torch.nn.functional.layer_norm(
                x + mixed @ blk["wo"] + blk["bo"], (d_v,), blk["ln_g"], blk["ln_b"], eps=LN_EPS)
        return x @ w_out + b_out

    groups: dict[int, list[int]] = {}
    for i, (f, _) in enumerate(samples):
        groups.setdefault(len(f), []).append(i)
    xs = {n: torch.tensor(np.stack([samples[i][0] for i in ids]), dtype=torch.float64) for n, ids in groups.items()}
    ts = {n: torch.tensor(np.stack([two_hot(n, *samples[i][1]) for i in ids])) for n, ids in groups.items()}
    order_rng = np.random.default_rng([seed, 1])
    bce = torch.nn.functional.binary_cross_entropy_with_logits
    for _ in range(epochs):
        batches = [(n, perm[j : j + batch_size])
                   for n in sorted(groups)
                   for perm in [order_rng.permutation(len(groups[n]))]
                   for j in range(0, len(perm), batch_size)]
        for bi in order_rng.permutation(len(batches)):
            n, rows = batches[bi]
            rows = torch.as_tensor(rows)
            x = xs[n][rows]
            if shift_noise > 0:
                # one offset per sample, shared by its frames: keeps duplicate frames identical
                x = x + torch.tensor(order_rng.normal(0.0, shift_noise, size=(len(rows), 1, d_v)))
            opt.zero_grad()
            loss = bce(forward(x), ts[n][rows])
            loss.backward()
            opt.step()

    blocks = tuple({k: blk[k].detach().numpy().copy() for k in names} for blk in tensors)
    trained = ScoringHead(n_layers, n_heads, d_v, blocks, w_out.detach().numpy().copy(),
                          float(b_out.detach()), seed)
    return ScoringHead(n_layers, n_heads, d_v, blocks, trained.w_out, trained.b_out, seed,
                       final_loss=bce_loss(trained, samples))


# ---------------------------------------------------------------- persistence


def save_head(head: ScoringHead, path: str | Path) -> None:
    """16-byte header (magic, u32 version, u16 L, u16 h, u32 d_v) then little-endian float32 weights."""
    header = MAGIC + struct.pack("<IHHI", FORMAT_VERSION, head.n_layers, head.n_heads, head.d_v)
    body = np.concatenate([p.ravel() for p in head.params()]).astype("<f4").tobytes()
    Path(path).write_bytes(header + body)


def load_head(path: str | Path) -> ScoringHead:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a scoring-head weights file")
    version, n_layers, n_heads, d_v = struct.unpack("<IHHI", raw[4:16])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported weights version {version}")
    flat = np.frombuffer(raw[16:], dtype="<f4").astype(np.float64)
    shapes = _block_shapes(d_v)
    need = n_layers * sum(int(np.prod(s)) for s in shapes.values()) + d_v + 1
    if flat.size != need:
        raise DimensionMismatch(f"{path}: {flat.size} weights, expected {need}")
    pos = 0
    blocks = []
    for _ in range(n_layers):
        blk = {}
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            blk[name] = flat[pos : pos + size].reshape(shape).copy()
            pos += size
        blocks.append(blk)
    w_out = flat[pos : pos + d_v].copy()
    b_out = float(flat[pos + d_v])
    return ScoringHead(n_layers, n_heads, d_v, tuple(blocks), w_out, b_out)
