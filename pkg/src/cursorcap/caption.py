"""Caption queries and backends.

A query holds the before/after full frames with the green prompt box and the
two cursor crops, in that order, plus a fixed text prompt.  Backends:

* ``oracle`` returns the synthetic sample's ground-truth caption;
* ``stub`` returns a fixed reply;
* ``remote`` posts a chat-completions request with base64 PNG image parts.
"""

from __future__ import annotations

import base64
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol

from .frame import Frame, png_bytes
from .prompting import BACKEND_SIZE, PromptedFrame, resize_for_backend

log = logging.getLogger(__name__)

QUERY_TEMPLATE = (
    "The cursor is located in the annotated green bounding box. The third and fourth image shows "
    "the cropped detailed image around the cursor before and after the action."
)
INSTRUCTION = "Describe the single GUI action shown, naming the action type and the GUI element."
RETRIES = 3
BACKOFF_S = (1.0, 2.0, 4.0)
MAX_IN_FLIGHT = 4


class BackendUnavailable(RuntimeError):
    pass


class BackendRejected(RuntimeError):
    pass


@dataclass(frozen=True)
class QueryConfig:
    """Ablation switches; the defaults give the full four-image query."""

    resize: tuple[int, int] | None = BACKEND_SIZE
    crop: bool = True
    annotate: bool = True


@dataclass(frozen=True, eq=False)
class CaptionQuery:
    images: tuple[Frame, ...]
    text: str
    meta: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class CaptionResult:
    text: str
    backend_id: str
    latency_ms: int


def query_text(config: QueryConfig = QueryConfig()) -> str:
    if config.annotate and config.crop:
        return f"{QUERY_TEMPLATE} {INSTRUCTION}"
    if config.annotate:
        return f"The cursor is located in the annotated green bounding box. {INSTRUCTION}"
    if config.crop:
        return ("The third and fourth image shows the cropped detailed image around the cursor "
                f"before and after the action. {INSTRUCTION}")
    return f"The two images are the first and last screenshots of the action. {INSTRUCTION}"


def build_query(
    prompted_s: PromptedFrame,
    prompted_e: PromptedFrame,
    config: QueryConfig = QueryConfig(),
    meta: Mapping[str, object] | None = None,
) -> CaptionQuery:
    """Images in the order [full_s, full_e, crop_s, crop_e].

    Full frames carry the green box unless ``config.annotate`` is off and
    are resized to ``config.resize``; crops are dropped when ``config.crop``
    is off.
    """
    if prompted_s.box.s_box != prompted_e.box.s_box:
        raise ValueError("before/after prompts use different box sizes")
    full = [p.annotated if config.annotate else p.raw for p in (prompted_s, prompted_e)]
    if config.resize is not None:
        full = [resize_for_backend(f, *config.resize) for f in full]
    images = list(full)
    if config.crop:
        images += [prompted_s.cropped, prompted_e.cropped]
    info = dict(meta or {})
    info.update(s_box=prompted_s.box.s_box, crop=config.crop, annotate=config.annotate,
                layout="full_s,full_e" + (",crop_s,crop_e" if config.crop else ""))
    return CaptionQuery(tuple(images), query_text(config), info)


# ---------------------------------------------------------------- backends


class CaptionBackend(Protocol):
    backend_id: str

    def __call__(self, query: CaptionQuery) -> str: ...


class OracleBackend:
    """Looks up the ground-truth caption by ``query.meta["sample_id"]``."""

    backend_id = "oracle"

    def __init__(self, captions: Mapping[str, str]):
        self.captions = dict(captions)

    def __call__(self, query: CaptionQuery) -> str:
        sid = query.meta.get("sample_id")
        if sid not in self.captions:
            raise BackendRejected(f"oracle has no caption for sample {sid!r}")
        return self.captions[sid]


class StubBackend:
    backend_id = "stub"

    def __init__(self, reply: str = "Left-Click on Export button"):
        self.reply = reply

    def __call__(self, query: CaptionQuery) -> str:
        return self.reply


def oracle_caption(sample) -> str:
    return sample.gt_caption


def data_url(frame: Frame) -> str:
    return "data:image/png;base64," + base64.b64encode(png_bytes(frame)).decode("ascii")


class ChatClient:
    """Chat-completions transport with bounded concurrency and retry.

    Transport errors and 5xx replies are retried ``retries`` times with the
    ``backoff`` sleeps; 4xx replies raise :class:`BackendRejected`.
    """

    def __init__(
        self,
        url: str,
        model: str,
        token: str | None = None,
        client=None,
        timeout: float = 120.0,
        retries: int = RETRIES,
        backoff: tuple[float, ...] = BACKOFF_S,
        max_in_flight: int = MAX_IN_FLIGHT,
        sleep: Callable[[float], None] = time.sleep,
    ):
        import httpx

        self.url = url
        self.model = model
        self.token = token
        self._client = client or httpx.Client(timeout=timeout)
        self.retries = retries
        self.backoff = backoff
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def complete(self, content: list[dict], system: str | None = None) -> str:
        import httpx

        messages = [{"role": "system", "content": system}] if system else []
        messages.append({"role": "user", "content": content})
        payload = {"model": self.model, "messages": messages, "temperature": 0}
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self.sleep(self.backoff[min(attempt - 1, len(self.backoff) - 1)])
            try:
                with self._slots:
                    resp = self._client.post(self.url, json=payload, headers=headers)
            except httpx.TransportError as exc:
                last = exc
                log.warning("caption request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500:
                last = BackendUnavailable(f"HTTP {resp.status_code}")
                log.warning("caption backend returned %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise BackendRejected(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                text = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise BackendRejected("reply is not a chat-completions response") from None
            if isinstance(text, list):
                text = "".join(p.get("text", "") for p in text if isinstance(p, dict))
            return str(text).strip()
        raise BackendUnavailable(f"{self.url} unreachable after {self.retries + 1} attempts: {last}")


class RemoteBackend:
    backend_id = "remote"

    def __init__(self, chat: ChatClient):
        self.chat = chat

    def __call__(self, query: CaptionQuery) -> str:
        parts: list[dict] = [{"type": "image_url", "image_url": {"url": data_url(im)}} for im in query.images]
        parts.append({"type": "text", "text": query.text})
        return self.chat.complete(parts)


def caption(backend: CaptionBackend, query: CaptionQuery) -> CaptionResult:
    t0 = time.perf_counter()
    text = backend(query)
    if not text or not text.strip():
        raise BackendRejected(f"{backend.backend_id} returned an empty caption")
    return CaptionResult(text.strip(), backend.backend_id, int((time.perf_counter() - t0) * 1000))


def make_backend(settings: Mapping[str, object], captions: Mapping[str, str] | None = None,
                 client=None) -> CaptionBackend:
    """Backend from config keys ``kind``, ``url``, ``model``, ``auth_env``, ``reply``."""
    kind = settings.get("kind", "oracle")
    if kind == "oracle":
        return OracleBackend(captions or {})
    if kind == "stub":
        return StubBackend(str(settings.get("reply", StubBackend().reply)))
    if kind == "remote":
        url = settings.get("url")
        if not url:
            raise ValueError("backend.url is required for the remote backend")
        env = settings.get("auth_env")
        token = os.environ.get(str(env)) if env else None
        chat = ChatClient(str(url), str(settings.get("model", "")), token, client=client,
                          max_in_flight=int(settings.get("max_in_flight", MAX_IN_FLIGHT)))
        return RemoteBackend(chat)
    raise ValueError(f"unknown backend kind {kind!r}")
