"""Scene, widget, script and keylog types."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

Rect = tuple[int, int, int, int]  # x, y, w, h


class SceneError(ValueError):
    """Invalid scene construction."""


class UnknownWidget(KeyError):
    pass


class UnsupportedAction(ValueError):
    pass


class WidgetKind(str, enum.Enum):
    BUTTON = "button"
    ICON = "icon"
    MENU_ITEM = "menu_item"
    TEXT_FIELD = "text_field"
    HANDLE = "handle"


class Action(str, enum.Enum):
    LEFT_CLICK = "LeftClick"
    RIGHT_CLICK = "RightClick"
    DOUBLE_CLICK = "DoubleClick"
    DRAG = "Drag"
    TYPE = "Type"


ACTION_CLASSES = tuple(a.value for a in Action)


def rect_contains(rect: Rect, x: float, y: float) -> bool:
    rx, ry, rw, rh = rect
    return rx <= x < rx + rw and ry <= y < ry + rh


def rect_center(rect: Rect) -> tuple[int, int]:
    x, y, w, h = rect
    return x + w // 2, y + h // 2


@dataclass(frozen=True)
class Widget:
    id: str
    label: str
    kind: WidgetKind
    rect: Rect

    def __post_init__(self):
        object.__setattr__(self, "kind", WidgetKind(self.kind))
        if self.rect[2] <= 0 or self.rect[3] <= 0:
            raise SceneError(f"widget {self.id!r} has empty rect {self.rect}")
        if not self.label.strip():
            raise SceneError(f"widget {self.id!r} has an empty label")

    @property
    def center(self) -> tuple[int, int]:
        return rect_center(self.rect)


@dataclass(frozen=True)
class Panel:
    name: str
    rect: Rect
    fill: tuple[int, int, int] = (228, 228, 232)


@dataclass(frozen=True)
class GuiScene:
    """A flat GUI layout: panels underneath, widgets on top.

    ``cursor_scale`` selects the rendered sprite size (1.0, 1.5 or 2.0).
    """

    resolution: tuple[int, int]
    widgets: tuple[Widget, ...]
    panels: tuple[Panel, ...] = ()
    cursor_sprite: str = "arrow"
    background: tuple[int, int, int] = (238, 238, 240)
    cursor_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "widgets", tuple(self.widgets))
        object.__setattr__(self, "panels", tuple(self.panels))
        w, h = self.resolution
        if not self.widgets:
            raise SceneError("scene needs at least one widget")
        ids = [wd.id for wd in self.widgets]
        if len(set(ids)) != len(ids):
            raise SceneError("widget ids must be unique")
        names = [p.name for p in self.panels]
        if len(set(names)) != len(names):
            raise SceneError("panel names must be unique")
        for item in (*self.widgets, *self.panels):
            x, y, rw, rh = item.rect
            if x < 0 or y < 0 or x + rw > w or y + rh > h:
                raise SceneError(f"{item!r} lies outside the {w}x{h} screen")

    def widget(self, widget_id: str) -> Widget:
        for wd in self.widgets:
            if wd.id == widget_id:
                return wd
        raise UnknownWidget(widget_id)

    def panel(self, name: str) -> Panel:
        for p in self.panels:
            if p.name == name:
                return p
        raise UnsupportedAction(f"no panel named {name!r}")

    def panel_at(self, x: float, y: float) -> Panel | None:
        hit = None
        for p in self.panels:
            if rect_contains(p.rect, x, y):
                hit = p
        return hit

    def move_widget(self, widget_id: str, x: int, y: int) -> "GuiScene":
        wd = self.widget(widget_id)
        moved = replace(wd, rect=(x, y, wd.rect[2], wd.rect[3]))
        return replace(self, widgets=tuple(moved if w.id == widget_id else w for w in self.widgets))


@dataclass(frozen=True)
class ActionScript:
    action: Action
    target_widget: str
    drag_from: str | None = None
    drag_to: str | None = None
    purpose: str | None = None
    typed_text: str | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "action", Action(self.action))
        is_drag = self.action is Action.DRAG
        drag_fields = (self.drag_from, self.drag_to, self.purpose)
        if is_drag and any(f is None for f in drag_fields):
            raise UnsupportedAction("Drag needs drag_from, drag_to and purpose")
        if not is_drag and any(f is not None for f in drag_fields):
            raise UnsupportedAction(f"{self.action.value} takes no drag fields")
        if (self.action is Action.TYPE) != (self.typed_text is not None):
            raise UnsupportedAction("typed_text is required for Type and only for Type")
        if self.action is Action.TYPE and not self.typed_text:
            raise UnsupportedAction("typed_text must be non-empty")


class KeyKind(str, enum.Enum):
    MOUSE_DOWN = "MOUSE_DOWN"
    MOUSE_UP = "MOUSE_UP"
    MOUSE_MOVE = "MOUSE_MOVE"
    KEY_PRESS = "KEY_PRESS"


@dataclass(frozen=True)
class KeyEvent:
    timestamp_ms: int
    kind: KeyKind
    payload: tuple[int, int] | str

    def __post_init__(self):
        object.__setattr__(self, "kind", KeyKind(self.kind))


@dataclass(frozen=True)
class Keylog:
    entries: tuple[KeyEvent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def of_kind(self, kind: KeyKind) -> list[KeyEvent]:
        return [e for e in self.entries if e.kind is kind]
