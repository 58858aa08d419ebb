"""Deterministic synthetic GUI environment."""

from .actions import ACTION_NAMES, GeneratedSample, caption_template, execute_action
from .keylog import (
    MS_PER_FRAME,
    MalformedKeylog,
    format_keylog,
    parse_keylog,
    read_keylog,
    segment_by_keylog,
    write_keylog,
)
from .layouts import default_scene, random_scene
from .mix import SampleSpec, random_script, sample_mix
from .model import (
    ACTION_CLASSES,
    Action,
    ActionScript,
    GuiScene,
    KeyEvent,
    KeyKind,
    Keylog,
    Panel,
    SceneError,
    UnknownWidget,
    UnsupportedAction,
    Widget,
    WidgetKind,
)
from .render import CursorOutOfBounds, Overlay, cursor_footprint, render_scene
