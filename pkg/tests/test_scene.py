import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cursorcap.scene import (
    Action,
    ActionScript,
    GuiScene,
    KeyEvent,
    KeyKind,
    Keylog,
    MalformedKeylog,
    Overlay,
    SceneError,
    UnknownWidget,
    UnsupportedAction,
    Widget,
    caption_template,
    cursor_footprint,
    execute_action,
    format_keylog,
    parse_keylog,
    render_scene,
    sample_mix,
    segment_by_keylog,
)
from cursorcap.scene.model import rect_contains


def diff_bbox(a, b):
    ys, xs = np.nonzero(np.any(a.pixels != b.pixels, axis=2))
    if len(xs) == 0:
        return None
    return xs.min(), ys.min(), xs.max() + 1, ys.max() + 1


def test_render_is_deterministic(scene):
    a = render_scene(scene, (100, 100))
    b = render_scene(scene, (100, 100))
    assert a.same_pixels(b)


def test_cursor_at_origin_is_clipped_to_the_image(scene):
    with_cursor = render_scene(scene, (0, 0))
    without = render_scene(scene, None)
    x0, y0, x1, y1 = diff_bbox(with_cursor, without)
    fx, fy, fw, fh = cursor_footprint(scene, (0, 0))
    assert (x0, y0) == (0, 0)
    assert x1 <= fx + fw and y1 <= fy + fh


def test_overlay_changes_only_its_rect(scene):
    menu = Overlay("context_menu", (100, 100, 220, 180), fill=(250, 250, 250), text="Cut\nCopy")
    plain = render_scene(scene, None)
    with_menu = render_scene(scene, None, [menu])
    x0, y0, x1, y1 = diff_bbox(plain, with_menu)
    assert 100 <= x0 and 100 <= y0 and x1 <= 320 and y1 <= 280


def test_cursor_outside_screen_is_rejected(scene):
    with pytest.raises(ValueError):
        render_scene(scene, (1920, 5))


def test_scene_validation():
    wd = Widget("w", "Export", "button", (0, 0, 10, 10))
    with pytest.raises(SceneError):
        GuiScene((100, 100), (wd, wd))
    with pytest.raises(SceneError):
        GuiScene((5, 5), (wd,))
    with pytest.raises(SceneError):
        Widget("x", " ", "button", (0, 0, 1, 1))


def test_left_click_keylog_and_determinism(scene):
    script = ActionScript(Action.LEFT_CLICK, "tool_0", seed=7)
    sample = execute_action(scene, script, 20)
    downs = [e for e in sample.keylog if e.kind is KeyKind.MOUSE_DOWN]
    ups = [e for e in sample.keylog if e.kind is KeyKind.MOUSE_UP]
    assert len(downs) == 1 and len(ups) == 1
    assert downs[0].payload == ups[0].payload
    assert rect_contains(scene.widget("tool_0").rect, *downs[0].payload)
    assert sample.gt_caption == "Left-Click on Export button"
    assert sample.same_as(execute_action(scene, script, 20))


def test_drag_keylog_and_keyframes_bracket_the_change(scene):
    script = ActionScript(Action.DRAG, "handle_0", drag_from="timeline start", drag_to="effect panel",
                          purpose="extend the clip", seed=3)
    sample = execute_action(scene, script, 24)
    kinds = [e.kind for e in sample.keylog]
    down = next(e for e in sample.keylog if e.kind is KeyKind.MOUSE_DOWN)
    up = next(e for e in sample.keylog if e.kind is KeyKind.MOUSE_UP)
    assert scene.panel_at(*down.payload).name == "timeline start"
    assert scene.panel_at(*up.payload).name == "effect panel"
    assert kinds.count(KeyKind.MOUSE_MOVE) >= 1
    # pixel oracle: frames whose content (cursor blanked) differs from the previous frame
    changed = []
    for i in range(1, len(sample.frames)):
        a, b = sample.frames[i - 1].pixels.copy(), sample.frames[i].pixels.copy()
        for pos in (sample.cursor_track[i - 1], sample.cursor_track[i]):
            x, y, w, h = cursor_footprint(sample.scene_snapshot, pos)
            for img in (a, b):
                img[max(y, 0):y + h, max(x, 0):x + w] = 0
        if not np.array_equal(a, b):
            changed.append(i)
    assert sample.gt_keyframes == (changed[0] - 1, changed[-1])


@pytest.mark.parametrize("action", list(Action))
def test_gt_keyframes_bracket_all_events(scene, action):
    spec = sample_mix(5, seed=4, actions=(action,))[0]
    sample = spec.run()
    s, e = sample.gt_keyframes
    assert 0 <= s < e < len(sample.frames)
    press = [ev for ev in sample.keylog if ev.kind is not KeyKind.MOUSE_MOVE]
    assert all(s * 100 < ev.timestamp_ms for ev in press)
    if action is not Action.LEFT_CLICK:  # a click highlight is gone again by frame e
        assert not sample.frames[s].same_pixels(sample.frames[e])


def test_caption_templates(scene):
    assert caption_template(ActionScript(Action.LEFT_CLICK, "tool_0"), scene) == "Left-Click on Export button"
    drag = ActionScript(Action.DRAG, "handle_0", drag_from="timeline start", drag_to="timeline end",
                        purpose="extend the clip")
    assert caption_template(drag, scene) == \
        "Drag the keyframe marker from timeline start to timeline end to extend the clip"
    typ = ActionScript(Action.TYPE, "field_0", typed_text="hello")
    assert caption_template(typ, scene) == "Type 'hello' in search box text_field"


def test_unsupported_scripts(scene):
    with pytest.raises(UnknownWidget):
        execute_action(scene, ActionScript(Action.LEFT_CLICK, "nope"), 20)
    with pytest.raises(UnsupportedAction):
        execute_action(scene, ActionScript(Action.TYPE, "tool_0", typed_text="x"), 20)
    with pytest.raises(UnsupportedAction):
        ActionScript(Action.DRAG, "handle_0")
    with pytest.raises(UnsupportedAction):
        execute_action(scene, ActionScript(Action.DRAG, "handle_0", drag_from="preview",
                                           drag_to="effect panel", purpose="x"), 20)


def ev(t, kind, pos=(5, 5), key=None):
    return KeyEvent(t, KeyKind(kind), pos, key) if key else KeyEvent(t, KeyKind(kind), pos)


def test_segment_two_clicks():
    frames = [render_scene(GuiScene((64, 48), (Widget("w", "a", "button", (0, 0, 10, 10)),)), (5, 5), index=i)
              for i in range(12)]
    log = Keylog((ev(100, "MOUSE_DOWN"), ev(140, "MOUSE_UP"), ev(900, "MOUSE_DOWN"), ev(940, "MOUSE_UP")))
    segs = segment_by_keylog(frames, log)
    assert len(segs) == 2
    first, second = segs
    assert len(first[0]) + len(second[0]) == len(frames)
    assert 1 < len(first[0]) <= 9
    assert [e.kind for e in second[1]] == [KeyKind.MOUSE_DOWN, KeyKind.MOUSE_UP]


def test_segment_no_gestures_and_malformed():
    frames = [render_scene(GuiScene((64, 48), (Widget("w", "a", "button", (0, 0, 10, 10)),)), None)] * 3
    assert segment_by_keylog(frames, Keylog(())) == []
    with pytest.raises(MalformedKeylog):
        segment_by_keylog(frames, Keylog((ev(100, "MOUSE_DOWN"),)))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5000), st.sampled_from(["MOUSE_MOVE", "MOUSE_DOWN", "MOUSE_UP"]),
                          st.integers(0, 1919), st.integers(0, 1079)), max_size=12))
def test_keylog_text_round_trip(rows):
    rows.sort()
    log = Keylog(tuple(KeyEvent(t, KeyKind(k), (x, y)) for t, k, x, y in rows))
    assert parse_keylog(format_keylog(log)) == log


def test_sample_mix_cycles_classes():
    specs = sample_mix(10, seed=1)
    assert [s.script.action for s in specs[:5]] == list(Action)
    assert len({s.sample_id for s in specs}) == 10
    assert sample_mix(10, seed=1) == specs
