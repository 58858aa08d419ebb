import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cursorcap.frame import Frame
from cursorcap.prompting import (
    GREEN,
    BoxExceedsImage,
    annotate,
    crop,
    make_prompted,
    prompt_box,
    resize_for_backend,
    stroke_mask,
)


def oracle_left(x, img_w, s_box):
    """Placement inside [0, img_w - s_box] whose centre column is closest to x."""
    lefts = np.arange(img_w - s_box + 1)
    return int(lefts[np.argmin(np.abs(lefts + s_box // 2 - x))])


@pytest.mark.parametrize("center, rect", [
    ((960, 540), (832, 412, 256, 256)),
    ((10, 10), (0, 0, 256, 256)),
    ((1919, 540), (1664, 412, 256, 256)),
])
def test_worked_boxes(center, rect):
    assert prompt_box(center, 1920, 1080, 256).rect == rect


@st.composite
def box_case(draw):
    w = draw(st.integers(1, 2000))
    h = draw(st.integers(1, 2000))
    s = draw(st.integers(1, min(w, h)))
    return draw(st.integers(0, w - 1)), draw(st.integers(0, h - 1)), w, h, s


@settings(max_examples=300, deadline=None)
@given(box_case())
def test_box_matches_placement_oracle(case):
    x, y, w, h, s = case
    box = prompt_box((x, y), w, h, s)
    left, top, bw, bh = box.rect
    assert bw == bh == s
    assert 0 <= left <= w - s and 0 <= top <= h - s
    assert left == oracle_left(x, w, s) and top == oracle_left(y, h, s)
    if s // 2 <= x <= w - s + s // 2 and s // 2 <= y <= h - s + s // 2:
        assert (left + s // 2, top + s // 2) == (x, y)


def test_box_errors():
    with pytest.raises(BoxExceedsImage):
        prompt_box((10, 10), 100, 50, 64)
    with pytest.raises(ValueError):
        prompt_box((100, 10), 100, 100, 32)
    with pytest.raises(ValueError):
        prompt_box((1, 1), 100, 100, 0)


def frame_of(h, w, color=(30, 60, 90)):
    px = np.empty((h, w, 3), np.uint8)
    px[:] = color
    return Frame(px)


def test_annotate_paints_exactly_the_stroke():
    fr = frame_of(300, 400)
    box = prompt_box((200, 150), 400, 300, 128)
    out = annotate(fr, box)
    changed = np.any(out.pixels != fr.pixels, axis=2)
    l, t, s, _ = box.rect
    want = np.zeros_like(changed)
    want[t:t + s, l:l + s] = stroke_mask(s)
    assert np.array_equal(changed, want)
    assert np.all(out.pixels[want] == GREEN)
    assert annotate(out, box).same_pixels(out)
    assert stroke_mask(128)[:4].all() and not stroke_mask(128)[4, 4:-4].any()


def test_crop_offsets_and_round_trip():
    fr = frame_of(1080, 1920)
    fr.pixels[500, 900] = (255, 0, 0)
    box = prompt_box((960, 540), 1920, 1080, 256)
    c = crop(fr, box)
    assert c.width == c.height == 256
    assert tuple(c.pixels[88, 68]) == (255, 0, 0)
    pasted = fr.pixels.copy()
    pasted[412:668, 832:1088] = c.pixels
    assert np.array_equal(pasted, fr.pixels)
    uniform = crop(frame_of(300, 300, (7, 8, 9)), prompt_box((150, 150), 300, 300, 64))
    assert np.all(uniform.pixels == (7, 8, 9))


def test_resize():
    assert resize_for_backend(frame_of(1080, 1920)).pixels.shape == (512, 960, 3)
    fr = frame_of(40, 30)
    fr.pixels[3, 4] = 1
    assert resize_for_backend(fr, 30, 40).same_pixels(fr)
    board = Frame(np.array([[[0] * 3, [200] * 3], [[200] * 3, [0] * 3]], np.uint8))
    assert tuple(resize_for_backend(board, 1, 1).pixels[0, 0]) == (100, 100, 100)


def test_make_prompted_bundle():
    fr = frame_of(1080, 1920)
    p = make_prompted(fr, (5, 1070), 512)
    assert p.box.rect == (0, 568, 512, 512)
    assert p.cropped.width == 512 and p.raw is fr
    assert not p.annotated.same_pixels(fr)
