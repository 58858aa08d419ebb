import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cursorcap.cursor import (
    AllFramesUndetected,
    CursorFix,
    CursorNotFound,
    TemplateCursorDetector,
    default_library,
    detect,
    detect_sequence,
    format_fixes,
    masked_ncc,
    parse_detector_reply,
    parse_fixes,
)
from cursorcap.frame import Frame
from cursorcap.scene import render_scene
from cursorcap.sprites import BUILTIN_SPRITES


@pytest.fixture(scope="module")
def detector():
    return TemplateCursorDetector()


def brute_ncc(patch, sprite):
    """Masked zero-mean NCC written out with plain loops over the mask."""
    m = sprite.mask
    t = sprite.gray[m].astype(np.float64)
    p = patch[m].astype(np.float64)
    t, p = t - t.mean(), p - p.mean()
    den = np.sqrt((t * t).sum() * (p * p).sum())
    return 0.0 if den == 0 else float((t * p).sum() / den)


def test_masked_ncc_matches_brute_force():
    rng = np.random.default_rng(0)
    sprite = BUILTIN_SPRITES["arrow"]
    tpl = next(t for t in default_library().templates if t.sprite_id == "arrow")
    h, w = tpl.shape
    patches = rng.integers(0, 256, size=(6, h, w)).astype(np.float32)
    patches[0] = sprite.gray
    got = masked_ncc(patches, tpl)
    want = [brute_ncc(p, sprite) for p in patches]
    np.testing.assert_allclose(got, want, atol=1e-5)
    assert got[0] == pytest.approx(1.0, abs=1e-6)


def test_detect_pasted_sprite(scene, detector):
    frame = render_scene(scene, (312, 207))
    fix = detector.detect(frame)
    assert abs(fix.center[0] - 312) <= 2 and abs(fix.center[1] - 207) <= 2
    assert 0.85 <= fix.confidence <= 1.0


def test_no_cursor_is_not_found(scene, detector):
    with pytest.raises(CursorNotFound):
        detector.detect(render_scene(scene, None))


def test_threshold_only_gates_acceptance(scene):
    frame = render_scene(scene, (700, 400))
    strict = detect(frame, threshold=0.9)
    loose = detect(frame, threshold=0.5)
    assert strict.center == loose.center
    assert strict.confidence == loose.confidence


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1919), st.integers(0, 1079))
def test_detection_tracks_translation(scene, detector, x, y):
    fix = detector.detect(render_scene(scene, (x, y)))
    assert abs(fix.center[0] - x) <= 2 and abs(fix.center[1] - y) <= 2


def test_sequence_fills_misses_from_nearest_fix(scene, detector):
    frames = [render_scene(scene, (200 + 30 * i, 300), index=i) for i in range(10)]
    frames[4] = render_scene(scene, None, index=4)
    fixes = detect_sequence(frames, detector=detector)
    assert len(fixes) == 10
    assert fixes[4].confidence == 0.0
    assert fixes[4].center == fixes[3].center
    assert all(f.confidence > 0 for i, f in enumerate(fixes) if i != 4)


def test_all_blank_video(scene):
    with pytest.raises(AllFramesUndetected):
        detect_sequence([render_scene(scene, None, index=i) for i in range(3)])


def test_fix_text_round_trip():
    fixes = [CursorFix(0, (1, 2), 0.93), CursorFix(3, (1919, 0), 0.0)]
    assert parse_fixes(format_fixes(fixes)) == fixes


def test_detector_reply_parsing():
    frame = Frame(np.zeros((10, 20, 3), np.uint8), index=2)
    assert parse_detector_reply("5.4 30 1.2\n", frame) == CursorFix(2, (5, 9), 1.0)
    with pytest.raises(CursorNotFound):
        parse_detector_reply("NONE", frame)
    with pytest.raises(ValueError):
        parse_detector_reply("5 6", frame)


def test_http_detector_with_mock_transport():
    httpx = pytest.importorskip("httpx")
    from cursorcap.cursor import HttpCursorDetector

    seen = []

    def handler(request):
        seen.append(request.headers["content-type"])
        return httpx.Response(200, text="12 7 0.9")

    det = HttpCursorDetector("http://detector/fix", client=httpx.Client(transport=httpx.MockTransport(handler)))
    fix = det.detect(Frame(np.zeros((20, 20, 3), np.uint8)))
    assert fix.center == (12, 7) and seen == ["image/png"]


def test_invalid_threshold():
    with pytest.raises(ValueError):
        TemplateCursorDetector(threshold=0.0)
