"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line in ``RESULTS``; the conftest prints
them after the run.  Criterion 5's accuracy bound is a known miss and is
marked ``xfail(strict=True)``: it still prints FAIL, and the suite flags it
if it ever starts passing.
"""

import json
import re
import time

import numpy as np
import pytest

from cursorcap import keyframe as kf
from cursorcap.cli import build_parser, main
from cursorcap.cursor import CursorNotFound, TemplateCursorDetector, detect_sequence
from cursorcap.datasets import SampleRecord, load_manifest, stats, write_manifest
from cursorcap.metric import aggregate, category_of, score_dataset, score_sample
from cursorcap.prompting import S_BOX_PRESETS, make_prompted, prompt_box
from cursorcap.scene import ACTION_CLASSES, random_scene, render_scene, sample_mix
from oracles import brute_report, caption_only, random_entries, synonym_sweep

RESULTS: dict[str, tuple[bool, str]] = {}


def record(key, ok, detail):
    RESULTS[key] = (bool(ok), detail)
    return ok


# ---------------------------------------------------------------- 1


def test_c1_oracle_closure(tmp_path):
    t0 = time.perf_counter()
    rc = main(["pipeline", "--out", str(tmp_path), "--count", "100", "--seed", "0",
               "--keyframe-strategy", "ground_truth", "--backend", "oracle"])
    elapsed = time.perf_counter() - t0
    records = load_manifest(tmp_path / "manifest.jsonl")
    classes = {r.action_class for r in records}
    avg = json.loads((tmp_path / "results.json").read_text())["average"]
    ok = rc == 0 and len(records) == 100 and classes == set(ACTION_CLASSES) and avg == 100.0 and elapsed < 120
    record("1", ok, f"100 samples, average {avg}, {elapsed:.1f}s (limit 120s)")
    assert ok


# ---------------------------------------------------------------- 2


def test_c2_geometry_suite():
    t0 = time.perf_counter()
    worked = [((960, 540), (832, 412, 256, 256)), ((10, 10), (0, 0, 256, 256)),
              ((1919, 540), (1664, 412, 256, 256))]
    ok = all(prompt_box(c, 1920, 1080, 256).rect == r for c, r in worked)
    rng = np.random.default_rng(2024)
    bad = 0
    for _ in range(10_000):
        w, h = (int(v) for v in rng.integers(1, 4000, size=2))
        s = int(rng.integers(1, min(w, h) + 1))
        x, y = int(rng.integers(0, w)), int(rng.integers(0, h))
        left, top, bw, bh = prompt_box((x, y), w, h, s).rect
        fine = bw == bh == s and 0 <= left <= w - s and 0 <= top <= h - s
        # clamp-free exactly when the unclamped box already fits
        if 0 <= x - s // 2 <= w - s and 0 <= y - s // 2 <= h - s:
            fine &= (left + s // 2, top + s // 2) == (x, y)
        else:
            fine &= (left, top) == (min(max(x - s // 2, 0), w - s), min(max(y - s // 2, 0), h - s))
        bad += not fine
    elapsed = time.perf_counter() - t0
    ok = ok and bad == 0 and elapsed < 5
    record("2", ok, f"10000 boxes, {bad} violations, worked examples exact, {elapsed:.2f}s (limit 5s)")
    assert ok


# ---------------------------------------------------------------- 3


def test_c3_metric_suite():
    drag = "Drag the keyframe marker from timeline start to timeline end to extend the clip"
    swapped = "Drag the keyframe marker from timeline end to timeline start to extend the clip"
    hand = [
        score_sample("Left-Click on Export button", "Left-Click on Export button")[1] == 1.0,
        score_sample(swapped, drag)[1] == 0.6,
        score_sample("Type 'ok' in search box text_field", drag)[1] == 0.0,
        score_dataset([("Left-Click on Export button", "Left-Click on Export button"),
                       ("Right-Click on Save button", "Left-Click on Import button")]).per_category
        == {"Left-Click": 50.0},
    ]
    sweep = synonym_sweep(50)
    synonyms_ok = len(sweep) == 50 and all(score_sample(p, g)[1] == 1.0 for g, p in sweep)
    entries = random_entries(500, 7)
    rep = aggregate(entries)
    per, avg = brute_report(entries)
    vectors_ok = rep.per_category.keys() == per.keys() and all(
        abs(rep.per_category[c] - per[c]) < 1e-9 for c in per) and abs(rep.average - avg) < 1e-9
    # caption-level: score_dataset against per-sample scores summed by hand
    specs = sample_mix(60, seed=5)
    gts = [caption_only(s) for s in specs]
    preds = gts[1:] + gts[:1]
    rep2 = score_dataset(list(zip(preds, gts)))
    per2, avg2 = brute_report([(category_of(g), score_sample(p, g)[0]) for p, g in zip(preds, gts)])
    pairs_ok = abs(rep2.average - avg2) < 1e-9
    ok = all(hand) and synonyms_ok and vectors_ok and pairs_ok
    record("3", ok, f"hand cases {sum(hand)}/4, synonym sweep {len(sweep)} cases ok={synonyms_ok}, "
                    f"500 vectors match brute force={vectors_ok}")
    assert ok


# ---------------------------------------------------------------- 4


def test_c4_heuristic_keyframes():
    detector = TemplateCursorDetector()
    within = start_end_within = exact = 0
    n = 200
    for spec in sample_mix(n, seed=42):
        sample = spec.run()
        frames, idx = kf.sample_uniform(sample.frames)
        del sample.frames[:]
        centers = [f.center for f in detect_sequence(frames, detector=detector)]
        gs, ge = kf.to_sampled(sample.gt_keyframes, idx)
        sel = kf.heuristic_from_frames(frames, centers, 256)
        within += abs(sel.s - gs) <= 1 and abs(sel.e - ge) <= 1
        exact += (sel.s, sel.e) == (gs, ge)
        base = kf.start_end_keyframes(len(frames))
        start_end_within += abs(base.s - gs) <= 1 and abs(base.e - ge) <= 1
    rate, base_rate = within / n, start_end_within / n
    ok = rate >= 0.9 and base_rate < rate
    record("4", ok, f"heuristic within ±1 on {within}/{n} ({rate:.1%}, exact {exact}), "
                    f"start_end {start_end_within}/{n}")
    assert ok


# ---------------------------------------------------------------- 5


@pytest.fixture(scope="module")
def head_data():
    """300 training and 100 held-out feature sets (10-frame videos, cursor-centred crops)."""
    feats, gts, heur = [], [], []
    for spec in sample_mix(400, seed=11, num_frames=10):
        sample = spec.run()
        frames, idx = kf.sample_uniform(sample.frames)
        centers = [sample.cursor_track[i] for i in idx]
        feats.append(kf.embed_all([make_prompted(f, c).cropped for f, c in zip(frames, centers)]))
        gts.append(kf.to_sampled(sample.gt_keyframes, idx))
        h = kf.heuristic_from_frames(frames, centers, 256)
        heur.append((h.s, h.e))
    train = list(zip(feats[:300], gts[:300]))
    head = kf.train_head(train, epochs=60, lr=1e-3, seed=0)
    return feats, gts, heur, train, head


def exact_rate(pairs):
    return sum(a == b for a, b in pairs) / len(pairs)


@pytest.mark.xfail(strict=True, reason="order-free head cannot separate repeated frames; see decisions ledger")
def test_c5a_head_accuracy(head_data):
    feats, gts, heur, _, head = head_data
    held = range(300, 400)
    model = [(lambda s: (s.s, s.e))(kf.select_keyframes(kf.score_frames(head, feats[i]))) for i in held]
    acc = exact_rate(list(zip(model, [gts[i] for i in held])))
    h_acc = exact_rate([(heur[i], gts[i]) for i in held])
    ok = acc >= h_acc - 0.05
    prev = RESULTS.get("5", (True, ""))
    record("5", ok and prev[0], f"held-out top-2 exact {acc:.0%} vs heuristic {h_acc:.0%} (need >= heuristic - 5 pts)"
                                + (f"; {prev[1]}" if prev[1] else ""))
    assert ok


def test_c5b_equivariance_and_reproducibility(head_data):
    feats, _, _, train, head = head_data
    rng = np.random.default_rng(5)
    equi = 0
    for t in range(100):
        x = feats[300 + t % 100]
        perm = rng.permutation(len(x))
        equi += np.array_equal(kf.score_frames(head, x)[perm], kf.score_frames(head, x[perm]))
    again = kf.train_head(train, epochs=60, lr=1e-3, seed=0)
    same = again.same_weights(head)
    ok = equi == 100 and same
    prev = RESULTS.get("5", (True, ""))
    record("5", ok and prev[0], (prev[1] + "; " if prev[1] else "")
           + f"equivariance {equi}/100 bitwise, retrain identical weights={same}")
    assert ok


# ---------------------------------------------------------------- 6


def test_c6_cursor_grounding():
    detector = TemplateCursorDetector()
    rng = np.random.default_rng(6)
    hits = total = 0
    for k in range(50):
        scene = random_scene(1000 + k)
        W, H = scene.resolution
        for _ in range(10):
            x, y = int(rng.integers(0, W)), int(rng.integers(0, H))
            try:
                fix = detector.detect(render_scene(scene, (x, y)))
                hits += abs(fix.center[0] - x) <= 2 and abs(fix.center[1] - y) <= 2
            except CursorNotFound:
                pass
            total += 1
    false_accepts = 0
    for k in range(100):
        try:
            detector.detect(render_scene(random_scene(5000 + k), None))
            false_accepts += 1
        except CursorNotFound:
            pass
    ok = hits / total >= 0.99 and false_accepts == 0
    record("6", ok, f"within ±2 px on {hits}/{total}, false accepts {false_accepts}/100")
    assert ok


# ---------------------------------------------------------------- 7


def composition_records():
    def make(i, split, source):
        action = ACTION_CLASSES[i % len(ACTION_CLASSES)]
        return SampleRecord(id=f"{source}-{i:05d}", split=split, frames_dir=f"v/{i}", keylog_path=f"v/{i}.tsv",
                            gt_caption="Left-Click on Export button", action_class=action, source=source)

    out = [make(i, "train", "auto") for i in range(3152)]
    out += [make(i, "train", "manual") for i in range(488)]
    out += [make(i, "test", "manual") for i in range(488, 488 + 549)]
    return out


def test_c7_dataset_stats(tmp_path):
    path = tmp_path / "composition.jsonl"
    write_manifest(composition_records(), path)
    st = stats(load_manifest(path, check_files=False))
    counts = (st.by_split["train"], st.by_split["test"], st.total)
    rng = np.random.default_rng(7)
    records = []
    for i in range(1000):
        records.append(SampleRecord(
            id=f"r{i}", split=("train", "test")[i % 2], frames_dir=f"f/{i}", keylog_path=f"k/{i}",
            gt_caption=f"Type 'w{int(rng.integers(1e6))}' in name field text_field", action_class="Type",
            source=("auto", "manual", "synthetic")[i % 3],
            gt_keyframes=(int(i % 5), int(i % 5) + 1) if i % 4 else None,
            score=float(rng.random()) if i % 3 == 0 else None))
    rt = tmp_path / "rt.jsonl"
    write_manifest(records, rt)
    same = load_manifest(rt, check_files=False) == records
    ok = counts == (3640, 549, 4189) and same
    record("7", ok, f"train/test/total = {counts[0]}/{counts[1]}/{counts[2]}, 1000-record round trip={same}")
    assert ok


# ---------------------------------------------------------------- 8


def test_c8_ablation_plumbing(tmp_path, caplog):
    parser = build_parser()
    accepted = []
    for s in (64, 128, 200, 256, 300, 512, 768, 1024):
        try:
            parser.parse_args(["pipeline", "--out", "x", "--s-box", str(s)])
            accepted.append(s)
        except SystemExit:
            pass
    strategies = []
    for name in ("model", "heuristic", "start_end", "ground_truth", "random", "oracle"):
        try:
            parser.parse_args(["pipeline", "--out", "x", "--keyframe-strategy", name])
            strategies.append(name)
        except SystemExit:
            pass

    root = tmp_path / "ablate"
    base = ["--out", str(root), "--count", "10", "--split", "train", "--backend", "stub"]
    assert main(["generate", *base]) == 0
    weights = tmp_path / "head.bin"
    cfg = tmp_path / "quick.toml"
    cfg.write_text("epochs = 3\n")
    assert main(["train-keyframe-head", "--manifest", str(root / "manifest.jsonl"), "--config", str(cfg),
                 "--out", str(weights)]) == 0
    runs = [["--s-box", str(s)] for s in S_BOX_PRESETS]
    runs += [["--keyframe-strategy", k] for k in kf.STRATEGIES if k != "heuristic"]
    hashes, codes = {}, []
    for extra in runs:
        if "model" in extra:
            extra = extra + ["--head", str(weights)]
        caplog.clear()
        with caplog.at_level("INFO"):
            codes.append(main(["pipeline", *base, *extra]))
        found = re.findall(r"config_hash=([0-9a-f]{16})", caplog.text)
        hashes[" ".join(extra[:2])] = found[0] if found else None
    distinct = len(set(hashes.values())) == len(runs) and None not in hashes.values()
    ok = (accepted == list(S_BOX_PRESETS) and strategies == list(kf.STRATEGIES) and distinct
          and codes == [0] * len(runs))
    record("8", ok, f"--s-box accepts {accepted}, strategies {strategies}, "
                    f"{len(set(hashes.values()))} distinct hashes over {len(runs)} runs, exit codes {codes}")
    assert ok
