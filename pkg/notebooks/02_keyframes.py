"""
Picking the before/after frames
===============================

Compares the keyframe strategies on a handful of samples: detected cursor
positions feed the crop-difference heuristic, against the video ends and
the ground truth.
"""

from cursorcap import keyframe as kf
from cursorcap.cursor import TemplateCursorDetector, detect_sequence
from cursorcap.scene import sample_mix

detector = TemplateCursorDetector()
rows = []
for spec in sample_mix(8, seed=3):
    sample = spec.run()
    frames, idx = kf.sample_uniform(sample.frames)
    fixes = detect_sequence(frames, detector=detector)
    heur = kf.heuristic_from_frames(frames, [f.center for f in fixes], 256)
    gt = kf.to_sampled(sample.gt_keyframes, idx)
    rows.append((spec.script.action.value, gt, (heur.s, heur.e), (0, len(frames) - 1)))

# %% sampled positions (0..9) chosen by each strategy
print(f"{'action':<12} {'ground truth':>12} {'heuristic':>10} {'start_end':>10}")
for action, gt, heur, ends in rows:
    print(f"{action:<12} {str(gt):>12} {str(heur):>10} {str(ends):>10}")
hits = sum(abs(h[0] - g[0]) <= 1 and abs(h[1] - g[1]) <= 1 for _, g, h, _ in rows)
print(f"heuristic within one frame of the truth on {hits}/{len(rows)}")
