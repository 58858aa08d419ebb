"""
One synthetic GUI action, frame by frame
========================================

Generates a seeded sample, prints its keylog and ground truth, and writes
the two ground-truth keyframes next to a prompted crop of each.

    python notebooks/01_synthetic_action.py [out_dir]
"""

import sys
import tempfile
from pathlib import Path

from cursorcap.frame import save_frame
from cursorcap.prompting import make_prompted
from cursorcap.scene import format_keylog, sample_mix

out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="cursorcap-"))
out.mkdir(parents=True, exist_ok=True)

# %% a Drag sample: the mix cycles through every action class
spec = next(s for s in sample_mix(12, seed=0) if s.script.action.value == "Drag")
sample = spec.run()
print(spec.sample_id, "->", sample.gt_caption)
print("frames:", len(sample.frames), "gt keyframes:", sample.gt_keyframes)
print(format_keylog(sample.keylog))

# %% before/after states and the cursor-centred crops
s, e = sample.gt_keyframes
for tag, i in (("before", s), ("after", e)):
    p = make_prompted(sample.frames[i], sample.cursor_track[i])
    save_frame(p.annotated, out / f"{tag}_full.png")
    save_frame(p.cropped, out / f"{tag}_crop.png")
    print(tag, "frame", i, "cursor", sample.cursor_track[i], "box", p.box.rect)

print("wrote", sorted(q.name for q in out.glob("*.png")), "to", out)
