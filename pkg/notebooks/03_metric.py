"""
Element-wise caption scoring
============================

Splits captions into their elements and shows how partial credit arises.
"""

from cursorcap.metric import decompose, format_report, score_dataset, score_sample

gt = "Drag the keyframe marker from timeline start to timeline end to extend the clip"
for pred in (
    gt,
    "Drag the keyframe marker from timeline end to timeline start to extend the clip",
    "Drag the slider from the left edge to the right edge",
    "Left-Click on Export button",
):
    match, score = score_sample(pred, gt)
    print(f"{score:5.2f}  {match}  {pred}")

# %% what the decomposition sees
print(decompose(gt))
print(decompose("Type 'hello' in search box text_field"))

# %% dataset report: mean score per action category
pairs = [
    ("Left-Click on Export button", "Left-Click on Export button"),
    ("Left-Click on Import button", "Left-Click on Export button"),
    ("Type 'hello' in search box text_field", "Type 'hello' in search box text_field"),
]
print(format_report(score_dataset(pairs)))
