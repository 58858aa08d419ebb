"""Element-wise IoU scoring of action captions.

Captions split into slots by action class: clicks and typing have
``[specific_action, gui_element]``, drags have
``[specific_action, start, end, gui_element, purpose]``.  Slots are compared
after normalization (case, punctuation, determiners, and the equivalences
button/icon and folder/file) with contiguous-token containment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

CATEGORIES = ("Left-Click", "Double-Click", "Right-Click", "Drag", "Type")
CLICK_SLOTS = ("specific_action", "gui_element")
DRAG_SLOTS = ("specific_action", "start", "end", "gui_element", "purpose")
UNKNOWN = "Unknown"

DETERMINERS = frozenset({"the", "a", "an"})
SYNONYMS = {
    "icon": "button", "icons": "button", "button": "button", "buttons": "button",
    "file": "folder", "files": "folder", "folder": "folder", "folders": "folder",
}

Matcher = Callable[[str, str], bool]


class JudgeUnparseable(ValueError):
    pass


class JudgeUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class ElementVector:
    action_class: str  # one of CATEGORIES or UNKNOWN
    slots: tuple[tuple[str, str], ...]

    @property
    def schema(self) -> str:
        if self.action_class == "Drag":
            return "drag"
        if self.action_class == "Type":
            return "type"
        return "click"

    def value(self, name: str) -> str:
        return dict(self.slots)[name]


@dataclass(frozen=True)
class MatchVector:
    bits: tuple[int, ...]
    union_size: int

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0/1")
        if self.union_size < max(1, sum(self.bits)):
            raise ValueError("union_size smaller than the matched count")

    @property
    def iou(self) -> float:
        return sum(self.bits) / self.union_size


@dataclass(frozen=True)
class ScoreReport:
    per_category: dict[str, float]  # percentages
    average: float
    n_samples: dict[str, int]


# ---------------------------------------------------------------- normalization


def tokens(text: str) -> tuple[str, ...]:
    words = re.sub(r"[^\w\s]|_", " ", text.lower()).split()
    return tuple(SYNONYMS.get(w, w) for w in words if w not in DETERMINERS)


def _contains(hay: tuple[str, ...], needle: tuple[str, ...]) -> bool:
    n = len(needle)
    return any(hay[i : i + n] == needle for i in range(len(hay) - n + 1))


def default_matcher(a: str, b: str) -> bool:
    """Either normalized phrase contains the other as a contiguous run; empty never matches."""
    ta, tb = tokens(a), tokens(b)
    if not ta or not tb:
        return False
    return _contains(ta, tb) or _contains(tb, ta)


# ---------------------------------------------------------------- decomposition

_CLICK_RE = re.compile(r"^\s*(left|right|double)[\s-]*click(?:s|ed|ing)?\b\s*(?:on|at)?\s*(.*?)\s*\.?\s*$", re.I)
_TYPE_RE = re.compile(r"^\s*typ(?:e|es|ed|ing)\b\s*(['\"])(.*?)\1\s*(?:in|into|on)?\s*(.*?)\s*\.?\s*$", re.I)
_DRAG_RE = re.compile(
    r"^\s*drag(?:s|ged|ging)?\b\s*(.*?)\s+from\s+(.*?)\s+to\s+(.*?)\s+(?:to|for|in order to)\s+(.*?)\s*\.?\s*$", re.I
)
_DRAG_LOOSE_RE = re.compile(r"drag\w*\s*(.*?)(?:\s+from\s+(.*?))?(?:\s+(?:to|into|onto)\s+(.*?))?\s*\.?\s*$", re.I)


def _click(kind: str, element: str) -> ElementVector:
    return ElementVector(kind, (("specific_action", kind), ("gui_element", element)))


def _drag(element: str, start: str, end: str, purpose: str) -> ElementVector:
    vals = {"specific_action": "Drag", "start": start, "end": end, "gui_element": element, "purpose": purpose}
    return ElementVector("Drag", tuple((k, vals[k]) for k in DRAG_SLOTS))


def _type(text: str) -> ElementVector:
    return ElementVector("Type", (("specific_action", "Type"), ("gui_element", text)))


def _strip_lead(phrase: str) -> str:
    return re.sub(r"^(?:on|at|in|into|the)\s+", "", phrase.strip(), flags=re.I).strip(" .")


def decompose(caption: str) -> ElementVector:
    """Split a caption into its element slots; never fails.

    Template captions parse exactly.  Free-form text falls back to keyword
    rules, and anything unrecognized becomes an ``Unknown`` click with empty
    slots.
    """
    if not caption or not caption.strip():
        raise ValueError("caption must be non-empty")
    m = _DRAG_RE.match(caption)
    if m:
        return _drag(_strip_lead(m.group(1)), m.group(2), m.group(3), m.group(4))
    m = _TYPE_RE.match(caption)
    if m:
        return _type(m.group(2))
    m = _CLICK_RE.match(caption)
    if m:
        return _click(f"{m.group(1).capitalize()}-Click", m.group(2))
    return _free_form(caption)


def _free_form(caption: str) -> ElementVector:
    low = caption.lower()
    quoted = re.search(r"['\"]([^'\"]+)['\"]", caption)
    if re.search(r"\bdrag", low):
        m = _DRAG_LOOSE_RE.search(caption)
        element, start, end = (_strip_lead(g or "") for g in m.groups())
        purpose = ""
        p = re.search(r"\b(?:to|for|in order to)\s+(\w+\s.*?)\s*\.?$", end)
        if p and " to " in f" {end} ":
            purpose = p.group(1)
            end = end[: p.start()].strip()
        return _drag(element, start, end, purpose)
    if re.search(r"\b(?:typ\w*|enter\w*|input\w*|writ\w*)\b", low):
        if quoted:
            return _type(quoted.group(1))
        m = re.search(r"\b(?:typ\w*|enter\w*|input\w*|writ\w*)\s+(.*?)(?:\s+(?:in|into|on)\s+.*)?\s*\.?$", caption, re.I)
        return _type(_strip_lead(m.group(1)) if m else "")
    if "click" in low:
        kind = "Left-Click"
        if "double" in low:
            kind = "Double-Click"
        elif "right" in low:
            kind = "Right-Click"
        element = ""
        if quoted:
            element = quoted.group(1)
        else:
            m = re.search(r"\bclick\w*\s+(?:on|at)?\s*(.*?)\s*\.?$", caption, re.I)
            if m:
                element = _strip_lead(m.group(1))
        return _click(kind, element)
    return ElementVector(UNKNOWN, (("specific_action", ""), ("gui_element", "")))


# ---------------------------------------------------------------- matching


def match_elements(pred: ElementVector, gt: ElementVector, matcher: Matcher | None = None) -> MatchVector:
    """Bits follow gt's slot order.

    Same schema: union is the gt slot count.  Different schemas share
    nothing but slot names; specific_action is 0 and the union is
    ``|pred| + |gt| - matched``.
    """
    match = matcher or default_matcher
    pv = dict(pred.slots)
    bits = []
    for name, gval in gt.slots:
        if name == "specific_action":
            ok = pred.action_class == gt.action_class and gt.action_class != UNKNOWN
        else:
            ok = name in pv and match(pv[name], gval)
        bits.append(int(ok))
    if pred.schema == gt.schema:
        union = len(gt.slots)
    else:
        union = len(pred.slots) + len(gt.slots) - sum(bits)
    return MatchVector(tuple(bits), union)


def score_sample(pred_caption: str, gt_caption: str, matcher: Matcher | None = None) -> tuple[MatchVector, float]:
    gt = decompose(gt_caption)
    if tokens(pred_caption) == tokens(gt_caption):
        mv = MatchVector((1,) * len(gt.slots), len(gt.slots))
    else:
        mv = match_elements(decompose(pred_caption), gt, matcher)
    return mv, mv.iou


def category_of(gt_caption: str) -> str:
    return decompose(gt_caption).action_class


def aggregate(entries: Iterable[tuple[str, MatchVector]]) -> ScoreReport:
    """Micro IoU within each category, then the unweighted mean over non-empty categories."""
    matched: dict[str, int] = {}
    union: dict[str, int] = {}
    count: dict[str, int] = {}
    for cat, mv in entries:
        matched[cat] = matched.get(cat, 0) + sum(mv.bits)
        union[cat] = union.get(cat, 0) + mv.union_size
        count[cat] = count.get(cat, 0) + 1
    per = {c: 100.0 * matched[c] / union[c] for c in count}
    present = [per[c] for c in CATEGORIES if c in per]
    avg = sum(present) / len(present) if present else 0.0
    return ScoreReport(per, avg, count)


def score_dataset(pairs: Sequence[tuple[str, str]], matcher: Matcher | None = None) -> ScoreReport:
    """Pairs are (prediction, ground truth)."""
    if not pairs:
        raise ValueError("need at least one pair")
    return aggregate((category_of(gt), score_sample(pred, gt, matcher)[0]) for pred, gt in pairs)


def format_report(report: ScoreReport) -> str:
    cols = [c for c in CATEGORIES] + [c for c in sorted(report.per_category) if c not in CATEGORIES]
    head = " | ".join(f"{c:>12}" for c in cols + ["Average"])
    cells = [f"{report.per_category[c]:12.1f}" if c in report.per_category else f"{'-':>12}" for c in cols]
    row = " | ".join(cells + [f"{report.average:12.1f}"])
    counts = " | ".join(f"{report.n_samples.get(c, 0):12d}" for c in cols) + " | " + f"{sum(report.n_samples.values()):12d}"
    return f"{head}\n{row}\n{counts}\n"


# ---------------------------------------------------------------- LLM judge

JUDGE_PROMPT = """# Character Definition
You are an assistant to judge whether the given answer and the ground truth have the same Semantics meanings.

# Guidelines
Action types are leftlick, rightclick, doubleclick, type write, drag.
If the action is 'click' or 'keyboard type', split the description into [action type, element].
If the action is 'Drag' split the description into [ action type, element, start(from), destination(to), purpose ].
Return the metric whether the each have the same semantic meaning: 0 for false, 1 for true.
If the name of the element matches, the value will be 1.

# Output Constraints
Only return a list 0 or 1 for each element in the format of [ , , , , ] for drag action and [ , ] for the click or type in actions. Don't provide the reason.

# Get started
The given ground truth: <gt>.
The given answer: <output>.

Assistant Justification:
"""
JUDGE_RETRIES = 2
# judge lists drag elements as [action, element, start, destination, purpose]
_JUDGE_DRAG_ORDER = (0, 2, 3, 1, 4)
_LIST_RE = re.compile(r"\[\s*([01](?:\s*,\s*[01])*)\s*\]")


def judge_prompt(pred_caption: str, gt_caption: str) -> str:
    return JUDGE_PROMPT.replace("<gt>", gt_caption).replace("<output>", pred_caption)


def parse_judge_reply(text: str, n: int) -> tuple[int, ...] | None:
    for m in _LIST_RE.finditer(text):
        bits = tuple(int(b) for b in re.findall(r"[01]", m.group(1)))
        if len(bits) == n:
            return bits
    return None


def llm_judge(pred_caption: str, gt_caption: str, judge_client, retries: int = JUDGE_RETRIES) -> MatchVector:
    """Ask a chat model for per-element 0/1 judgments.

    ``judge_client`` needs ``complete(content_parts) -> str`` (see
    :class:`cursorcap.caption.ChatClient`).
    """
    from .caption import BackendRejected, BackendUnavailable

    gt = decompose(gt_caption)
    n = len(gt.slots)
    prompt = judge_prompt(pred_caption, gt_caption)
    reply = ""
    for _ in range(retries + 1):
        try:
            reply = judge_client.complete([{"type": "text", "text": prompt}])
        except (BackendUnavailable, BackendRejected) as exc:
            raise JudgeUnavailable(str(exc)) from exc
        bits = parse_judge_reply(reply, n)
        if bits is not None:
            if gt.schema == "drag":
                bits = tuple(bits[i] for i in _JUDGE_DRAG_ORDER)
            return MatchVector(bits, n)
    raise JudgeUnparseable(f"no {n}-element 0/1 list in judge reply {reply[:120]!r}")
