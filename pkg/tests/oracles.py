"""Independent reference computations shared by the unit and acceptance suites."""

import re

import numpy as np

from cursorcap.metric import CATEGORIES, SYNONYMS, MatchVector
from cursorcap.scene import sample_mix


def brute_report(entries):
    """Per-category percentage and macro average, from plain loops."""
    per = {}
    for cat in CATEGORIES:
        rows = [mv for c, mv in entries if c == cat]
        if rows:
            per[cat] = 100.0 * sum(sum(mv.bits) for mv in rows) / sum(mv.union_size for mv in rows)
    avg = sum(per.values()) / len(per) if per else 0.0
    return per, avg


def random_entries(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        cat = CATEGORIES[rng.integers(len(CATEGORIES))]
        width = 5 if cat == "Drag" else 2
        bits = tuple(int(b) for b in rng.integers(0, 2, size=width))
        union = width + int(rng.integers(0, 6)) * (sum(bits) == 0)
        out.append((cat, MatchVector(bits, union)))
    return out


def synonym_classes():
    groups = {}
    for word, canon in SYNONYMS.items():
        groups.setdefault(canon, set()).add(word)
    return [sorted(g) for g in groups.values()]


def synonym_sweep(limit=50, seed=0):
    """(original caption, caption with one synonym swapped in) pairs."""
    cases = []
    classes = synonym_classes()
    rng = np.random.default_rng(seed)
    for spec in sample_mix(400, seed=seed):
        cap = caption_only(spec)
        # one swap per caption keeps the sweep spread over many captions
        hits = [(word, group) for group in classes for word in group if re.search(rf"\b{word}\b", cap)]
        if hits:
            word, group = hits[rng.integers(len(hits))]
            other = rng.choice([w for w in group if w != word])
            cases.append((cap, re.sub(rf"\b{word}\b", other, cap, count=1)))
        if len(cases) >= limit:
            break
    return cases[:limit]


def caption_only(spec):
    from cursorcap.scene import caption_template

    return caption_template(spec.script, spec.scene())
