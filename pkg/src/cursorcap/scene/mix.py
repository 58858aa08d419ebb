"""Seeded action mixes: pick a scene, an action class and a valid script."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import GeneratedSample, execute_action
from .layouts import PURPOSES, random_scene
from .model import Action, ActionScript, GuiScene, WidgetKind

TYPED_WORDS = ["hello", "intro", "final cut", "scene 2", "v3", "draft", "music", "ok", "title", "export 4k"]
DEFAULT_FRAMES = 20


@dataclass(frozen=True)
class SampleSpec:
    sample_id: str
    scene_seed: int
    script: ActionScript
    num_frames: int

    def scene(self) -> GuiScene:
        return random_scene(self.scene_seed)

    def run(self) -> GeneratedSample:
        return execute_action(self.scene(), self.script, self.num_frames)


def random_script(scene: GuiScene, action: Action, seed: int) -> ActionScript:
    rng = np.random.default_rng([seed, 0xAC7])
    action = Action(action)
    if action is Action.TYPE:
        fields = [w for w in scene.widgets if w.kind is WidgetKind.TEXT_FIELD]
        wd = fields[rng.integers(len(fields))]
        return ActionScript(action, wd.id, typed_text=TYPED_WORDS[rng.integers(len(TYPED_WORDS))], seed=seed)
    if action is Action.DRAG:
        handles = [w for w in scene.widgets if w.kind is WidgetKind.HANDLE]
        wd = handles[rng.integers(len(handles))]
        src = scene.panel_at(*wd.center)
        others = [p.name for p in scene.panels if p.name != src.name]
        dst = others[rng.integers(len(others))]
        purposes = PURPOSES[wd.label]
        return ActionScript(action, wd.id, drag_from=src.name, drag_to=dst,
                            purpose=purposes[rng.integers(len(purposes))], seed=seed)
    clickable = [w for w in scene.widgets if w.kind is not WidgetKind.TEXT_FIELD]
    wd = clickable[rng.integers(len(clickable))]
    return ActionScript(action, wd.id, seed=seed)


def sample_mix(n: int, seed: int = 0, num_frames: int = DEFAULT_FRAMES,
               actions: tuple[Action, ...] = tuple(Action)) -> list[SampleSpec]:
    """``n`` specs cycling through ``actions`` so every class is covered once n >= len(actions)."""
    specs = []
    for i in range(n):
        action = Action(actions[i % len(actions)])
        scene_seed = seed * 1_000_003 + i
        script = random_script(random_scene(scene_seed), action, scene_seed)
        specs.append(SampleSpec(f"syn-{seed}-{i:05d}", scene_seed, script, num_frames))
    return specs
