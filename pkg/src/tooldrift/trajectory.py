"""Successful-path extraction and line-delimited SFT export.

Each exported record pairs the root prompt (base manual only) with the
rendered step sequence of one reward-+1 root-to-leaf path. Tool updates made
along the way live in the target steps, never in the input prompt.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path

from .mcts import SearchTree
from .react import ActionRecord, parse_action, render_prompt, render_step

SFT_FORMAT_VERSION = 1

_BLOCK_SPLIT_RE = re.compile(r"\n\n(?=Thought: )")


@dataclass(frozen=True)
class Trajectory:
    """One root-to-leaf action sequence with its episode reward."""

    task_id: str
    steps: tuple[ActionRecord, ...]
    reward: int
    tree_id: str
    leaf_id: int
    input_prompt: str
    registry_generation: str


@dataclass(frozen=True)
class SftRecord:
    """One training example: root prompt in, rendered step sequence out."""

    input: str
    target: str
    task_id: str
    tree_id: str
    leaf_id: int
    registry_generation: str
    reward: int


def _trajectory_from_leaf(tree: SearchTree, leaf_id: int) -> Trajectory:
    path = tree.path_to(leaf_id)
    steps = tuple(node.action for node in path if node.action is not None)
    return Trajectory(
        task_id=tree.task.id,
        steps=steps,
        reward=tree.node(leaf_id).reward or -1,
        tree_id=tree.tree_id,
        leaf_id=leaf_id,
        input_prompt=render_prompt(tree.node(tree.root_id).state),
        registry_generation=tree.registry_generation,
    )


def extract_successful(tree: SearchTree, max_per_task: int = 4, seed: int = 0) -> list[Trajectory]:
    """All reward-+1 root-to-leaf paths, subsampled to max_per_task.

    Paths through formerly cached (rollout-built) nodes count; sampling is
    seeded and the surviving trajectories keep leaf-id order.
    """
    leaves = sorted(tree.successful_leaves(), key=lambda n: n.id)
    trajectories = [_trajectory_from_leaf(tree, leaf.id) for leaf in leaves]
    return _subsample(trajectories, max_per_task, seed)


def extract_failed(tree: SearchTree, max_per_task: int = 4, seed: int = 0) -> list[Trajectory]:
    """Reward--1 paths, for preference-style downstream use; off by default."""
    leaves = sorted(
        (n for n in tree.nodes if n.terminal and n.reward == -1), key=lambda n: n.id
    )
    trajectories = [_trajectory_from_leaf(tree, leaf.id) for leaf in leaves]
    return _subsample(trajectories, max_per_task, seed)


def _subsample(trajectories: list[Trajectory], max_per_task: int, seed: int) -> list[Trajectory]:
    if max_per_task >= 0 and len(trajectories) > max_per_task:
        chosen = random.Random(seed).sample(trajectories, max_per_task)
        trajectories = sorted(chosen, key=lambda t: (t.tree_id, t.leaf_id))
    return trajectories


def collect_from_trees(
    trees: list[SearchTree],
    max_per_task: int = 4,
    seed: int = 0,
    include_failed: bool = False,
) -> list[Trajectory]:
    """Gather trajectories from many trees with a per-task cap.

    The cap applies across all trees of one task, matching the data-budget
    rule of at most max_per_task correct trajectories per question.
    """
    by_task: dict[str, list[Trajectory]] = {}
    for tree in trees:
        found = extract_successful(tree, max_per_task=-1, seed=seed)
        if include_failed:
            found = found + extract_failed(tree, max_per_task=-1, seed=seed)
        by_task.setdefault(tree.task.id, []).extend(found)
    out: list[Trajectory] = []
    for task_id in sorted(by_task):
        out.extend(_subsample(by_task[task_id], max_per_task, seed))
    return out


def render_target(steps: tuple[ActionRecord, ...]) -> str:
    return "\n\n".join(render_step(step) for step in steps)


def parse_target(target: str) -> list[ActionRecord]:
    """Inverse of render_target; reconstructs the step list of a record."""
    return [parse_action(block) for block in _BLOCK_SPLIT_RE.split(target) if block.strip()]


def sft_record(trajectory: Trajectory) -> SftRecord:
    return SftRecord(
        input=trajectory.input_prompt,
        target=render_target(trajectory.steps),
        task_id=trajectory.task_id,
        tree_id=trajectory.tree_id,
        leaf_id=trajectory.leaf_id,
        registry_generation=trajectory.registry_generation,
        reward=trajectory.reward,
    )


def record_to_json(record: SftRecord) -> dict:
    return {
        "format_version": SFT_FORMAT_VERSION,
        "task_id": record.task_id,
        "tree_id": record.tree_id,
        "leaf_id": record.leaf_id,
        "registry_generation": record.registry_generation,
        "reward": record.reward,
        "input": record.input,
        "target": record.target,
    }


def export_sft(trajectories: list[Trajectory], path: str | Path) -> int:
    """Write one JSON object per line; returns the record count."""
    path = Path(path)
    lines = [
        json.dumps(record_to_json(sft_record(t)), sort_keys=True, ensure_ascii=False)
        for t in trajectories
    ]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return len(lines)


def load_sft(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(json.loads(line))
    return records
