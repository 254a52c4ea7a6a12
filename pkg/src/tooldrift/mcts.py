"""Customized tree search: PUCT selection, policy expansion, cached rollouts.

The search keeps an explicit open-leaf set. Every iteration selects the best
open leaf by PUCT, expands it with k policy candidates (reusing rollout-built
children when the cache holds them), simulates one new child to a terminal
reward, and propagates the reward to the root with incremental-mean updates.
Rollout-created nodes stay in the tree but are invisible to selection until
an expansion unhides them.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from typing import Any

from .adapt import AdaptConfig, ExpansionMode, execute_action, reflection_gate
from .env import TaskInstance, ToolRegistry
from .policy import PolicyError
from .react import ActionParseError, ActionRecord, StateRecord, parse_action

FAILED_ACTION_NAME = "MalformedAction"


@dataclass
class SearchConfig:
    """Search knobs; the defaults match the reference setup."""

    c_puct: float = 1.25
    max_depth: int = 15
    k: int = 5
    max_simulations: int = 30
    trees_per_task: int = 20
    rng_seed: int = 0
    cache_rollouts: bool = True
    no_self_reflection: bool = False
    no_tool_update: bool = False

    def validate(self) -> None:
        if self.c_puct <= 0:
            raise ValueError("c_puct must be positive")
        for name in ("max_depth", "k", "max_simulations", "trees_per_task"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")

    @property
    def adapt(self) -> AdaptConfig:
        return AdaptConfig(
            no_self_reflection=self.no_self_reflection,
            no_tool_update=self.no_tool_update,
        )


@dataclass
class TreeNode:
    """One search node; holds a single executed action and its statistics."""

    id: int
    parent: int | None
    state: StateRecord
    action: ActionRecord | None = None
    q_value: float = 0.0
    visit_count: int = 0
    prior: float = 1.0
    children: list[int] = field(default_factory=list)
    cached: bool = False
    depth: int = 0
    terminal: bool = False
    reward: int | None = None
    failure: str | None = None


@dataclass
class SearchTree:
    task: TaskInstance
    config: SearchConfig
    registry_generation: str = "base"
    tree_id: str = "tree"
    nodes: list[TreeNode] = field(default_factory=list)
    open_leaves: list[int] = field(default_factory=list)
    stats: dict[str, int] = field(
        default_factory=lambda: {"simulations": 0, "backprops": 0, "policy_calls": 0}
    )
    selections: list[tuple[int, bool]] = field(default_factory=list)

    @property
    def root_id(self) -> int:
        return 0

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    def add_node(self, parent: int | None, state: StateRecord, **kwargs) -> TreeNode:
        depth = 0 if parent is None else self.node(parent).depth + 1
        node = TreeNode(id=len(self.nodes), parent=parent, state=state, depth=depth, **kwargs)
        self.nodes.append(node)
        if parent is not None:
            self.node(parent).children.append(node.id)
        return node

    def successful_leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes if n.terminal and n.reward == 1]

    def path_to(self, node_id: int) -> list[TreeNode]:
        path = []
        cur: int | None = node_id
        while cur is not None:
            node = self.node(cur)
            path.append(node)
            cur = node.parent
        return list(reversed(path))


def puct_score(parent_visits: int, child: TreeNode, c_puct: float) -> float:
    """Q(s,a) + c_puct * P(s,a) * sqrt(N(s)) / (1 + N(s,a))."""
    return child.q_value + c_puct * child.prior * math.sqrt(parent_visits) / (1 + child.visit_count)


def best_child(tree: SearchTree, parent_id: int, c_puct: float, allowed=None) -> int | None:
    """Argmax of the PUCT score over visible, non-terminal children.

    Ties break toward the smallest child index. ``allowed`` optionally
    restricts the candidates (used by selection to skip dead subtrees).
    """
    parent = tree.node(parent_id)
    best_id: int | None = None
    best_score = -math.inf
    for child_id in parent.children:
        child = tree.node(child_id)
        if child.cached or child.terminal:
            continue
        if allowed is not None and child_id not in allowed:
            continue
        score = puct_score(parent.visit_count, child, c_puct)
        if score > best_score:
            best_id, best_score = child_id, score
    return best_id


def select_leaf(tree: SearchTree) -> int | None:
    """Walk from the root by PUCT to the best open leaf; None when exhausted."""
    open_set = set(tree.open_leaves)
    if not open_set:
        return None

    reachable: dict[int, bool] = {}

    def leads_to_open(node_id: int) -> bool:
        known = reachable.get(node_id)
        if known is not None:
            return known
        node = tree.node(node_id)
        if node.cached or node.terminal:
            result = False
        elif node_id in open_set:
            result = True
        else:
            result = any(leads_to_open(c) for c in node.children)
        reachable[node_id] = result
        return result

    if not leads_to_open(tree.root_id):
        return None
    cur = tree.root_id
    while cur not in open_set:
        allowed = {c for c in tree.node(cur).children if leads_to_open(c)}
        nxt = best_child(tree, cur, tree.config.c_puct, allowed=allowed)
        if nxt is None:
            return None
        cur = nxt
    tree.selections.append((cur, tree.node(cur).cached))
    return cur


def _make_child(
    tree: SearchTree,
    parent: TreeNode,
    text: str,
    registry: ToolRegistry,
    prior: float,
    cached: bool,
    adapt_config: AdaptConfig,
) -> TreeNode:
    try:
        record = parse_action(text)
    except ActionParseError as exc:
        step = ActionRecord(
            thought=text, action_name=FAILED_ACTION_NAME, action_input={}, observation=str(exc)
        )
        return tree.add_node(
            parent.id,
            parent.state.with_step(step),
            action=step,
            prior=prior,
            cached=cached,
            terminal=True,
            reward=-1,
            failure=str(exc),
        )
    outcome = execute_action(parent.state, record, registry, adapt_config)
    return tree.add_node(
        parent.id,
        outcome.state,
        action=outcome.step,
        prior=prior,
        cached=cached,
        terminal=outcome.terminal,
        reward=outcome.reward,
    )


def _generate_children(
    tree: SearchTree,
    node: TreeNode,
    policy,
    registry: ToolRegistry,
    cached: bool,
) -> list[int]:
    k = tree.config.k
    texts = policy.propose(node.state, k)
    tree.stats["policy_calls"] += 1
    prior = 1.0 / len(texts)
    return [
        _make_child(tree, node, text, registry, prior, cached, tree.config.adapt).id
        for text in texts
    ]


def expand(tree: SearchTree, leaf_id: int, policy, registry: ToolRegistry) -> list[int]:
    """Create (or unhide) the leaf's children.

    Cached children from earlier rollouts are reused without a policy call.
    An error state expands the same way, with the error in context; under the
    self-reflection ablation an invocation-error leaf becomes terminal
    instead. Policy transport failure marks the leaf failed-terminal.
    """
    leaf = tree.node(leaf_id)
    mode = reflection_gate(leaf.state, tree.config.adapt)
    if mode is ExpansionMode.TERMINAL:
        leaf.terminal, leaf.reward = True, -1
        return []
    if leaf.children:
        for child_id in leaf.children:
            tree.node(child_id).cached = False
        return list(leaf.children)
    try:
        return _generate_children(tree, leaf, policy, registry, cached=False)
    except PolicyError as exc:
        leaf.terminal, leaf.reward, leaf.failure = True, -1, str(exc)
        return []


def simulate_cached(
    tree: SearchTree,
    node_id: int,
    policy,
    registry: ToolRegistry,
    rng: random.Random,
) -> int:
    """Roll out one episode from the node and return its terminal reward.

    With caching on, every rollout step materializes (or reuses) the full
    k-candidate set as hidden children and follows a seeded-random one; a
    repeat rollout over a stored subtree costs no policy calls. Episodes
    still unfinished at the depth limit count as failures.
    """
    cur = tree.node(node_id)
    if not tree.config.cache_rollouts:
        return _transient_rollout(tree, cur, policy, registry, rng)
    while True:
        if cur.terminal:
            return cur.reward or -1
        if cur.depth >= tree.config.max_depth:
            return -1
        mode = reflection_gate(cur.state, tree.config.adapt)
        if mode is ExpansionMode.TERMINAL:
            cur.terminal, cur.reward = True, -1
            return -1
        if not cur.children:
            try:
                _generate_children(tree, cur, policy, registry, cached=True)
            except PolicyError as exc:
                cur.terminal, cur.reward, cur.failure = True, -1, str(exc)
                return -1
        cur = tree.node(rng.choice(cur.children))


def _transient_rollout(
    tree: SearchTree,
    start: TreeNode,
    policy,
    registry: ToolRegistry,
    rng: random.Random,
) -> int:
    """Cache-free rollout: walk states without adding nodes to the tree."""
    if start.terminal:
        return start.reward or -1
    state, depth = start.state, start.depth
    while depth < tree.config.max_depth:
        if reflection_gate(state, tree.config.adapt) is ExpansionMode.TERMINAL:
            return -1
        try:
            texts = policy.propose(state, tree.config.k)
        except PolicyError:
            return -1
        tree.stats["policy_calls"] += 1
        text = rng.choice(texts)
        try:
            record = parse_action(text)
        except ActionParseError:
            return -1
        outcome = execute_action(state, record, registry, tree.config.adapt)
        if outcome.terminal:
            return outcome.reward or -1
        state, depth = outcome.state, depth + 1
    return -1


def backpropagate(tree: SearchTree, node_id: int, reward: int) -> None:
    """Apply the incremental-mean update from the node up to the root."""
    cur: int | None = node_id
    while cur is not None:
        node = tree.node(cur)
        node.q_value += (reward - node.q_value) / (node.visit_count + 1)
        node.visit_count += 1
        cur = node.parent
    tree.stats["backprops"] += 1


def run_search(
    task: TaskInstance,
    registry: ToolRegistry,
    policy,
    config: SearchConfig,
    manual: list[str],
    demos: list[str] = (),
    tree_id: str | None = None,
) -> SearchTree:
    """Build one search tree for a task; every failure becomes a terminal node."""
    config.validate()
    rng = random.Random(config.rng_seed)
    root_state = StateRecord(task=task, tool_manual=tuple(manual), demos=tuple(demos))
    tree = SearchTree(
        task=task,
        config=config,
        registry_generation=registry.generation,
        tree_id=tree_id or f"{task.id}__seed{config.rng_seed}",
    )
    tree.add_node(parent=None, state=root_state)
    tree.open_leaves = [tree.root_id]

    simulations = 0
    while simulations < config.max_simulations:
        leaf_id = select_leaf(tree)
        if leaf_id is None:
            break
        leaf = tree.node(leaf_id)
        if leaf.depth >= config.max_depth:
            tree.open_leaves.remove(leaf_id)
            continue
        new_ids = expand(tree, leaf_id, policy, registry)
        tree.open_leaves.remove(leaf_id)
        if not new_ids:
            backpropagate(tree, leaf_id, -1)
            simulations += 1
            continue
        tree.open_leaves.extend(nid for nid in new_ids if not tree.node(nid).terminal)
        chosen = rng.choice(new_ids)
        reward = simulate_cached(tree, chosen, policy, registry, rng)
        backpropagate(tree, chosen, reward)
        simulations += 1
    tree.stats["simulations"] = simulations
    return tree


# ---------------------------------------------------------------------------
# Serialization. States are rebuilt from the action path at load time.
# ---------------------------------------------------------------------------


def _action_to_json(action: ActionRecord | None) -> dict | None:
    if action is None:
        return None
    return {
        "thought": action.thought,
        "action_name": action.action_name,
        "action_input": action.action_input,
        "observation": action.observation,
    }


def _action_from_json(doc: dict | None) -> ActionRecord | None:
    if doc is None:
        return None
    return ActionRecord(
        thought=doc["thought"],
        action_name=doc["action_name"],
        action_input=doc["action_input"],
        observation=doc.get("observation"),
    )


def tree_to_json(tree: SearchTree) -> str:
    root_state = tree.node(tree.root_id).state
    doc: dict[str, Any] = {
        "format_version": 1,
        "tree_id": tree.tree_id,
        "registry_generation": tree.registry_generation,
        "task": {
            "id": tree.task.id,
            "description": tree.task.description,
            "gold_answer": tree.task.gold_answer,
            "dataset": tree.task.dataset,
            "difficulty": tree.task.difficulty,
        },
        "config": {
            "c_puct": tree.config.c_puct,
            "max_depth": tree.config.max_depth,
            "k": tree.config.k,
            "max_simulations": tree.config.max_simulations,
            "trees_per_task": tree.config.trees_per_task,
            "rng_seed": tree.config.rng_seed,
            "cache_rollouts": tree.config.cache_rollouts,
            "no_self_reflection": tree.config.no_self_reflection,
            "no_tool_update": tree.config.no_tool_update,
        },
        "manual": list(root_state.tool_manual),
        "demos": list(root_state.demos),
        "stats": tree.stats,
        "nodes": [
            {
                "id": n.id,
                "parent": n.parent,
                "action": _action_to_json(n.action),
                "q_value": n.q_value,
                "visit_count": n.visit_count,
                "prior": n.prior,
                "children": n.children,
                "cached": n.cached,
                "depth": n.depth,
                "terminal": n.terminal,
                "reward": n.reward,
                "failure": n.failure,
            }
            for n in tree.nodes
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def tree_from_json(text: str) -> SearchTree:
    doc = json.loads(text)
    task = TaskInstance(**doc["task"])
    config = SearchConfig(**doc["config"])
    tree = SearchTree(
        task=task,
        config=config,
        registry_generation=doc["registry_generation"],
        tree_id=doc["tree_id"],
        stats=doc.get("stats", {}),
    )
    root_state = StateRecord(
        task=task, tool_manual=tuple(doc["manual"]), demos=tuple(doc["demos"])
    )
    adapt_config = config.adapt
    for node_doc in sorted(doc["nodes"], key=lambda d: d["id"]):
        action = _action_from_json(node_doc["action"])
        if node_doc["parent"] is None:
            state = root_state
        else:
            parent_state = tree.node(node_doc["parent"]).state
            state = parent_state
            if action is not None and action.action_name == "UpdateTool":
                desc = action.action_input.get("newtool_desc", "")
                if isinstance(desc, str) and desc and not adapt_config.no_tool_update:
                    state = state.with_manual_entry(desc)
            state = state.with_step(action) if action is not None else state
        node = TreeNode(
            id=node_doc["id"],
            parent=node_doc["parent"],
            state=state,
            action=action,
            q_value=node_doc["q_value"],
            visit_count=node_doc["visit_count"],
            prior=node_doc["prior"],
            children=list(node_doc["children"]),
            cached=node_doc["cached"],
            depth=node_doc["depth"],
            terminal=node_doc["terminal"],
            reward=node_doc["reward"],
            failure=node_doc.get("failure"),
        )
        if node.id != len(tree.nodes):
            raise ValueError("tree nodes are not densely numbered")
        tree.nodes.append(node)
    return tree
