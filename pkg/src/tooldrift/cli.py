"""Batch front-end: mutate registries, run searches, export data, inspect trees.

Exit codes: 0 success, 2 configuration or parse problem, 3 I/O failure,
4 invariant violation (failed verification or corrupt tree respectively).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .adapt import classify_observation
from .corpus import BASE_BEHAVIORS, Corpus, build_world, load_corpus, tasks_from_json
from .env import ToolRegistry, registry_from_json, registry_to_json
from .mcts import (
    SearchConfig,
    SearchTree,
    run_search,
    tree_from_json,
    tree_to_json,
)
from .mutation import (
    MutationError,
    MutationPlan,
    mutate_registry,
    plan_from_section,
    verify_mutation,
)
from .policy import PolicyConfig, build_policy
from .trajectory import collect_from_trees, export_sft

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INVARIANT = 4

SETTINGS = ("consistent", "mutated_in", "mutated_ood")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def _load_registry(value: str, corpus: Corpus) -> ToolRegistry:
    if value == "builtin":
        return corpus.base_registry
    text = _read_text(value)
    try:
        return registry_from_json(text, world=corpus.world, base_behaviors=BASE_BEHAVIORS)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CliError(f"cannot parse registry {value}: {exc}", EXIT_CONFIG) from exc


def _load_corpus(value: str) -> Corpus:
    corpus = load_corpus()
    if value != "builtin":
        text = _read_text(value)
        try:
            corpus.tasks = tasks_from_json(text)
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise CliError(f"cannot parse corpus {value}: {exc}", EXIT_CONFIG) from exc
    return corpus


def _plan_from_args(args) -> MutationPlan:
    if args.plan:
        parser = configparser.ConfigParser()
        parser.read_string(_read_text(args.plan))
        section_name = "mutation" if "mutation" in parser else None
        if section_name is None:
            raise CliError(f"{args.plan} has no [mutation] section", EXIT_CONFIG)
        try:
            plan = plan_from_section(parser[section_name])
        except (MutationError, ValueError) as exc:
            raise CliError(f"bad mutation plan: {exc}", EXIT_CONFIG) from exc
        if args.seed is not None:
            plan = replace(plan, seed=args.seed)
        return plan
    kinds = frozenset(k.strip() for k in args.kinds.split(",") if k.strip())
    try:
        return MutationPlan(
            seed=args.seed if args.seed is not None else 0,
            kinds=kinds,
            special_char=args.special_char,
        )
    except MutationError as exc:
        raise CliError(f"bad mutation plan: {exc}", EXIT_CONFIG) from exc


def cmd_mutate(args) -> int:
    corpus = _load_corpus("builtin")
    base = _load_registry(args.base, corpus)
    plan = _plan_from_args(args)
    try:
        mutated = mutate_registry(base, plan)
    except MutationError as exc:
        raise CliError(f"mutation failed: {exc}", EXIT_CONFIG) from exc
    _write_text(args.out, registry_to_json(mutated))
    report = verify_mutation(base, mutated)
    print(f"wrote {args.out} (generation {mutated.generation})")
    if report.ok:
        print("verify_mutation: ok (0 violations)")
        return EXIT_OK
    print(f"verify_mutation: {len(report.violations)} violation(s)")
    for violation in report.violations:
        print(f"  - {violation}")
    return EXIT_INVARIANT


def _derive_seed(base_seed: int, task_id: str, tree_index: int) -> int:
    payload = f"{base_seed}:{task_id}:{tree_index}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


def _manifest_sections(path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(_read_text(path))
    except configparser.Error as exc:
        raise CliError(f"cannot parse manifest {path}: {exc}", EXIT_CONFIG) from exc
    return parser


def _search_config(section) -> SearchConfig:
    config = SearchConfig(
        c_puct=section.getfloat("c_puct", 1.25),
        max_depth=section.getint("max_depth", 15),
        k=section.getint("k", 5),
        max_simulations=section.getint("max_simulations", 30),
        trees_per_task=section.getint("trees_per_task", 20),
        rng_seed=section.getint("rng_seed", 0),
        cache_rollouts=section.getboolean("cache_rollouts", True),
    )
    return config


def _policy_config(section) -> PolicyConfig:
    return PolicyConfig(
        kind=section.get("kind", "scripted_adaptive"),
        endpoint=section.get("endpoint", None) or None,
        temperature=section.getfloat("temperature", 0.7),
        request_timeout=section.getfloat("request_timeout", 10.0),
        max_candidates=section.getint("max_candidates", 5),
    )


def _registry_for_setting(setting: str, parser: configparser.ConfigParser, base: ToolRegistry):
    if setting == "consistent":
        return base
    section_name = {"mutated_in": "mutation_in", "mutated_ood": "mutation_ood"}[setting]
    if section_name in parser:
        plan = plan_from_section(parser[section_name])
    elif "mutation" in parser:
        plan = plan_from_section(parser["mutation"])
        if setting == "mutated_ood":
            plan = replace(plan, seed=plan.seed + 1)
    else:
        raise CliError(f"setting {setting} requires a [mutation] section", EXIT_CONFIG)
    return mutate_registry(base, plan)


def run_manifest(parser: configparser.ConfigParser, overrides) -> tuple[list[SearchTree], Corpus, str]:
    run = parser["run"] if "run" in parser else {}
    corpus = _load_corpus(run.get("corpus", "builtin"))
    base = _load_registry(run.get("registry", "builtin"), corpus)
    setting = overrides.setting or run.get("setting", "consistent")
    if setting not in SETTINGS:
        raise CliError(f"unknown setting {setting!r}", EXIT_CONFIG)
    try:
        registry = _registry_for_setting(setting, parser, base)
    except MutationError as exc:
        raise CliError(f"mutation failed: {exc}", EXIT_CONFIG) from exc

    search_cfg = _search_config(parser["search"] if "search" in parser else {})
    if overrides.sims is not None:
        search_cfg.max_simulations = overrides.sims
    if overrides.trees is not None:
        search_cfg.trees_per_task = overrides.trees
    search_cfg.no_self_reflection = overrides.no_self_reflection
    search_cfg.no_tool_update = overrides.no_tool_update
    try:
        search_cfg.validate()
    except ValueError as exc:
        raise CliError(f"bad search config: {exc}", EXIT_CONFIG) from exc

    policy_section = parser["policy"] if "policy" in parser else {}
    try:
        policy_cfg = _policy_config(policy_section)
    except ValueError as exc:
        raise CliError(f"bad policy config: {exc}", EXIT_CONFIG) from exc
    if overrides.no_tool_update:
        policy_cfg = replace(policy_cfg, emit_tool_updates=False)
    policy = build_policy(policy_cfg, corpus)

    jobs = max(1, overrides.jobs)
    runs = [
        (task, index)
        for task in corpus.tasks
        for index in range(search_cfg.trees_per_task)
    ]

    def one(run_spec):
        task, index = run_spec
        config = replace(search_cfg, rng_seed=_derive_seed(search_cfg.rng_seed, task.id, index))
        return run_search(
            task,
            registry,
            policy,
            config,
            manual=corpus.manual,
            demos=corpus.demos,
            tree_id=f"{task.id}__t{index}",
        )

    if jobs == 1:
        trees = [one(r) for r in runs]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = list(pool.map(one, runs))
    trees.sort(key=lambda t: t.tree_id)
    return trees, corpus, setting


def summarize(trees: list[SearchTree], corpus: Corpus, setting: str) -> list[dict]:
    """Per (dataset, difficulty) success rates; a task counts as solved when
    any of its trees holds a reward-+1 terminal node."""
    solved: dict[str, bool] = {}
    for tree in trees:
        solved.setdefault(tree.task.id, False)
        if tree.successful_leaves():
            solved[tree.task.id] = True
    groups: dict[tuple[str, str], list[str]] = {}
    for task in corpus.tasks:
        groups.setdefault((task.dataset, task.difficulty), []).append(task.id)
    rows = []
    for (dataset, difficulty) in sorted(groups):
        ids = [tid for tid in groups[(dataset, difficulty)] if tid in solved]
        if not ids:
            continue
        n_solved = sum(1 for tid in ids if solved[tid])
        rows.append(
            {
                "setting": setting,
                "dataset": dataset,
                "difficulty": difficulty,
                "tasks": len(ids),
                "solved": n_solved,
                "success_rate": 100.0 * n_solved / len(ids),
            }
        )
    return rows


def print_summary(rows: list[dict]) -> None:
    header = f"{'setting':<12} {'dataset':<10} {'difficulty':<10} {'tasks':>5} {'solved':>6} {'success':>8}"
    print(header)
    print("-" * len(header))
    for row in rows:
        print(
            f"{row['setting']:<12} {row['dataset']:<10} {row['difficulty']:<10} "
            f"{row['tasks']:>5} {row['solved']:>6} {row['success_rate']:>7.1f}%"
        )


def cmd_search(args) -> int:
    parser = _manifest_sections(args.manifest)
    trees, corpus, setting = run_manifest(parser, args)
    out_dir = args.output_dir or (parser["run"].get("output_dir", "out") if "run" in parser else "out")
    tree_dir = Path(out_dir) / "trees"
    for tree in trees:
        _write_text(str(tree_dir / f"{tree.tree_id}.json"), tree_to_json(tree))
    rows = summarize(trees, corpus, setting)
    print_summary(rows)
    if args.csv:
        try:
            Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
            with open(args.csv, "w", newline="", encoding="utf-8") as handle:
                writer = csv.DictWriter(
                    handle,
                    fieldnames=["setting", "dataset", "difficulty", "tasks", "solved", "success_rate"],
                )
                writer.writeheader()
                writer.writerows(rows)
        except OSError as exc:
            raise CliError(f"cannot write {args.csv}: {exc}", EXIT_IO) from exc
    print(f"wrote {len(trees)} trees to {tree_dir}")
    return EXIT_OK


def cmd_export(args) -> int:
    tree_dir = Path(args.trees)
    if not tree_dir.is_dir():
        raise CliError(f"not a directory: {tree_dir}", EXIT_IO)
    trees = []
    for path in sorted(tree_dir.glob("*.json")):
        try:
            trees.append(tree_from_json(path.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise CliError(f"corrupt tree file {path}: {exc}", EXIT_INVARIANT) from exc
    trajectories = collect_from_trees(
        trees, max_per_task=args.max_per_task, seed=args.seed, include_failed=args.include_failed
    )
    try:
        count = export_sft(trajectories, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    print(f"exported {count} records to {args.out}")
    return EXIT_OK


def _check_tree_invariants(tree: SearchTree) -> list[str]:
    problems = []
    for node in tree.nodes:
        if not -1.0 - 1e-9 <= node.q_value <= 1.0 + 1e-9:
            problems.append(f"node {node.id}: Q={node.q_value} outside [-1, 1]")
        if node.terminal != (node.reward is not None):
            problems.append(f"node {node.id}: terminal/reward mismatch")
        if node.parent is not None and node.depth != tree.node(node.parent).depth + 1:
            problems.append(f"node {node.id}: depth != parent depth + 1")
        if node.visit_count < 0:
            problems.append(f"node {node.id}: negative visit count")
        if node.children:
            total = sum(tree.node(c).prior for c in node.children)
            if abs(total - 1.0) > 1e-6:
                problems.append(f"node {node.id}: child priors sum to {total:.6f}")
        if not node.cached and node.depth > tree.config.max_depth:
            problems.append(f"node {node.id}: beyond depth limit")
    return problems


def _node_label(tree: SearchTree, node) -> str:
    if node.action is None:
        label = "root"
    else:
        label = f"{node.action.action_name}"
    flags = []
    if node.cached:
        flags.append("[cached]")
    if node.terminal:
        sign = "+1" if node.reward == 1 else "-1"
        flags.append(f"[terminal r={sign}]")
    if node.action is not None and node.action.observation is not None:
        klass = classify_observation(node.action.observation)
        if klass.endswith("_error"):
            flags.append(f"[{klass}]")
    suffix = " " + " ".join(flags) if flags else ""
    return (
        f"[{node.id}] {label} N={node.visit_count} Q={node.q_value:+.3f} "
        f"P={node.prior:.2f} d={node.depth}{suffix}"
    )


def cmd_inspect(args) -> int:
    try:
        tree = tree_from_json(_read_text(args.tree))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CliError(f"corrupt tree file {args.tree}: {exc}", EXIT_INVARIANT) from exc
    print(f"tree {tree.tree_id} task={tree.task.id} generation={tree.registry_generation}")

    def walk(node_id: int, indent: int) -> None:
        node = tree.node(node_id)
        print("  " * indent + _node_label(tree, node))
        for child in node.children:
            walk(child, indent + 1)

    walk(tree.root_id, 0)
    problems = _check_tree_invariants(tree)
    if problems:
        print(f"{len(problems)} invariant violation(s):")
        for problem in problems:
            print(f"  - {problem}")
        return EXIT_INVARIANT
    print("invariants: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tooldrift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_mutate = sub.add_parser("mutate", help="derive a drifted registry generation")
    p_mutate.add_argument("--base", default="builtin", help="base registry JSON or 'builtin'")
    p_mutate.add_argument("--out", required=True, help="output registry JSON path")
    p_mutate.add_argument("--seed", type=int, default=None)
    p_mutate.add_argument("--kinds", default="name_text, param_text, param_format")
    p_mutate.add_argument("--special-char", dest="special_char", default="_")
    p_mutate.add_argument("--plan", default=None, help="INI file with a [mutation] section")
    p_mutate.set_defaults(func=cmd_mutate)

    p_search = sub.add_parser("search", help="run tree searches over a task corpus")
    p_search.add_argument("--manifest", required=True, help="INI run manifest")
    p_search.add_argument("--setting", choices=SETTINGS, default=None)
    p_search.add_argument("--output-dir", dest="output_dir", default=None)
    p_search.add_argument("--csv", default=None, help="also write the summary as CSV")
    p_search.add_argument("--jobs", type=int, default=1)
    p_search.add_argument("--trees", type=int, default=None, help="override trees per task")
    p_search.add_argument("--sims", type=int, default=None, help="override simulations per tree")
    p_search.add_argument("--no-tool-update", dest="no_tool_update", action="store_true")
    p_search.add_argument("--no-self-reflection", dest="no_self_reflection", action="store_true")
    p_search.set_defaults(func=cmd_search)

    p_export = sub.add_parser("export", help="export successful trajectories as SFT records")
    p_export.add_argument("--trees", required=True, help="directory of tree JSON files")
    p_export.add_argument("--out", required=True, help="output JSONL path")
    p_export.add_argument("--max-per-task", dest="max_per_task", type=int, default=4)
    p_export.add_argument("--seed", type=int, default=0)
    p_export.add_argument("--include-failed", dest="include_failed", action="store_true")
    p_export.set_defaults(func=cmd_export)

    p_inspect = sub.add_parser("inspect", help="print a tree as an indented outline")
    p_inspect.add_argument("tree", help="tree JSON file")
    p_inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
