from __future__ import annotations

import pytest

from tooldrift.adapt import UPDATE_TOOL_OK_TEXT
from tooldrift.env import evaluate, invoke
from tooldrift.mcts import SearchConfig, run_search
from tooldrift.policy import ScriptedAdaptivePolicy
from tooldrift.react import render_prompt
from tooldrift.trajectory import (
    collect_from_trees,
    export_sft,
    extract_failed,
    extract_successful,
    load_sft,
    parse_target,
    render_target,
    sft_record,
)


@pytest.fixture(scope="module")
def adaptive_tree(corpus, mutated_registry):
    return run_search(
        corpus.task("coffee-hard-4"),
        mutated_registry,
        ScriptedAdaptivePolicy(corpus),
        SearchConfig(max_simulations=30, rng_seed=7),
        corpus.manual,
        corpus.demos,
        tree_id="coffee-hard-4__t0",
    )


@pytest.fixture(scope="module")
def failed_tree(corpus, base_registry):
    """Reflection disabled + a policy that fumbles its first call: every path
    dies at an invocation-error terminal."""
    from tooldrift.policy import ScriptedSemiAdaptivePolicy

    return run_search(
        corpus.task("coffee-easy-1"),
        base_registry,
        ScriptedSemiAdaptivePolicy(corpus),
        SearchConfig(max_simulations=10, rng_seed=7, no_self_reflection=True),
        corpus.manual,
        corpus.demos,
        tree_id="coffee-easy-1__t0",
    )


class TestExtract:
    def test_tree_without_success_yields_nothing(self, failed_tree):
        assert extract_successful(failed_tree) == []

    def test_subsample_is_capped_and_stable(self, adaptive_tree):
        assert len(adaptive_tree.successful_leaves()) > 4
        first = extract_successful(adaptive_tree, max_per_task=4, seed=5)
        second = extract_successful(adaptive_tree, max_per_task=4, seed=5)
        assert len(first) == 4
        assert first == second
        everything = extract_successful(adaptive_tree, max_per_task=10**9, seed=5)
        assert len(everything) == len(adaptive_tree.successful_leaves())

    def test_only_positive_rewards_exported(self, adaptive_tree):
        for trajectory in extract_successful(adaptive_tree, max_per_task=10**9):
            assert trajectory.reward == 1
            assert trajectory.steps[-1].action_name == "Finish"

    def test_failed_paths_available_behind_flag(self, failed_tree):
        failed = extract_failed(failed_tree, max_per_task=3)
        assert failed
        assert all(t.reward == -1 for t in failed)

    def test_replay_reproduces_observations(self, corpus, mutated_registry, adaptive_tree):
        trajectories = extract_successful(adaptive_tree, max_per_task=4, seed=0)
        assert trajectories
        for trajectory in trajectories:
            task = corpus.task(trajectory.task_id)
            for step in trajectory.steps:
                if step.action_name == "Finish":
                    observed = evaluate(task, step.action_input["answer"]).text
                elif step.action_name == "UpdateTool":
                    observed = UPDATE_TOOL_OK_TEXT
                else:
                    observed = invoke(mutated_registry, step.action_name, step.action_input).text
                assert observed == step.observation

    def test_collect_from_trees_caps_per_task(self, corpus, mutated_registry):
        config = SearchConfig(max_simulations=12, rng_seed=3)
        trees = [
            run_search(
                corpus.task("coffee-easy-2"), mutated_registry, ScriptedAdaptivePolicy(corpus),
                config, corpus.manual, corpus.demos, tree_id=f"coffee-easy-2__t{i}",
            )
            for i in range(3)
        ]
        collected = collect_from_trees(trees, max_per_task=4, seed=1)
        assert len(collected) == 4
        assert {t.task_id for t in collected} == {"coffee-easy-2"}
        assert len({(t.tree_id, t.leaf_id) for t in collected}) == 4


class TestExport:
    def test_record_count_matches_lines(self, adaptive_tree, tmp_path):
        trajectories = extract_successful(adaptive_tree, max_per_task=4, seed=0)
        out = tmp_path / "sft.jsonl"
        count = export_sft(trajectories, out)
        assert count == len(trajectories) == len(out.read_text().splitlines())

    def test_round_trip(self, adaptive_tree, tmp_path):
        trajectories = extract_successful(adaptive_tree, max_per_task=4, seed=0)
        out = tmp_path / "sft.jsonl"
        export_sft(trajectories, out)
        records = load_sft(out)
        for record, trajectory in zip(records, trajectories):
            assert record["task_id"] == trajectory.task_id
            assert tuple(parse_target(record["target"])) == trajectory.steps
            assert record["input"] == trajectory.input_prompt

    def test_input_contains_base_manual_only(self, corpus, adaptive_tree):
        trajectories = extract_successful(adaptive_tree, max_per_task=10**9)
        with_updates = [
            t for t in trajectories if any(s.action_name == "UpdateTool" for s in t.steps)
        ]
        assert with_updates
        root_render = render_prompt(adaptive_tree.node(0).state)
        for trajectory in with_updates:
            assert trajectory.input_prompt == root_render
            for entry in corpus.manual:
                assert entry in trajectory.input_prompt
            assert "updated version of" not in trajectory.input_prompt
            assert "updated version of" in render_target(trajectory.steps)

    def test_deterministic_bytes(self, adaptive_tree, tmp_path):
        trajectories = extract_successful(adaptive_tree, max_per_task=4, seed=9)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        export_sft(trajectories, a)
        export_sft(extract_successful(adaptive_tree, max_per_task=4, seed=9), b)
        assert a.read_bytes() == b.read_bytes()

    def test_unwritable_path_raises(self, adaptive_tree, tmp_path):
        trajectories = extract_successful(adaptive_tree, max_per_task=1)
        with pytest.raises(OSError):
            export_sft(trajectories, tmp_path / "missing_dir" / "sft.jsonl")

    def test_sft_record_shape(self, adaptive_tree):
        trajectory = extract_successful(adaptive_tree, max_per_task=1)[0]
        record = sft_record(trajectory)
        assert record.registry_generation == "mutated-11"
        assert record.reward == 1
        assert record.target.startswith("Thought: ")
