from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from tooldrift.adapt import (
    DEPRECATION_ERROR,
    INVOCATION_ERROR,
    OK,
    TASK_DONE,
    UPDATE_TOOL_OK_TEXT,
    AdaptConfig,
    ExpansionMode,
    apply_update_tool,
    classify_observation,
    execute_action,
    reflection_gate,
)
from tooldrift.env import INVOCATION_ERROR_TEXT, TaskInstance
from tooldrift.react import ActionRecord, StateRecord, render_prompt

DEPRECATION_TEXT = (
    "Error: LoadDB[DBName] is deprecated. Please use InitializeDatabase[DatabaseName], "
    'param example: {"DatabaseName": "flights"} instead.'
)
# Deprecation phrasing with a different tail still classifies by its stem.
DEPRECATION_TEXT_ALT = (
    "Error: PythonInterpreter[Python] is deprecated and will be removed in future releases. "
    "Use Execute_Python_Script[PythonCode] instead."
)


def make_state(observation=None, manual=("LoadDB[DBName]: loads.",)) -> StateRecord:
    task = TaskInstance(id="t", description="q", gold_answer="5", dataset="coffee", difficulty="easy")
    steps = ()
    if observation is not None:
        steps = (
            ActionRecord(thought="x", action_name="LoadDB", action_input={"DBName": "coffee"}, observation=observation),
        )
    return StateRecord(task=task, tool_manual=tuple(manual), steps=steps)


class TestClassifyObservation:
    def test_deprecation_template(self):
        assert classify_observation(DEPRECATION_TEXT) == DEPRECATION_ERROR

    def test_deprecation_alt_phrasing(self):
        assert classify_observation(DEPRECATION_TEXT_ALT) == DEPRECATION_ERROR

    def test_filtered_template(self):
        assert classify_observation(INVOCATION_ERROR_TEXT) == INVOCATION_ERROR

    def test_response_is_ok(self):
        text = "We have successfully loaded the coffee database, including the following columns: Date."
        assert classify_observation(text) == OK

    def test_task_done(self):
        assert classify_observation("Answer is CORRECT") == TASK_DONE
        assert classify_observation("Answer is INCORRECT") == TASK_DONE

    def test_none_is_ok(self):
        assert classify_observation(None) == OK

    @given(st.text(max_size=40))
    def test_total(self, text):
        assert classify_observation(text) in (OK, INVOCATION_ERROR, DEPRECATION_ERROR, TASK_DONE)


class TestApplyUpdateTool:
    def test_appends_description(self):
        state = make_state()
        updated, obs = apply_update_tool(state, "NewTool[x]: learned.")
        assert len(updated.tool_manual) == len(state.tool_manual) + 1
        assert updated.tool_manual[-1] == "NewTool[x]: learned."
        assert obs.text == "The description for the new tool has been updated successfully."
        assert obs.kind == "response"

    def test_idempotent_for_duplicate_description(self):
        state = make_state()
        once, _ = apply_update_tool(state, "NewTool[x]: learned.")
        twice, obs = apply_update_tool(once, "NewTool[x]: learned.")
        assert twice.tool_manual == once.tool_manual
        assert obs.text == UPDATE_TOOL_OK_TEXT

    def test_empty_description_is_invocation_error(self):
        state = make_state()
        same, obs = apply_update_tool(state, "")
        assert same.tool_manual == state.tool_manual
        assert obs.kind == "invocation_error"
        assert classify_observation(obs.text) == INVOCATION_ERROR

    def test_no_tool_update_ablation_freezes_manual(self):
        state = make_state()
        updated, obs = apply_update_tool(state, "NewTool[x]: learned.", AdaptConfig(no_tool_update=True))
        assert updated.tool_manual == state.tool_manual
        assert obs.kind == "response"

    def test_scope_isolated_to_descendants(self):
        parent = make_state()
        updated, _ = apply_update_tool(parent, "NewTool[x]: learned.")
        sibling = parent.with_step(
            ActionRecord(thought="s", action_name="LoadDB", action_input={"DBName": "coffee"}, observation="fine")
        )
        assert "NewTool[x]" in render_prompt(updated)
        assert "NewTool[x]" not in render_prompt(sibling)
        assert "NewTool[x]" not in render_prompt(parent)


class TestReflectionGate:
    def test_deprecation_error_is_reflective(self):
        assert reflection_gate(make_state(DEPRECATION_TEXT)) is ExpansionMode.REFLECTIVE

    def test_invocation_error_is_reflective_by_default(self):
        assert reflection_gate(make_state(INVOCATION_ERROR_TEXT)) is ExpansionMode.REFLECTIVE

    def test_invocation_error_terminal_without_self_reflection(self):
        gate = reflection_gate(make_state(INVOCATION_ERROR_TEXT), AdaptConfig(no_self_reflection=True))
        assert gate is ExpansionMode.TERMINAL

    def test_deprecation_error_still_reflective_without_self_reflection(self):
        gate = reflection_gate(make_state(DEPRECATION_TEXT), AdaptConfig(no_self_reflection=True))
        assert gate is ExpansionMode.REFLECTIVE

    def test_ok_observation_is_normal(self):
        assert reflection_gate(make_state("all good")) is ExpansionMode.NORMAL

    def test_fresh_state_is_normal(self):
        assert reflection_gate(make_state()) is ExpansionMode.NORMAL


class TestExecuteAction:
    def test_finish_scores_the_answer(self, corpus):
        task = corpus.task("coffee-easy-1")
        state = StateRecord(task=task, tool_manual=tuple(corpus.manual))
        record = ActionRecord(thought="done", action_name="Finish", action_input={"answer": task.gold_answer})
        outcome = execute_action(state, record, corpus.base_registry)
        assert outcome.terminal and outcome.reward == 1
        assert outcome.step.observation == "Answer is CORRECT"

    def test_update_tool_routes_to_manual(self, corpus):
        task = corpus.task("coffee-easy-1")
        state = StateRecord(task=task, tool_manual=tuple(corpus.manual))
        record = ActionRecord(thought="memo", action_name="UpdateTool", action_input={"newtool_desc": "N[x]: new."})
        outcome = execute_action(state, record, corpus.base_registry)
        assert not outcome.terminal
        assert outcome.state.tool_manual[-1] == "N[x]: new."
        assert outcome.step.observation == UPDATE_TOOL_OK_TEXT

    def test_invocation_routes_to_registry(self, corpus):
        task = corpus.task("coffee-easy-1")
        state = StateRecord(task=task, tool_manual=tuple(corpus.manual))
        record = ActionRecord(thought="load", action_name="LoadDB", action_input={"DBName": "coffee"})
        outcome = execute_action(state, record, corpus.base_registry)
        assert not outcome.terminal
        assert outcome.step.observation.startswith("We have successfully loaded")
        assert outcome.state.steps[-1] == outcome.step


class TestManualMonotonicity:
    def test_manual_grows_along_adaptive_episode(self, corpus, mutated_registry):
        from tooldrift.policy import ScriptedAdaptivePolicy, run_greedy_episode

        result = run_greedy_episode(
            ScriptedAdaptivePolicy(corpus),
            corpus.task("coffee-hard-4"),
            mutated_registry,
            corpus.manual,
            corpus.demos,
        )
        assert result.reward == 1
        final_manual = result.state.tool_manual
        assert len(final_manual) > len(corpus.manual)
        for entry in corpus.manual:
            assert entry in final_manual
        assert list(final_manual[: len(corpus.manual)]) == list(corpus.manual)
