"""Tool-variability adaptation: error classification, UpdateTool, reflection gate.

The environment owns fixed message templates, so observation classes are
recovered from raw text by template matching. UpdateTool grows the in-prompt
manual for one search path only; sibling subtrees keep their own manuals.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import json

from .env import INVOCATION_ERROR_TEXT, Observation, ToolRegistry, evaluate, invoke
from .react import ActionRecord, StateRecord

UPDATE_TOOL_OK_TEXT = "The description for the new tool has been updated successfully."

OK = "ok"
INVOCATION_ERROR = "invocation_error"
DEPRECATION_ERROR = "deprecation_error"
TASK_DONE = "task_done"


class ExpansionMode(Enum):
    NORMAL = "normal"
    REFLECTIVE = "reflective"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class AdaptConfig:
    """Ablation switches: disable invocation-error reflection, or tool updates."""

    no_self_reflection: bool = False
    no_tool_update: bool = False


def classify_observation(text: str | None) -> str:
    """Map raw observation text onto the environment's feedback classes."""
    if text is None:
        return OK
    if "is deprecated" in text:
        return DEPRECATION_ERROR
    if "Your action is filtered" in text:
        return INVOCATION_ERROR
    if "Answer is" in text:
        return TASK_DONE
    return OK


def apply_update_tool(
    state: StateRecord,
    newtool_desc: str,
    config: AdaptConfig = AdaptConfig(),
) -> tuple[StateRecord, Observation]:
    """Append a learned tool description to this path's manual.

    Set-union semantics: re-adding an identical description is a no-op. With
    the tool-update ablation the manual is left untouched.
    """
    if not newtool_desc:
        return state, Observation(kind="invocation_error", text=INVOCATION_ERROR_TEXT)
    if config.no_tool_update:
        return state, Observation(kind="response", text=UPDATE_TOOL_OK_TEXT)
    return state.with_manual_entry(newtool_desc), Observation(kind="response", text=UPDATE_TOOL_OK_TEXT)


@dataclass(frozen=True)
class ActionOutcome:
    """Result of routing one parsed action through the environment."""

    state: StateRecord
    step: ActionRecord
    terminal: bool = False
    reward: int | None = None


def execute_action(
    state: StateRecord,
    record: ActionRecord,
    registry: ToolRegistry,
    config: AdaptConfig = AdaptConfig(),
) -> ActionOutcome:
    """Route an action to the environment and append the executed step.

    Finish is scored, UpdateTool edits this path's manual, everything else is
    an API invocation. Only Finish produces a terminal outcome.
    """
    if record.action_name == "Finish":
        answer = record.action_input.get("answer", "")
        if not isinstance(answer, str):
            answer = json.dumps(answer, ensure_ascii=False)
        obs = evaluate(state.task, answer)
        executed = record.executed(obs.text)
        return ActionOutcome(
            state=state.with_step(executed), step=executed, terminal=True, reward=obs.reward
        )
    if record.action_name == "UpdateTool":
        desc = record.action_input.get("newtool_desc", "")
        if not isinstance(desc, str):
            desc = json.dumps(desc, ensure_ascii=False)
        new_state, obs = apply_update_tool(state, desc, config)
        executed = record.executed(obs.text)
        return ActionOutcome(state=new_state.with_step(executed), step=executed)
    obs = invoke(registry, record.action_name, record.action_input)
    executed = record.executed(obs.text)
    return ActionOutcome(state=state.with_step(executed), step=executed)


def reflection_gate(state: StateRecord, config: AdaptConfig = AdaptConfig()) -> ExpansionMode:
    """Decide how a node may be expanded, given its last observation.

    Error states expand reflectively (the error stays in context) rather than
    being pruned; with the self-reflection ablation, invocation errors become
    terminal instead, while deprecation errors are still reflected on.
    """
    klass = classify_observation(state.last_observation())
    if klass == DEPRECATION_ERROR:
        return ExpansionMode.REFLECTIVE
    if klass == INVOCATION_ERROR:
        if config.no_self_reflection:
            return ExpansionMode.TERMINAL
        return ExpansionMode.REFLECTIVE
    return ExpansionMode.NORMAL
