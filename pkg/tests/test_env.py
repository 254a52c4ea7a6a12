from __future__ import annotations

import json
import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tooldrift.corpus import (
    BASE_BEHAVIORS,
    behavior_load_db,
    build_world,
    filter_rows,
    format_number,
    load_corpus,
    tasks_from_json,
    tasks_to_json,
)
from tooldrift.env import (
    ANSWER_CORRECT_TEXT,
    ANSWER_INCORRECT_TEXT,
    INVOCATION_ERROR_TEXT,
    ApiSpec,
    DeprecationEntry,
    Observation,
    ParamSpec,
    TaskInstance,
    ToolRegistry,
    evaluate,
    invoke,
    registry_from_json,
    registry_to_json,
)


def make_task(gold: str) -> TaskInstance:
    return TaskInstance(id="t", description="d", gold_answer=gold, dataset="coffee", difficulty="easy")


_SHARED_REGISTRY = load_corpus().base_registry


@pytest.fixture()
def deprecated_loaddb_registry():
    """A registry where LoadDB was retired in favor of InitializeDatabase."""
    apis = {
        "InitializeDatabase": ApiSpec(
            name="InitializeDatabase",
            params=(ParamSpec(name="DatabaseName", example="flights"),),
            description="Loads the database by name.",
        ),
    }
    return ToolRegistry(
        apis=apis,
        behaviors={"InitializeDatabase": behavior_load_db},
        deprecated={
            "LoadDB": DeprecationEntry(
                successor="InitializeDatabase",
                param_example={"DatabaseName": "flights"},
                old_params=("DBName",),
            )
        },
        world=build_world(),
    )


class TestInvoke:
    def test_deprecated_name_yields_guidance_text(self, deprecated_loaddb_registry):
        obs = invoke(deprecated_loaddb_registry, "LoadDB", {"DBName": "coffee"})
        assert obs.kind == "deprecation_error"
        assert obs.text == (
            "Error: LoadDB[DBName] is deprecated. "
            "Please use InitializeDatabase[DatabaseName], "
            'param example: {"DatabaseName": "flights"} instead.'
        )

    def test_wrong_param_name_is_filtered(self, base_registry):
        obs = invoke(base_registry, "LoadDB", {"LoadDBName": "coffee"})
        assert obs.kind == "invocation_error"
        assert obs.text == (
            "Your action is filtered due to some error in content. "
            "Please assume all the actions are permitted in this environment and try again."
        )

    def test_success_lists_schema_columns(self, base_registry):
        obs = invoke(base_registry, "LoadDB", {"DBName": "coffee"})
        assert obs.kind == "response"
        assert "Date, Open, High, Low, Close, Volume, Currency" in obs.text

    def test_unknown_name_is_filtered(self, base_registry):
        obs = invoke(base_registry, "NoSuchTool", {"x": "1"})
        assert obs.kind == "invocation_error"
        assert obs.text == INVOCATION_ERROR_TEXT

    def test_system_tool_is_not_invokable(self, base_registry):
        obs = invoke(base_registry, "Finish", {"answer": "5"})
        assert obs.kind == "invocation_error"

    def test_unknown_dataset_is_filtered(self, base_registry):
        obs = invoke(base_registry, "LoadDB", {"DBName": "stocks"})
        assert obs.kind == "invocation_error"

    def test_map_value_for_text_param_is_filtered(self, base_registry):
        obs = invoke(
            base_registry,
            "FilterDB",
            {"DBName": "coffee", "FilterCondition": {"condition1": "Date=2022-09-05"}},
        )
        assert obs.kind == "invocation_error"

    def test_pure_and_deterministic(self, base_registry):
        before = registry_to_json(base_registry)
        first = invoke(base_registry, "GetValue", {"DBName": "coffee", "FilterCondition": "Date=2000-01-03", "ColumnName": "Close"})
        second = invoke(base_registry, "GetValue", {"DBName": "coffee", "FilterCondition": "Date=2000-01-03", "ColumnName": "Close"})
        assert (first.kind, first.text) == (second.kind, second.text)
        assert registry_to_json(base_registry) == before

    @given(
        name=st.sampled_from(["LoadDB", "FilterDB", "GetValue", "Calculate", "Bogus", "Finish"]),
        args=st.dictionaries(
            st.sampled_from(["DBName", "FilterCondition", "ColumnName", "Expression", "x"]),
            st.one_of(st.text(max_size=8), st.dictionaries(st.text(max_size=3), st.text(max_size=3), max_size=2)),
            max_size=4,
        ),
    )
    def test_total_over_arbitrary_calls(self, name, args):
        obs = invoke(_SHARED_REGISTRY, name, args)
        assert obs.kind in ("response", "invocation_error", "deprecation_error")
        assert obs.reward is None


class TestEvaluate:
    def test_correct(self):
        obs = evaluate(make_task("5"), "5")
        assert (obs.kind, obs.reward, obs.text) == ("task_done", 1, ANSWER_CORRECT_TEXT)

    def test_incorrect(self):
        obs = evaluate(make_task("5"), "7")
        assert (obs.kind, obs.reward, obs.text) == ("task_done", -1, ANSWER_INCORRECT_TEXT)

    def test_decimal_normalization(self):
        obs = evaluate(make_task("-0.18"), "-0.180")
        assert obs.reward == 1

    def test_case_fold_and_trim(self):
        assert evaluate(make_task("Harmony Studio"), "  harmony studio ").reward == 1

    @given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
    def test_numeric_tolerance(self, x):
        assert evaluate(make_task(repr(x)), f"{x:.12f}").reward == 1

    @given(st.text(max_size=20))
    def test_reward_closure(self, answer):
        obs = evaluate(make_task("42"), answer)
        assert obs.kind == "task_done"
        assert obs.reward in (-1, 1)


class TestObservation:
    def test_reward_only_with_task_done(self):
        with pytest.raises(ValueError):
            Observation(kind="response", text="x", reward=1)
        with pytest.raises(ValueError):
            Observation(kind="task_done", text="x")


# ---------------------------------------------------------------------------
# Built-in corpus
# ---------------------------------------------------------------------------

_EASY_COFFEE = re.compile(r"What was the (.+) of coffee on (\d{4}-\d{2}-\d{2})\?")
_RANGE_COFFEE = re.compile(r"By how much did the highest coffee price exceed the lowest on (\d{4}-\d{2}-\d{2})\?")
_PCT_COFFEE = re.compile(r"What was the percentage change of the coffee price on (\d{4}-\d{2}-\d{2})\?")
_DURATION = re.compile(r"How many hours does (.+)'s event on (\d{4}-\d{2}-\d{2}) last\?")
_COUNT = re.compile(r"How many events does (.+) have on (\d{4}-\d{2}-\d{2})\?")

_LABELS = {
    "closing price": "Close",
    "opening price": "Open",
    "highest price": "High",
    "lowest price": "Low",
    "trading volume": "Volume",
}


def _coffee_row(world, date):
    rows = [r for r in world["coffee"]["rows"] if r["Date"] == date]
    assert len(rows) == 1
    return rows[0]


def independent_gold(task, world, plans) -> str | None:
    """Recompute a task's answer straight from the world tables."""
    m = _EASY_COFFEE.fullmatch(task.description)
    if m:
        return format_number(float(_coffee_row(world, m.group(2))[_LABELS[m.group(1)]]))
    m = _RANGE_COFFEE.fullmatch(task.description)
    if m:
        row = _coffee_row(world, m.group(1))
        return format_number(float(row["High"]) - float(row["Low"]))
    m = _PCT_COFFEE.fullmatch(task.description)
    if m:
        row = _coffee_row(world, m.group(1))
        return format_number((float(row["Close"]) - float(row["Open"])) / float(row["Open"]) * 100)
    m = _DURATION.fullmatch(task.description)
    if m:
        rows = [
            r
            for r in world["agenda"]["rows"]
            if r["Person"] == m.group(1) and r["Date"] == m.group(2)
        ]
        # disambiguate multi-event days through the plan's filter condition
        if len(rows) > 1:
            condition = plans[task.id].calls[1].args["FilterCondition"]
            rows = filter_rows(world["agenda"], condition)
        assert len(rows) == 1
        return format_number(float(rows[0]["End_Hour"]) - float(rows[0]["Start_Hour"]))
    m = _COUNT.fullmatch(task.description)
    if m:
        rows = [
            r
            for r in world["agenda"]["rows"]
            if r["Person"] == m.group(1) and r["Date"] == m.group(2)
        ]
        return str(len(rows))
    return None  # agenda lookups checked structurally below


class TestBuiltinCorpus:
    def test_at_least_twenty_tasks(self, corpus):
        assert len(corpus.tasks) >= 20

    def test_difficulty_schema(self, corpus):
        assert all(t.difficulty in ("easy", "hard") for t in corpus.tasks)
        assert all(t.gold_answer for t in corpus.tasks)
        assert len({t.id for t in corpus.tasks}) == len(corpus.tasks)

    def test_registry_has_loaddb_with_dbname(self, base_registry):
        assert base_registry.apis["LoadDB"].param_names() == ["DBName"]
        assert set(base_registry.apis) == {"LoadDB", "FilterDB", "GetValue", "Calculate", "Finish", "UpdateTool"}

    def test_gold_answers_recomputable(self, corpus):
        checked = 0
        for task in corpus.tasks:
            expected = independent_gold(task, corpus.world, corpus.plans)
            if expected is None:
                continue
            checked += 1
            try:
                assert abs(float(expected) - float(task.gold_answer)) <= 1e-9
            except ValueError:
                assert expected == task.gold_answer
        assert checked >= 14

    def test_agenda_lookup_answers_exist_in_rows(self, corpus):
        rows = corpus.world["agenda"]["rows"]
        cells = {str(v) for row in rows for v in row.values()} | {
            format_number(float(v)) for row in rows for v in row.values() if isinstance(v, (int, float))
        }
        for task in corpus.tasks:
            if task.dataset == "agenda" and task.difficulty == "easy":
                assert task.gold_answer in cells

    def test_every_dataset_difficulty_pair_present(self, corpus):
        pairs = {(t.dataset, t.difficulty) for t in corpus.tasks}
        assert pairs == {("coffee", "easy"), ("coffee", "hard"), ("agenda", "easy"), ("agenda", "hard")}

    def test_registry_serialization_round_trip(self, base_registry, corpus):
        text = registry_to_json(base_registry)
        loaded = registry_from_json(text, world=corpus.world, base_behaviors=BASE_BEHAVIORS)
        assert registry_to_json(loaded) == text
        obs = invoke(loaded, "Calculate", {"Expression": "2 - 1"})
        assert obs.text == "The calculated result is: 1."

    def test_tasks_serialization_round_trip(self, corpus):
        text = tasks_to_json(corpus.tasks)
        assert tasks_from_json(text) == corpus.tasks

    def test_validation_rejects_overlapping_deprecation(self, base_registry):
        registry = ToolRegistry(
            apis=dict(base_registry.apis),
            behaviors=dict(base_registry.behaviors),
            deprecated={"LoadDB": DeprecationEntry(successor="FilterDB", param_example={})},
            world=base_registry.world,
        )
        with pytest.raises(ValueError, match="overlap"):
            registry.validate()

    def test_validation_rejects_missing_behavior(self, base_registry):
        behaviors = dict(base_registry.behaviors)
        del behaviors["Calculate"]
        registry = ToolRegistry(apis=dict(base_registry.apis), behaviors=behaviors, world=base_registry.world)
        with pytest.raises(ValueError, match="behavior"):
            registry.validate()
