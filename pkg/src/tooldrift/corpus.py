"""Built-in toy task corpus: world tables, base tool registry, tasks, plans.

The world holds a coffee price table and a personal agenda table. Tasks are
lookups and small computations whose gold answers are derived from the world
at module load, so every answer is recomputable by an independent script.
"""

from __future__ import annotations

import ast
import json
import operator
from dataclasses import dataclass, field

from .env import (
    ApiSpec,
    Behavior,
    BehaviorError,
    ParamSpec,
    TaskInstance,
    ToolRegistry,
)

COFFEE_COLUMNS = ["Date", "Open", "High", "Low", "Close", "Volume", "Currency"]
COFFEE_ROWS = [
    {"Date": "2000-01-03", "Open": 122.25, "High": 124.25, "Low": 116.1, "Close": 116.5, "Volume": 6640.0, "Currency": "USD"},
    {"Date": "2000-01-04", "Open": 116.25, "High": 120.5, "Low": 115.75, "Close": 116.25, "Volume": 5492.0, "Currency": "USD"},
    {"Date": "2012-03-08", "Open": 189.7, "High": 190.1, "Low": 188.0, "Close": 189.35, "Volume": 11233.0, "Currency": "USD"},
    {"Date": "2012-03-09", "Open": 189.0, "High": 191.5, "Low": 188.25, "Close": 190.75, "Volume": 9410.0, "Currency": "USD"},
    {"Date": "2022-09-05", "Open": 232.5, "High": 235.0, "Low": 230.25, "Close": 233.75, "Volume": 8123.0, "Currency": "USD"},
    {"Date": "2022-09-06", "Open": 233.75, "High": 236.5, "Low": 231.0, "Close": 232.0, "Volume": 7654.0, "Currency": "USD"},
]

AGENDA_COLUMNS = ["Date", "Person", "Event", "Start_Hour", "End_Hour", "Location"]
AGENDA_ROWS = [
    {"Date": "2022-01-18", "Person": "Sarah Chen", "Event": "Team standup", "Start_Hour": 9, "End_Hour": 10, "Location": "Room 4A"},
    {"Date": "2022-01-18", "Person": "Sarah Chen", "Event": "Budget review", "Start_Hour": 14, "End_Hour": 16, "Location": "Room 2B"},
    {"Date": "2022-01-19", "Person": "Miguel Santos", "Event": "Dentist appointment", "Start_Hour": 11, "End_Hour": 12, "Location": "Smile Clinic"},
    {"Date": "2022-01-19", "Person": "Priya Patel", "Event": "Piano lesson", "Start_Hour": 17, "End_Hour": 18, "Location": "Harmony Studio"},
    {"Date": "2022-01-20", "Person": "Miguel Santos", "Event": "Project kickoff", "Start_Hour": 10, "End_Hour": 13, "Location": "Main Hall"},
    {"Date": "2022-01-20", "Person": "Priya Patel", "Event": "Yoga class", "Start_Hour": 7, "End_Hour": 8, "Location": "Green Gym"},
    {"Date": "2022-01-21", "Person": "Sarah Chen", "Event": "Flight to Boston", "Start_Hour": 6, "End_Hour": 11, "Location": "Airport"},
    {"Date": "2022-01-21", "Person": "Miguel Santos", "Event": "Book club", "Start_Hour": 19, "End_Hour": 21, "Location": "City Library"},
]


def build_world() -> dict:
    return {
        "coffee": {"columns": list(COFFEE_COLUMNS), "rows": [dict(r) for r in COFFEE_ROWS]},
        "agenda": {"columns": list(AGENDA_COLUMNS), "rows": [dict(r) for r in AGENDA_ROWS]},
    }


def format_number(x: float) -> str:
    """Canonical number rendering: integers bare, fractions at 2 decimals."""
    if abs(x - round(x)) < 1e-9:
        return str(int(round(x)))
    return f"{round(x, 2):g}"


# ---------------------------------------------------------------------------
# Filter conditions. String form: "NAME=Chao Zhang, Date<=2004-01-16".
# Map form: {"condition1": "NAME=Chao Zhang", "condition2": "Date<=2004-01-16"}.
# ---------------------------------------------------------------------------

_OPS = [("<=", operator.le), (">=", operator.ge), ("=", operator.eq), ("<", operator.lt), (">", operator.gt)]


def split_conditions(value) -> list[str]:
    if isinstance(value, dict):
        return [str(v) for v in value.values()]
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    raise BehaviorError(f"unsupported condition value: {value!r}")


def conditions_to_map(text: str) -> dict[str, str]:
    return {f"condition{i + 1}": cond for i, cond in enumerate(split_conditions(text))}


def conditions_to_text(mapping: dict[str, str]) -> str:
    return ", ".join(mapping.values())


def _match(row: dict, cond: str) -> bool:
    for symbol, op in _OPS:
        if symbol in cond:
            column, _, raw = cond.partition(symbol)
            column, raw = column.strip(), raw.strip()
            if column not in row:
                raise BehaviorError(f"unknown column {column!r}")
            cell = row[column]
            try:
                return op(float(cell), float(raw))
            except (TypeError, ValueError):
                return op(str(cell), raw)
    raise BehaviorError(f"unparseable condition {cond!r}")


def filter_rows(table: dict, condition) -> list[dict]:
    conds = split_conditions(condition)
    if not conds:
        raise BehaviorError("empty filter condition")
    return [row for row in table["rows"] if all(_match(row, c) for c in conds)]


def _table(world: dict, name) -> dict:
    if not isinstance(name, str) or name not in world:
        raise BehaviorError(f"unknown dataset {name!r}")
    return world[name]


def _cell_text(value) -> str:
    if isinstance(value, (int, float)):
        return format_number(float(value))
    return str(value)


def behavior_load_db(values: list, world: dict) -> str:
    table = _table(world, values[0])
    return (
        f"We have successfully loaded the {values[0]} database, "
        f"including the following columns: {', '.join(table['columns'])}."
    )


def behavior_filter_db(values: list, world: dict) -> str:
    rows = filter_rows(_table(world, values[0]), values[1])
    return f"We have filtered the database. The filtered data contains {len(rows)} rows."


def behavior_get_value(values: list, world: dict) -> str:
    db_name, condition, column = values
    table = _table(world, db_name)
    if not isinstance(column, str) or column not in table["columns"]:
        raise BehaviorError(f"unknown column {column!r}")
    rows = filter_rows(table, condition)
    if not rows:
        raise BehaviorError("no rows match the filter condition")
    cells = [_cell_text(row[column]) for row in rows]
    if len(cells) == 1:
        return f"The value of the {column} column is: {cells[0]}."
    return f"The values of the {column} column are: {', '.join(cells)}."


_ALLOWED_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def _eval_arith(node: ast.AST) -> float:
    if isinstance(node, ast.Expression):
        return _eval_arith(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        value = _eval_arith(node.operand)
        return -value if isinstance(node.op, ast.USub) else value
    if isinstance(node, ast.BinOp) and type(node.op) in _ALLOWED_BINOPS:
        return _ALLOWED_BINOPS[type(node.op)](_eval_arith(node.left), _eval_arith(node.right))
    raise BehaviorError("unsupported expression")


def behavior_calculate(values: list, world: dict) -> str:
    expr = values[0]
    if not isinstance(expr, str):
        raise BehaviorError("expression must be text")
    try:
        result = _eval_arith(ast.parse(expr, mode="eval"))
    except (SyntaxError, ZeroDivisionError, ValueError) as exc:
        raise BehaviorError(str(exc)) from exc
    return f"The calculated result is: {format_number(result)}."


BASE_BEHAVIORS: dict[str, Behavior] = {
    "LoadDB": behavior_load_db,
    "FilterDB": behavior_filter_db,
    "GetValue": behavior_get_value,
    "Calculate": behavior_calculate,
}


def build_base_registry(world: dict | None = None) -> ToolRegistry:
    """The collected tool surface mirrored into the server's base generation."""
    world = world if world is not None else build_world()
    condition_param = ParamSpec(
        name="FilterCondition",
        kind="text",
        example="Date=2022-09-05",
        alt_kind="map",
        alt_example=json.dumps({"condition1": "Date=2022-09-05"}),
    )
    apis = {
        "LoadDB": ApiSpec(
            name="LoadDB",
            params=(ParamSpec(name="DBName", example="coffee"),),
            description="Loads the database by name and lists its columns.",
            response_note="Returns a sentence listing the column names.",
        ),
        "FilterDB": ApiSpec(
            name="FilterDB",
            params=(ParamSpec(name="DBName", example="coffee"), condition_param),
            description="Filters the database rows by one or more conditions.",
            response_note="Returns a sentence with the matching row count.",
        ),
        "GetValue": ApiSpec(
            name="GetValue",
            params=(
                ParamSpec(name="DBName", example="coffee"),
                condition_param,
                ParamSpec(name="ColumnName", example="Close"),
            ),
            description="Returns the value of a column for the rows matching a condition.",
            response_note="Returns a sentence with the matching value or values.",
        ),
        "Calculate": ApiSpec(
            name="Calculate",
            params=(ParamSpec(name="Expression", example="(189.35 - 189.7) / 189.7 * 100"),),
            description="Evaluates an arithmetic expression.",
            response_note="Returns a sentence with the calculated result.",
        ),
        "Finish": ApiSpec(
            name="Finish",
            params=(ParamSpec(name="answer", example="5"),),
            description="Submits the final answer and ends the task.",
            is_system_tool=True,
        ),
        "UpdateTool": ApiSpec(
            name="UpdateTool",
            params=(ParamSpec(name="newtool_desc", example="NewTool[Param], which is ..."),),
            description="Appends a newly learned tool description to the tool manual.",
            is_system_tool=True,
        ),
    }
    registry = ToolRegistry(apis=apis, behaviors=dict(BASE_BEHAVIORS), world=world, generation="base")
    registry.validate()
    return registry


def manual_entry(spec: ApiSpec) -> str:
    text = f"{spec.signature()}: {spec.description}"
    if spec.response_note:
        text += f" {spec.response_note}"
    if spec.params and not spec.is_system_tool:
        text += f" For example, {json.dumps(spec.example_args())}."
    return text


def build_manual(registry: ToolRegistry) -> list[str]:
    order = ["LoadDB", "FilterDB", "GetValue", "Calculate", "Finish", "UpdateTool"]
    names = [n for n in order if n in registry.apis]
    names += [n for n in sorted(registry.apis) if n not in names]
    return [manual_entry(registry.apis[n]) for n in names]


# ---------------------------------------------------------------------------
# Tasks and their reference tool plans.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlannedCall:
    """One intended invocation, in base-registry vocabulary."""

    tool: str
    args: dict
    thought: str


@dataclass(frozen=True)
class TaskPlan:
    calls: tuple[PlannedCall, ...]
    answer: str
    finish_thought: str = "I now know the final answer."


@dataclass
class Corpus:
    """Built-in corpus bundle: world, base registry, prompt material, tasks."""

    world: dict
    base_registry: ToolRegistry
    manual: list[str]
    demos: list[str]
    tasks: list[TaskInstance]
    plans: dict[str, TaskPlan] = field(default_factory=dict)

    def task(self, task_id: str) -> TaskInstance:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)


def _coffee_row(world: dict, date: str) -> dict:
    for row in world["coffee"]["rows"]:
        if row["Date"] == date:
            return row
    raise KeyError(date)


def _agenda_rows(world: dict, person: str, date: str) -> list[dict]:
    return [r for r in world["agenda"]["rows"] if r["Person"] == person and r["Date"] == date]


def _lookup_plan(db: str, condition: str, column: str, answer: str, topic: str) -> TaskPlan:
    return TaskPlan(
        calls=(
            PlannedCall(
                tool="LoadDB",
                args={"DBName": db},
                thought=f"I should first load the {db} database containing {topic}.",
            ),
            PlannedCall(
                tool="FilterDB",
                args={"DBName": db, "FilterCondition": condition},
                thought="Now I filter the rows that are relevant to the question.",
            ),
            PlannedCall(
                tool="GetValue",
                args={"DBName": db, "FilterCondition": condition, "ColumnName": column},
                thought=f"I can read the {column} column from the filtered rows.",
            ),
        ),
        answer=answer,
    )


def _calc_plan(db: str, condition: str, column_reads: list[str], expression: str, answer: str, topic: str) -> TaskPlan:
    calls = [
        PlannedCall(
            tool="LoadDB",
            args={"DBName": db},
            thought=f"I should first load the {db} database containing {topic}.",
        ),
        PlannedCall(
            tool="FilterDB",
            args={"DBName": db, "FilterCondition": condition},
            thought="Now I filter the rows that are relevant to the question.",
        ),
    ]
    for column in column_reads:
        calls.append(
            PlannedCall(
                tool="GetValue",
                args={"DBName": db, "FilterCondition": condition, "ColumnName": column},
                thought=f"I need the {column} column of the matching row.",
            )
        )
    calls.append(
        PlannedCall(
            tool="Calculate",
            args={"Expression": expression},
            thought="With the values in hand, I can compute the result.",
        )
    )
    return TaskPlan(calls=tuple(calls), answer=answer)


def _count_plan(db: str, condition: str, answer: str, topic: str) -> TaskPlan:
    return TaskPlan(
        calls=(
            PlannedCall(
                tool="LoadDB",
                args={"DBName": db},
                thought=f"I should first load the {db} database containing {topic}.",
            ),
            PlannedCall(
                tool="FilterDB",
                args={"DBName": db, "FilterCondition": condition},
                thought="Filtering tells me how many rows match.",
            ),
        ),
        answer=answer,
    )


def _build_tasks(world: dict) -> tuple[list[TaskInstance], dict[str, TaskPlan]]:
    tasks: list[TaskInstance] = []
    plans: dict[str, TaskPlan] = {}

    def add(task: TaskInstance, plan: TaskPlan) -> None:
        tasks.append(task)
        plans[task.id] = plan

    coffee_topic = "coffee price information"
    easy_lookups = [
        ("2000-01-03", "Close", "closing price"),
        ("2000-01-04", "Open", "opening price"),
        ("2012-03-08", "High", "highest price"),
        ("2012-03-09", "Low", "lowest price"),
        ("2022-09-05", "Volume", "trading volume"),
        ("2022-09-06", "Close", "closing price"),
    ]
    for i, (date, column, label) in enumerate(easy_lookups, start=1):
        row = _coffee_row(world, date)
        add(
            TaskInstance(
                id=f"coffee-easy-{i}",
                description=f"What was the {label} of coffee on {date}?",
                gold_answer=format_number(float(row[column])),
                dataset="coffee",
                difficulty="easy",
            ),
            _lookup_plan("coffee", f"Date={date}", column, format_number(float(row[column])), coffee_topic),
        )

    range_dates = ["2000-01-03", "2012-03-09", "2022-09-06"]
    for i, date in enumerate(range_dates, start=1):
        row = _coffee_row(world, date)
        spread = float(row["High"]) - float(row["Low"])
        expr = f"{row['High']} - {row['Low']}"
        add(
            TaskInstance(
                id=f"coffee-hard-{i}",
                description=f"By how much did the highest coffee price exceed the lowest on {date}?",
                gold_answer=format_number(spread),
                dataset="coffee",
                difficulty="hard",
            ),
            _calc_plan("coffee", f"Date={date}", ["High", "Low"], expr, format_number(spread), coffee_topic),
        )
    pct_dates = ["2012-03-08", "2012-03-09", "2022-09-06"]
    for i, date in enumerate(pct_dates, start=len(range_dates) + 1):
        row = _coffee_row(world, date)
        pct = (float(row["Close"]) - float(row["Open"])) / float(row["Open"]) * 100
        expr = f"({row['Close']} - {row['Open']}) / {row['Open']} * 100"
        add(
            TaskInstance(
                id=f"coffee-hard-{i}",
                description=f"What was the percentage change of the coffee price on {date}?",
                gold_answer=format_number(pct),
                dataset="coffee",
                difficulty="hard",
            ),
            _calc_plan("coffee", f"Date={date}", ["Close", "Open"], expr, format_number(pct), coffee_topic),
        )

    agenda_topic = "agenda events"
    easy_agenda = [
        ("Sarah Chen", "2022-01-18", "Event=Team standup", "Location", "Where does Sarah Chen's team standup take place on 2022-01-18?"),
        ("Sarah Chen", "2022-01-18", "Event=Budget review", "Start_Hour", "At what hour does Sarah Chen's budget review start on 2022-01-18?"),
        ("Miguel Santos", "2022-01-19", "", "Event", "What event does Miguel Santos have on 2022-01-19?"),
        ("Priya Patel", "2022-01-19", "", "Location", "Where does Priya Patel's event on 2022-01-19 take place?"),
        ("Miguel Santos", "2022-01-20", "", "End_Hour", "At what hour does Miguel Santos's event on 2022-01-20 end?"),
        ("Priya Patel", "2022-01-20", "", "Event", "What event does Priya Patel have on 2022-01-20?"),
    ]
    for i, (person, date, extra, column, question) in enumerate(easy_agenda, start=1):
        condition = f"Person={person}, Date={date}"
        if extra:
            condition += f", {extra}"
        rows = [r for r in filter_rows(world["agenda"], condition)]
        assert len(rows) == 1, (person, date, extra)
        add(
            TaskInstance(
                id=f"agenda-easy-{i}",
                description=question,
                gold_answer=_cell_text(rows[0][column]),
                dataset="agenda",
                difficulty="easy",
            ),
            _lookup_plan("agenda", condition, column, _cell_text(rows[0][column]), agenda_topic),
        )

    duration_cases = [
        ("Sarah Chen", "2022-01-18", "Event=Budget review"),
        ("Miguel Santos", "2022-01-20", ""),
        ("Sarah Chen", "2022-01-21", ""),
        ("Miguel Santos", "2022-01-21", ""),
    ]
    for i, (person, date, extra) in enumerate(duration_cases, start=1):
        condition = f"Person={person}, Date={date}"
        if extra:
            condition += f", {extra}"
        rows = filter_rows(world["agenda"], condition)
        assert len(rows) == 1, (person, date, extra)
        row = rows[0]
        hours = float(row["End_Hour"]) - float(row["Start_Hour"])
        expr = f"{row['End_Hour']} - {row['Start_Hour']}"
        add(
            TaskInstance(
                id=f"agenda-hard-{i}",
                description=f"How many hours does {person}'s event on {date} last?",
                gold_answer=format_number(hours),
                dataset="agenda",
                difficulty="hard",
            ),
            _calc_plan("agenda", condition, ["End_Hour", "Start_Hour"], expr, format_number(hours), agenda_topic),
        )
    count_cases = [("Sarah Chen", "2022-01-18"), ("Priya Patel", "2022-01-19")]
    for i, (person, date) in enumerate(count_cases, start=len(duration_cases) + 1):
        condition = f"Person={person}, Date={date}"
        n = len(_agenda_rows(world, person, date))
        add(
            TaskInstance(
                id=f"agenda-hard-{i}",
                description=f"How many events does {person} have on {date}?",
                gold_answer=str(n),
                dataset="agenda",
                difficulty="hard",
            ),
            _count_plan("agenda", condition, str(n), agenda_topic),
        )

    return tasks, plans


def _demo_block(question: str, steps: list[tuple[str, str, dict, str]]) -> str:
    lines = [f"Question: {question}"]
    for thought, action, action_input, observation in steps:
        lines.append("")
        lines.append(f"Thought: {thought}")
        lines.append(f"Action: {action}")
        lines.append(f"Action Input: {json.dumps(action_input)}")
        lines.append(f"Observation: {observation}")
    return "\n".join(lines)


def build_demos() -> list[str]:
    """Three fixed few-shot demonstrations using the base tool vocabulary."""
    demo1 = _demo_block(
        "What was the closing price of coffee on 2000-01-04?",
        [
            (
                "To answer this question, I should first load the database containing coffee price information.",
                "LoadDB",
                {"DBName": "coffee"},
                "We have successfully loaded the coffee database, including the following columns: "
                "Date, Open, High, Low, Close, Volume, Currency.",
            ),
            (
                "Now I filter the rows to the requested date.",
                "FilterDB",
                {"DBName": "coffee", "FilterCondition": "Date=2000-01-04"},
                "We have filtered the database. The filtered data contains 1 rows.",
            ),
            (
                "I can read the Close column from the filtered row.",
                "GetValue",
                {"DBName": "coffee", "FilterCondition": "Date=2000-01-04", "ColumnName": "Close"},
                "The value of the Close column is: 116.25.",
            ),
            (
                "I now know the final answer.",
                "Finish",
                {"answer": "116.25"},
                "Answer is CORRECT",
            ),
        ],
    )
    demo2 = _demo_block(
        "Where does Priya Patel's piano lesson take place on 2022-01-19?",
        [
            (
                "To answer this question, I should first load the database containing agenda events.",
                "LoadDB",
                {"DBName": "agenda"},
                "We have successfully loaded the agenda database, including the following columns: "
                "Date, Person, Event, Start_Hour, End_Hour, Location.",
            ),
            (
                "Now I filter the agenda to Priya Patel's entry on that date.",
                "FilterDB",
                {"DBName": "agenda", "FilterCondition": "Person=Priya Patel, Date=2022-01-19"},
                "We have filtered the database. The filtered data contains 1 rows.",
            ),
            (
                "I can read the Location column from the filtered row.",
                "GetValue",
                {"DBName": "agenda", "FilterCondition": "Person=Priya Patel, Date=2022-01-19", "ColumnName": "Location"},
                "The value of the Location column is: Harmony Studio.",
            ),
            (
                "I now know the final answer.",
                "Finish",
                {"answer": "Harmony Studio"},
                "Answer is CORRECT",
            ),
        ],
    )
    demo3 = _demo_block(
        "What was the percentage change of the coffee price on 2012-03-08?",
        [
            (
                "To answer this question, I should first load the database containing coffee price information.",
                "LoadDB",
                {"DBName": "coffee"},
                "We have successfully loaded the coffee database, including the following columns: "
                "Date, Open, High, Low, Close, Volume, Currency.",
            ),
            (
                "Now I filter the rows to the requested date.",
                "FilterDB",
                {"DBName": "coffee", "FilterCondition": "Date=2012-03-08"},
                "We have filtered the database. The filtered data contains 1 rows.",
            ),
            (
                "I need the Close column of the matching row.",
                "GetValue",
                {"DBName": "coffee", "FilterCondition": "Date=2012-03-08", "ColumnName": "Close"},
                "The value of the Close column is: 189.35.",
            ),
            (
                "I need the Open column of the matching row.",
                "GetValue",
                {"DBName": "coffee", "FilterCondition": "Date=2012-03-08", "ColumnName": "Open"},
                "The value of the Open column is: 189.7.",
            ),
            (
                "With the opening and closing prices, I can compute the percentage change.",
                "Calculate",
                {"Expression": "(189.35 - 189.7) / 189.7 * 100"},
                "The calculated result is: -0.18.",
            ),
            (
                "I now know the final answer.",
                "Finish",
                {"answer": "-0.18"},
                "Answer is CORRECT",
            ),
        ],
    )
    return [demo1, demo2, demo3]


def builtin_corpus() -> tuple[ToolRegistry, list[TaskInstance]]:
    """The embedded toy corpus: (base registry, tasks)."""
    bundle = load_corpus()
    return bundle.base_registry, bundle.tasks


def load_corpus() -> Corpus:
    world = build_world()
    registry = build_base_registry(world)
    tasks, plans = _build_tasks(world)
    return Corpus(
        world=world,
        base_registry=registry,
        manual=build_manual(registry),
        demos=build_demos(),
        tasks=tasks,
        plans=plans,
    )


def tasks_to_json(tasks: list[TaskInstance]) -> str:
    doc = [
        {
            "id": t.id,
            "description": t.description,
            "gold_answer": t.gold_answer,
            "dataset": t.dataset,
            "difficulty": t.difficulty,
        }
        for t in tasks
    ]
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def tasks_from_json(text: str) -> list[TaskInstance]:
    return [TaskInstance(**d) for d in json.loads(text)]
