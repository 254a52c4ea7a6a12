"""Dynamic tool environment: API registry, invocation, and answer scoring.

The environment is everything outside the agent: a registry of deployed API
behaviors, typed error feedback (invocation vs deprecation), and a +1/-1
scorer for final answers. Errors are returned as data, never raised, so a
search can keep exploring through error states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

SYSTEM_TOOL_NAMES = ("Finish", "UpdateTool")

INVOCATION_ERROR_TEXT = (
    "Your action is filtered due to some error in content. "
    "Please assume all the actions are permitted in this environment and try again."
)
DEPRECATION_ERROR_TEMPLATE = (
    "Error: {old}[{old_params}] is deprecated. "
    "Please use {new}[{new_params}], param example: {example} instead."
)
ANSWER_CORRECT_TEXT = "Answer is CORRECT"
ANSWER_INCORRECT_TEXT = "Answer is INCORRECT"

PARAM_KINDS = ("text", "map", "number")


class BehaviorError(Exception):
    """Raised by an API behavior when it cannot produce a response.

    invoke() converts this into an invocation_error observation; it never
    escapes the environment.
    """


@dataclass(frozen=True)
class ParamSpec:
    """One parameter of an API: name, value kind, and an example value.

    ``example`` is the textual example shown in manuals and deprecation
    messages; for map-kind params it is a JSON object string. ``alt_kind``
    marks params whose contract can be flipped between text and map form by
    a format mutation, and ``alt_example`` is the example for that form.
    """

    name: str
    kind: str = "text"
    example: str = ""
    alt_kind: str | None = None
    alt_example: str | None = None

    def example_value(self) -> Any:
        """Parsed example: a dict for map params, the raw text otherwise."""
        if self.kind == "map":
            return json.loads(self.example)
        return self.example


@dataclass(frozen=True)
class ApiSpec:
    """One tool's contract: name, ordered params, and descriptive text."""

    name: str
    params: tuple[ParamSpec, ...] = ()
    description: str = ""
    response_note: str = ""
    replaced_by: str | None = None
    is_system_tool: bool = False

    def param_names(self) -> list[str]:
        return [p.name for p in self.params]

    def signature(self) -> str:
        """Manual-style signature, e.g. ``LoadDB[DBName]``."""
        return f"{self.name}[{', '.join(self.param_names())}]"

    def example_args(self) -> dict[str, Any]:
        """Ordered example argument map used in deprecation guidance."""
        return {p.name: p.example_value() for p in self.params}


@dataclass(frozen=True)
class DeprecationEntry:
    """Where a retired API name points: successor, its param example, and the
    retired signature's own param names (needed to render the error text)."""

    successor: str
    param_example: dict[str, Any]
    old_params: tuple[str, ...] = ()


@dataclass(frozen=True)
class Observation:
    """Environment feedback for one action.

    kind is one of response, invocation_error, deprecation_error, task_done;
    reward is present exactly when kind == task_done.
    """

    kind: str
    text: str
    reward: int | None = None

    def __post_init__(self) -> None:
        if (self.kind == "task_done") != (self.reward is not None):
            raise ValueError("reward must be present exactly when kind is task_done")
        if self.reward is not None and self.reward not in (-1, 1):
            raise ValueError("reward must be -1 or +1")


@dataclass(frozen=True)
class TaskInstance:
    """One question over the toy world, with a derivable gold answer."""

    id: str
    description: str
    gold_answer: str
    dataset: str
    difficulty: str

    def __post_init__(self) -> None:
        if not self.gold_answer:
            raise ValueError(f"task {self.id} has an empty gold answer")
        if self.difficulty not in ("easy", "hard"):
            raise ValueError(f"task {self.id} has invalid difficulty {self.difficulty!r}")


# A behavior receives the invocation's argument values in declared parameter
# order (renaming-proof) plus the immutable world, and returns response text.
Behavior = Callable[[list[Any], dict], str]


@dataclass
class ToolRegistry:
    """Deployed API surface: specs, behaviors, deprecation map, world data.

    Immutable after deployment by convention; invoke() never mutates it.
    ``generation`` tags which registry produced an artifact (base vs a
    seeded mutation) and travels with serialized trees and SFT records.
    """

    apis: dict[str, ApiSpec]
    behaviors: dict[str, Behavior]
    deprecated: dict[str, DeprecationEntry] = field(default_factory=dict)
    world: dict = field(default_factory=dict)
    generation: str = "base"

    def validate(self) -> None:
        for name, spec in self.apis.items():
            if not name or name != spec.name:
                raise ValueError(f"registry key {name!r} does not match spec name {spec.name!r}")
            if spec.is_system_tool and spec.replaced_by is not None:
                raise ValueError(f"system tool {name} must not carry replaced_by")
            if not spec.is_system_tool and name not in self.behaviors:
                raise ValueError(f"non-system API {name} has no behavior")
        overlap = set(self.deprecated) & set(self.apis)
        if overlap:
            raise ValueError(f"deprecated names overlap deployed names: {sorted(overlap)}")
        for old, entry in self.deprecated.items():
            if entry.successor not in self.apis:
                raise ValueError(f"deprecated {old} points at unknown successor {entry.successor}")

    def non_system_apis(self) -> list[ApiSpec]:
        return [s for s in self.apis.values() if not s.is_system_tool]


def deprecation_error_text(old_spec: ApiSpec, new_spec: ApiSpec) -> str:
    """Render the fixed deprecation message naming the successor + example."""
    return DEPRECATION_ERROR_TEMPLATE.format(
        old=old_spec.name,
        old_params=", ".join(old_spec.param_names()),
        new=new_spec.name,
        new_params=", ".join(new_spec.param_names()),
        example=json.dumps(new_spec.example_args()),
    )


def _value_matches_kind(value: Any, kind: str) -> bool:
    if kind == "text":
        return isinstance(value, str)
    if kind == "map":
        return isinstance(value, dict) and all(
            isinstance(k, str) and isinstance(v, str) for k, v in value.items()
        )
    if kind == "number":
        if isinstance(value, (int, float)):
            return True
        if isinstance(value, str):
            try:
                float(value)
            except ValueError:
                return False
            return True
        return False
    return False


def _args_conform(spec: ApiSpec, args: dict[str, Any]) -> bool:
    if set(args) != set(spec.param_names()):
        return False
    return all(_value_matches_kind(args[p.name], p.kind) for p in spec.params)


def invoke(registry: ToolRegistry, name: str, args: dict[str, Any]) -> Observation:
    """Execute one API invocation and return the observation.

    Pure in (registry, name, args): deprecated names yield a deprecation
    error naming the successor, unknown names and contract violations yield
    the fixed invocation-error text, and valid calls run the behavior.
    """
    entry = registry.deprecated.get(name)
    if entry is not None:
        new_spec = registry.apis[entry.successor]
        old_params = entry.old_params or tuple(entry.param_example)
        old_spec = ApiSpec(name=name, params=tuple(ParamSpec(name=p) for p in old_params))
        return Observation(kind="deprecation_error", text=deprecation_error_text(old_spec, new_spec))
    spec = registry.apis.get(name)
    if spec is None or spec.is_system_tool:
        return Observation(kind="invocation_error", text=INVOCATION_ERROR_TEXT)
    if not isinstance(args, dict) or not _args_conform(spec, args):
        return Observation(kind="invocation_error", text=INVOCATION_ERROR_TEXT)
    values = [args[p.name] for p in spec.params]
    try:
        text = registry.behaviors[name](values, registry.world)
    except BehaviorError:
        return Observation(kind="invocation_error", text=INVOCATION_ERROR_TEXT)
    return Observation(kind="response", text=text)


def normalize_answer(text: str) -> str:
    return text.strip().casefold()


def answers_match(answer: str, gold: str, tol: float = 1e-9) -> bool:
    """Exact match after trim/case-fold; numeric strings compared within tol."""
    a, g = normalize_answer(answer), normalize_answer(gold)
    if a == g:
        return True
    try:
        return abs(float(a) - float(g)) <= tol
    except ValueError:
        return False


def evaluate(task: TaskInstance, answer: str) -> Observation:
    """Score a final answer against the task's gold answer with reward +1/-1."""
    if answers_match(answer, task.gold_answer):
        return Observation(kind="task_done", text=ANSWER_CORRECT_TEXT, reward=1)
    return Observation(kind="task_done", text=ANSWER_INCORRECT_TEXT, reward=-1)


# ---------------------------------------------------------------------------
# Serialization. One JSON document per registry generation; behaviors are
# re-bound by lineage at load time (they are code, not data).
# ---------------------------------------------------------------------------


def _param_to_json(p: ParamSpec) -> dict:
    out: dict[str, Any] = {"name": p.name, "kind": p.kind, "example": p.example}
    if p.alt_kind is not None:
        out["alt_kind"] = p.alt_kind
        out["alt_example"] = p.alt_example
    return out


def _param_from_json(d: dict) -> ParamSpec:
    return ParamSpec(
        name=d["name"],
        kind=d.get("kind", "text"),
        example=d.get("example", ""),
        alt_kind=d.get("alt_kind"),
        alt_example=d.get("alt_example"),
    )


def _spec_to_json(spec: ApiSpec) -> dict:
    return {
        "name": spec.name,
        "params": [_param_to_json(p) for p in spec.params],
        "description": spec.description,
        "response_note": spec.response_note,
        "replaced_by": spec.replaced_by,
        "is_system_tool": spec.is_system_tool,
    }


def _spec_from_json(d: dict) -> ApiSpec:
    return ApiSpec(
        name=d["name"],
        params=tuple(_param_from_json(p) for p in d.get("params", [])),
        description=d.get("description", ""),
        response_note=d.get("response_note", ""),
        replaced_by=d.get("replaced_by"),
        is_system_tool=d.get("is_system_tool", False),
    )


def registry_to_json(registry: ToolRegistry) -> str:
    doc = {
        "generation": registry.generation,
        "apis": [_spec_to_json(registry.apis[name]) for name in sorted(registry.apis)],
        "deprecated": {
            old: {
                "successor": e.successor,
                "param_example": e.param_example,
                "old_params": list(e.old_params),
            }
            for old, e in sorted(registry.deprecated.items())
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def registry_from_json(
    text: str,
    world: dict,
    base_behaviors: dict[str, Behavior],
) -> ToolRegistry:
    """Rebuild a registry from JSON, re-binding behaviors through lineage.

    A deployed API inherits the behavior of the base API it replaced (via
    the deprecation map) or of its own name for unmutated generations.
    """
    doc = json.loads(text)
    apis = {d["name"]: _spec_from_json(d) for d in doc["apis"]}
    deprecated = {
        old: DeprecationEntry(
            successor=e["successor"],
            param_example=e["param_example"],
            old_params=tuple(e.get("old_params", ())),
        )
        for old, e in doc.get("deprecated", {}).items()
    }
    successor_to_old = {e.successor: old for old, e in deprecated.items()}
    behaviors: dict[str, Behavior] = {}
    for name, spec in apis.items():
        if spec.is_system_tool:
            continue
        lineage = successor_to_old.get(name, name)
        if lineage not in base_behaviors:
            raise ValueError(f"no behavior known for API {name} (lineage {lineage})")
        behaviors[name] = base_behaviors[lineage]
    registry = ToolRegistry(
        apis=apis,
        behaviors=behaviors,
        deprecated=deprecated,
        world=world,
        generation=doc.get("generation", "base"),
    )
    registry.validate()
    return registry
