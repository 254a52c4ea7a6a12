"""Deterministic API mutation: derive drifted registry generations from a base.

Mutations rename tools and parameters (synonym substitution, special-character
insertion between words), flip parameter formats between condition-string and
keyed-map form, and swap response notes. System tools are never touched. The
same (base, plan) pair always serializes to identical bytes: all choices are
drawn from a SHA-256 stream keyed by (seed, api, field), never from global RNG
state, so outputs are stable across platforms and Python versions.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import re
from dataclasses import dataclass, field, replace

from .env import (
    ApiSpec,
    DeprecationEntry,
    ParamSpec,
    ToolRegistry,
    invoke,
)

MUTATION_KINDS = (
    "name_text",
    "name_special_char",
    "param_text",
    "param_special_char",
    "param_format",
    "response_format",
)
SPECIAL_CHARS = ("_", "-", ".")

# Synonyms are CamelCase-compatible and exclude the original word, so a
# touched name always differs from the one it replaces.
DEFAULT_SYNONYMS: dict[str, list[str]] = {
    "Load": ["Initialize", "Open", "Mount"],
    "DB": ["Database", "Datastore", "DataTable"],
    "Filter": ["Select", "Screen", "Narrow"],
    "Get": ["Fetch", "Retrieve", "Read"],
    "Value": ["Entry", "Field", "Cell"],
    "Calculate": ["Compute", "Evaluate", "Reckon"],
    "Name": ["Label", "Identifier", "Title"],
    "Condition": ["Criteria", "Clause", "Predicate"],
    "Column": ["Attribute", "Header", "FieldName"],
    "Expression": ["Formula", "Arithmetic", "Calculation"],
    "Retrieve": ["Fetch", "Collect", "Gather"],
    "Agenda": ["Schedule", "Calendar", "AgendaData"],
}

RESPONSE_NOTE_VARIANTS = [
    "The response is returned as a plain-text sentence.",
    "The response is returned as a JSON object with a single result field.",
    "The response is returned as a list of lines, one item per line.",
]

_CAMEL_WORD_RE = re.compile(
    r"[A-Z]+(?=[A-Z][a-z])|[A-Z]+(?![a-z])|[A-Z][a-z0-9]*|[0-9]+|[a-z][a-z0-9]*"
)
_CAMEL_SEGMENT_RE = re.compile(r"^[A-Za-z][A-Za-z0-9]*$")


class MutationError(ValueError):
    """Raised when a plan cannot be applied, e.g. an uncovered name word."""


@dataclass(frozen=True)
class MutationPlan:
    """Seeded recipe for one drifted registry generation."""

    seed: int
    kinds: frozenset[str] = frozenset({"name_text", "param_text", "param_format"})
    special_char: str = "_"
    synonym_table: dict[str, list[str]] = field(default_factory=lambda: dict(DEFAULT_SYNONYMS))

    def __post_init__(self) -> None:
        if not self.kinds:
            raise MutationError("plan must select at least one mutation kind")
        unknown = set(self.kinds) - set(MUTATION_KINDS)
        if unknown:
            raise MutationError(f"unknown mutation kinds: {sorted(unknown)}")
        if self.special_char not in SPECIAL_CHARS:
            raise MutationError(f"special_char must be one of {SPECIAL_CHARS}")


def split_words(name: str, special_chars: str = "".join(SPECIAL_CHARS)) -> list[str]:
    """Split an API or parameter name into words at special chars and case humps."""
    words: list[str] = []
    for segment in re.split(f"[{re.escape(special_chars)}]", name):
        if segment:
            words.extend(_CAMEL_WORD_RE.findall(segment))
    return words


def _draw(seed: int, *context: str) -> int:
    payload = ":".join((str(seed),) + context).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


def _choose(options: list[str], seed: int, *context: str) -> str:
    return options[_draw(seed, *context) % len(options)]


def _substitute_words(words: list[str], plan: MutationPlan, *context: str) -> list[str]:
    out = []
    for i, word in enumerate(words):
        options = plan.synonym_table.get(word)
        if not options:
            raise MutationError(f"synonym table has no entry for word {word!r}")
        out.append(_choose(options, plan.seed, *context, f"word{i}", word))
    return out


def _rename(name: str, plan: MutationPlan, text_kind: str, char_kind: str, force: bool, *context: str) -> str:
    """Apply the selected textual/special-char kinds to one identifier.

    ``force`` covers two gaps that would otherwise leave a name unchanged:
    an API-name plan with no naming kind still needs a renamed successor
    (every mutated API must sit one deprecation hop away), and a single-word
    name has no boundary to insert a character into. Both fall back to
    synonym substitution.
    """
    words = split_words(name)
    substitute = text_kind in plan.kinds
    insert_char = char_kind in plan.kinds or (force and not substitute)
    if insert_char and len(words) < 2 and not substitute:
        substitute = True
    if substitute:
        words = _substitute_words(words, plan, *context)
    joiner = plan.special_char if insert_char and len(words) > 1 else ""
    result = joiner.join(words)
    if force and result == name:
        # the marker character was already present; vary the text instead
        words = _substitute_words(split_words(name), plan, *context)
        result = joiner.join(words)
    return result


def _convert_example(param: ParamSpec) -> ParamSpec:
    """Flip a format-switchable param between its text and map forms."""
    if param.alt_kind is None:
        return param
    return replace(
        param,
        kind=param.alt_kind,
        example=param.alt_example or "",
        alt_kind=param.kind,
        alt_example=param.example,
    )


def _mutate_param(param: ParamSpec, plan: MutationPlan, api_name: str, index: int) -> ParamSpec:
    out = param
    if "param_format" in plan.kinds and param.alt_kind is not None:
        out = _convert_example(out)
    if "param_text" in plan.kinds or "param_special_char" in plan.kinds:
        new_name = _rename(
            out.name, plan, "param_text", "param_special_char", False, api_name, f"param{index}", out.name
        )
        out = replace(out, name=new_name)
    return out


def mutate_registry(base: ToolRegistry, plan: MutationPlan) -> ToolRegistry:
    """Derive a new registry generation; pure in (serialized base, plan)."""
    if not base.non_system_apis():
        raise MutationError("base registry has no non-system API to mutate")
    apis: dict[str, ApiSpec] = {}
    behaviors = {}
    deprecated: dict[str, DeprecationEntry] = {}
    for name in sorted(base.apis):
        spec = base.apis[name]
        if spec.is_system_tool:
            apis[name] = spec
            continue
        new_name = _rename(name, plan, "name_text", "name_special_char", True, name, "api")
        if new_name == name:
            raise MutationError(f"mutation left API name {name!r} unchanged")
        if new_name in apis or new_name in base.apis:
            raise MutationError(f"mutated name collision on {new_name!r}")
        new_params = tuple(
            _mutate_param(p, plan, name, i) for i, p in enumerate(spec.params)
        )
        if len({p.name for p in new_params}) != len(new_params):
            raise MutationError(f"mutated params of {name!r} collide")
        description = spec.description
        response_note = spec.response_note
        if "response_format" in plan.kinds:
            options = [v for v in RESPONSE_NOTE_VARIANTS if v != spec.response_note]
            response_note = _choose(options, plan.seed, name, "response_note")
        new_spec = ApiSpec(
            name=new_name,
            params=new_params,
            description=description,
            response_note=response_note,
            is_system_tool=False,
        )
        apis[new_name] = new_spec
        behaviors[new_name] = base.behaviors[name]
        deprecated[name] = DeprecationEntry(
            successor=new_name,
            param_example=new_spec.example_args(),
            old_params=tuple(spec.param_names()),
        )
    registry = ToolRegistry(
        apis=apis,
        behaviors=behaviors,
        deprecated=deprecated,
        world=base.world,
        generation=f"mutated-{plan.seed}",
    )
    registry.validate()
    return registry


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass
class MutationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)


def _check_identifier(report: MutationReport, owner: str, name: str) -> None:
    chars = re.escape("".join(SPECIAL_CHARS))
    for segment in re.split(f"[{chars}]", name):
        if not segment:
            report.add(f"{owner}: special character not between words in {name!r}")
        elif not _CAMEL_SEGMENT_RE.match(segment) or not segment[0].isupper():
            report.add(f"{owner}: special char inside word or non-CamelCase segment {segment!r} in {name!r}")


def _remap_args(old_spec: ApiSpec, new_spec: ApiSpec, args: dict) -> dict:
    """Translate a base invocation onto the successor signature positionally."""
    out = {}
    for old_p, new_p in zip(old_spec.params, new_spec.params):
        value = args[old_p.name]
        if new_p.kind == "map" and isinstance(value, str):
            value = {f"condition{i + 1}": part.strip() for i, part in enumerate(value.split(","))}
        elif new_p.kind == "text" and isinstance(value, dict):
            value = ", ".join(value.values())
        out[new_p.name] = value
    return out


def verify_mutation(base: ToolRegistry, mutated: ToolRegistry) -> MutationReport:
    """Check a mutated registry against the drift-construction constraints."""
    report = MutationReport()
    for spec in mutated.apis.values():
        if spec.is_system_tool:
            continue
        _check_identifier(report, f"api {spec.name}", spec.name)
        for p in spec.params:
            _check_identifier(report, f"api {spec.name} param", p.name)
    for name in ("Finish", "UpdateTool"):
        if base.apis.get(name) != mutated.apis.get(name):
            report.add(f"system tool {name} was modified")
    for spec in base.non_system_apis():
        entry = mutated.deprecated.get(spec.name)
        if entry is None:
            report.add(f"base api {spec.name} has no deprecation entry")
            continue
        if entry.successor not in mutated.apis:
            report.add(f"deprecation of {spec.name} points at missing {entry.successor}")
            continue
        if entry.successor in mutated.deprecated:
            report.add(f"deprecation chain detected at {entry.successor}")
        new_spec = mutated.apis[entry.successor]
        if len(new_spec.params) != len(spec.params):
            report.add(f"{entry.successor} changed arity relative to {spec.name}")
            continue
        probe = spec.example_args()
        base_obs = invoke(base, spec.name, probe)
        mut_obs = invoke(mutated, entry.successor, _remap_args(spec, new_spec, probe))
        if (base_obs.kind, base_obs.text) != (mut_obs.kind, mut_obs.text):
            report.add(
                f"behavior drift: {spec.name} -> {entry.successor} "
                f"({base_obs.kind}/{mut_obs.kind})"
            )
    return report


# ---------------------------------------------------------------------------
# Plan (de)serialization: one keyed plain-text config section.
# ---------------------------------------------------------------------------


def plan_to_config(plan: MutationPlan) -> str:
    parser = configparser.ConfigParser()
    parser["mutation"] = {
        "seed": str(plan.seed),
        "kinds": ", ".join(sorted(plan.kinds)),
        "special_char": plan.special_char,
        "synonyms": json.dumps(plan.synonym_table, sort_keys=True),
    }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def plan_from_section(section) -> MutationPlan:
    kinds = frozenset(k.strip() for k in section.get("kinds", "").split(",") if k.strip())
    synonyms = section.get("synonyms", "")
    return MutationPlan(
        seed=int(section.get("seed", "0")),
        kinds=kinds or MutationPlan(seed=0).kinds,
        special_char=section.get("special_char", "_"),
        synonym_table=json.loads(synonyms) if synonyms else dict(DEFAULT_SYNONYMS),
    )


def plan_from_config(text: str) -> MutationPlan:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    if "mutation" not in parser:
        raise MutationError("config has no [mutation] section")
    return plan_from_section(parser["mutation"])
