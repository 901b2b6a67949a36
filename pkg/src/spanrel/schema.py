"""Relation inventory, entity-type signatures, and question templates.

A schema lists relations in a fixed order (the order defines the reserved
token index used by the "token" template variant), each with a type
signature and a forward/reverse template per variant. All values are
immutable after load and safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

from .errors import SchemaError

if TYPE_CHECKING:
    from .reduction import RcInstance

VARIANTS = ("question", "relation", "token")
DIRECTIONS = ("fwd", "rev")

# Type tag that matches any entity type (datasets without NE types).
WILDCARD_TYPE = "*"

QID_SEP = "::"


def _split_pattern(pattern: str) -> tuple[str, str]:
    """Split a template pattern into the literal text before and after the
    single "{e}" slot. Doubled braces escape literal braces; any other brace
    use is rejected."""
    if not pattern:
        raise SchemaError("template pattern is empty")
    parts: list[str] = []
    buf: list[str] = []
    slots = 0
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if ch == "{":
            if pattern.startswith("{{", i):
                buf.append("{")
                i += 2
            elif pattern.startswith("{e}", i):
                slots += 1
                parts.append("".join(buf))
                buf = []
                i += 3
            else:
                raise SchemaError(f"invalid brace in template pattern: {pattern!r}")
        elif ch == "}":
            if pattern.startswith("}}", i):
                buf.append("}")
                i += 2
            else:
                raise SchemaError(f"unbalanced brace in template pattern: {pattern!r}")
        else:
            buf.append(ch)
            i += 1
    parts.append("".join(buf))
    if slots != 1:
        raise SchemaError(
            f"template pattern must contain exactly one {{e}} slot, found {slots}: {pattern!r}"
        )
    return parts[0], parts[1]


@dataclass(frozen=True)
class Template:
    """One question pattern with a single "{e}" entity slot."""

    pattern: str
    variant: str
    _prefix: str = field(init=False, repr=False, compare=False)
    _suffix: str = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise SchemaError(f"unknown template variant: {self.variant!r}")
        prefix, suffix = _split_pattern(self.pattern)
        object.__setattr__(self, "_prefix", prefix)
        object.__setattr__(self, "_suffix", suffix)

    def render(self, entity_text: str) -> str:
        """Replace the slot with entity_text verbatim; no other mutation."""
        if not entity_text:
            raise SchemaError("empty entity text")
        return f"{self._prefix}{entity_text}{self._suffix}"


@dataclass(frozen=True)
class TemplatePair:
    """fwd: argument is the subject entity, answer is the object.
    rev: argument is the object entity, answer is the subject."""

    fwd: Template
    rev: Template


@dataclass(frozen=True)
class RelationDef:
    name: str
    subj_types: frozenset[str]
    obj_types: frozenset[str]
    templates: dict[str, TemplatePair]

    def __post_init__(self):
        if not self.name:
            raise SchemaError("relation name is empty")
        if QID_SEP in self.name:
            raise SchemaError(f"relation name may not contain '{QID_SEP}': {self.name!r}")
        if "{" in self.name or "}" in self.name:
            raise SchemaError(f"relation name may not contain braces: {self.name!r}")
        missing = [v for v in VARIANTS if v not in self.templates]
        if missing:
            raise SchemaError(f"relation {self.name}: missing template variant(s) {missing}")

    @property
    def signed(self) -> bool:
        """True once both type sets are non-empty (schema finalized)."""
        return bool(self.subj_types) and bool(self.obj_types)

    def matches(self, subj_type: str, obj_type: str) -> bool:
        subj_ok = subj_type in self.subj_types or WILDCARD_TYPE in self.subj_types
        obj_ok = obj_type in self.obj_types or WILDCARD_TYPE in self.obj_types
        return subj_ok and obj_ok


@dataclass(frozen=True)
class RelationSchema:
    relations: tuple[RelationDef, ...]
    null_label: str = "no_relation"
    forced_choice: bool = False
    _by_name: dict[str, RelationDef] = field(init=False, repr=False, compare=False)
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.relations:
            raise SchemaError("schema has no relations")
        by_name: dict[str, RelationDef] = {}
        index: dict[str, int] = {}
        for i, rel in enumerate(self.relations):
            if rel.name in by_name:
                raise SchemaError(f"duplicate relation name: {rel.name!r}")
            by_name[rel.name] = rel
            index[rel.name] = i
        if self.null_label in by_name:
            raise SchemaError(f"null label {self.null_label!r} collides with a relation name")
        object.__setattr__(self, "_by_name", by_name)
        object.__setattr__(self, "_index", index)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def get(self, name: str) -> RelationDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"unknown relation: {name!r}") from None

    def index(self, name: str) -> int:
        self.get(name)
        return self._index[name]

    @property
    def finalized(self) -> bool:
        return all(rel.signed for rel in self.relations)

    def require_finalized(self) -> None:
        unsigned = [r.name for r in self.relations if not r.signed]
        if unsigned:
            raise SchemaError(
                "schema not finalized; relations with empty type signature: "
                + ", ".join(unsigned[:5])
                + (" ..." if len(unsigned) > 5 else "")
            )


def _auto_templates(name: str, index: int, variant: str) -> TemplatePair:
    marker = name if variant == "relation" else f"r{index}"
    return TemplatePair(
        fwd=Template(pattern=f"{marker} t {{e}}", variant=variant),
        rev=Template(pattern=f"{marker} h {{e}}", variant=variant),
    )


def _parse_pair(raw: object, variant: str, rel_name: str) -> TemplatePair:
    if not isinstance(raw, dict) or set(raw) - {"fwd", "rev"}:
        raise SchemaError(f"relation {rel_name}: templates.{variant} must map fwd/rev to patterns")
    try:
        fwd, rev = raw["fwd"], raw["rev"]
    except KeyError as e:
        raise SchemaError(f"relation {rel_name}: templates.{variant} missing {e.args[0]}") from None
    if not isinstance(fwd, str) or not isinstance(rev, str):
        raise SchemaError(f"relation {rel_name}: templates.{variant} patterns must be strings")
    return TemplatePair(fwd=Template(fwd, variant), rev=Template(rev, variant))


def parse_schema_dict(doc: dict, auto_generate: bool = True) -> RelationSchema:
    """Validate a schema document. When auto_generate is on, missing
    "relation"/"token" variant templates are generated from the relation
    name and schema index ("{name} t {e}" / "r{i} t {e}"); the "question"
    variant must always be explicit."""
    if not isinstance(doc, dict):
        raise SchemaError("schema: top level must be an object")

    raw_rels = doc.get("relations")
    if raw_rels is None or not isinstance(raw_rels, list):
        raise SchemaError("schema: missing relations array")
    if not raw_rels:
        raise SchemaError("schema has no relations")

    defs: list[RelationDef] = []
    for i, raw in enumerate(raw_rels):
        if not isinstance(raw, dict) or "name" not in raw:
            raise SchemaError(f"schema: relation entry {i} has no name")
        name = raw["name"]
        raw_templates = raw.get("templates", {})
        if not isinstance(raw_templates, dict):
            raise SchemaError(f"relation {name}: templates must be an object")
        templates: dict[str, TemplatePair] = {}
        for variant in VARIANTS:
            if variant in raw_templates:
                templates[variant] = _parse_pair(raw_templates[variant], variant, name)
            elif variant != "question" and auto_generate:
                templates[variant] = _auto_templates(name, i, variant)
            else:
                raise SchemaError(
                    f"relation {name}: missing {variant!r} template variant"
                    + ("" if variant == "question" else " (auto-generation disabled)")
                )
        defs.append(
            RelationDef(
                name=name,
                subj_types=frozenset(raw.get("subj_types", [])),
                obj_types=frozenset(raw.get("obj_types", [])),
                templates=templates,
            )
        )
    return RelationSchema(
        relations=tuple(defs),
        null_label=doc.get("null_label", "no_relation"),
        forced_choice=bool(doc.get("forced_choice", False)),
    )


def load_schema(path: str | Path, auto_generate: bool = True) -> RelationSchema:
    """Load and validate a schema file (see README for the layout)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise SchemaError(f"cannot read schema file {path}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"schema file {path}: parse error at line {e.lineno}: {e.msg}") from e
    try:
        return parse_schema_dict(doc, auto_generate=auto_generate)
    except SchemaError as e:
        raise SchemaError(f"schema file {path}: {e}") from None


def derive_compatibility(
    dataset: Iterable["RcInstance"], schema: RelationSchema
) -> RelationSchema:
    """Fill empty type signatures from the (subj_type, obj_type) pairs
    observed with each relation in the dataset.

    Explicit signatures from the schema file take precedence and are left
    untouched. A relation that ends up with an empty signature (never
    observed, no explicit types) is an error.
    """
    observed_subj: dict[str, set[str]] = {r.name: set() for r in schema.relations}
    observed_obj: dict[str, set[str]] = {r.name: set() for r in schema.relations}
    for rc in dataset:
        if rc.relation == schema.null_label:
            continue
        if rc.relation not in schema:
            raise SchemaError(f"relation {rc.relation!r} in data but absent from schema")
        observed_subj[rc.relation].add(rc.subj_type)
        observed_obj[rc.relation].add(rc.obj_type)

    defs: list[RelationDef] = []
    for rel in schema.relations:
        subj = rel.subj_types or frozenset(observed_subj[rel.name])
        obj = rel.obj_types or frozenset(observed_obj[rel.name])
        if not subj or not obj:
            raise SchemaError(f"relation {rel.name} has empty type signature")
        defs.append(
            RelationDef(name=rel.name, subj_types=subj, obj_types=obj, templates=rel.templates)
        )
    return RelationSchema(
        relations=tuple(defs),
        null_label=schema.null_label,
        forced_choice=schema.forced_choice,
    )


def compatible_relations(
    schema: RelationSchema, subj_type: str, obj_type: str
) -> list[str]:
    """Names of all relations whose signature admits (subj_type, obj_type),
    in schema order. Empty when nothing matches."""
    schema.require_finalized()
    return [r.name for r in schema.relations if r.matches(subj_type, obj_type)]


def instantiate(
    schema: RelationSchema, relation: str, direction: str, variant: str, entity_text: str
) -> str:
    """Render the question text for one (relation, direction, variant)."""
    if direction not in DIRECTIONS:
        raise SchemaError(f"unknown direction: {direction!r}")
    if variant not in VARIANTS:
        raise SchemaError(f"unknown template variant: {variant!r}")
    pair = schema.get(relation).templates[variant]
    template = pair.fwd if direction == "fwd" else pair.rev
    return template.render(entity_text)


def schema_to_dict(schema: RelationSchema) -> dict:
    """JSON-ready representation (used to persist derived signatures)."""
    return {
        "version": 1,
        "null_label": schema.null_label,
        "forced_choice": schema.forced_choice,
        "relations": [
            {
                "name": r.name,
                "subj_types": sorted(r.subj_types),
                "obj_types": sorted(r.obj_types),
                "templates": {
                    variant: {"fwd": pair.fwd.pattern, "rev": pair.rev.pattern}
                    for variant, pair in r.templates.items()
                },
            }
            for r in schema.relations
        ],
    }
