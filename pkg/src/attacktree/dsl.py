"""Outline DSL (``.atk``) and canonical JSON (``.atk.json``) for attack forests.

Outline grammar, one construct per line::

    # comment
    tree: C.7.1
    title: Modification of the Certificate Signing Keys
    asset: certificate-signing-keys
    property: integrity
    goal: Modification of the Certificate Signing Keys [8/2/6]
    1. Exploit the signing server ... [8/2/6] AND
    2. Access the serial connection [6/2/8] -> C.7.2:1.2
    2.1. Some precondition @assumption,locus(environment)

Depth comes from the outline number, indentation is ignored. A parent is AND
when every child but the last carries the ``AND`` marker and OR when none do.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .model import (
    AttackNode,
    AttackTree,
    Combinator,
    Forest,
    NodeId,
    OutOfScale,
    ProtectionProperty,
    RiskTriple,
    SourceSpan,
    check_tag,
    format_outline,
    make_triple,
)

CANONICAL_VERSION = 1
HEADERS = ("tree", "title", "asset", "property", "goal")

_NODE_LINE = re.compile(r"^(\s*)(\d+(?:\.\d+)*)\.(?=\s|$)")
_HEADER_LINE = re.compile(r"^(\s*)([A-Za-z][\w.-]*)\s*:(.*)$")
_TAGS_TAIL = re.compile(r"\s@(\S+)\s*$")
_REF_TAIL = re.compile(r"\s->\s*(\S*)\s*$")
_AND_TAIL = re.compile(r"\sAND\s*$")
_TRIPLE_TAIL = re.compile(r"\s\[([^\[\]]*)\]\s*$")
_REF_TARGET = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*:(?:[1-9]\d*(?:\.[1-9]\d*)*)?$")


class ErrorKind(str, Enum):
    BAD_OUTLINE_NUMBER = "BadOutlineNumber"
    BAD_TRIPLE = "BadTriple"
    MIXED_AND_MARKING = "MixedAndMarking"
    UNKNOWN_HEADER = "UnknownHeader"
    BAD_REF = "BadRef"

    @property
    def code(self) -> str:
        return _CODES[self]


_CODES = {
    ErrorKind.BAD_OUTLINE_NUMBER: "ATK101",
    ErrorKind.BAD_TRIPLE: "ATK102",
    ErrorKind.MIXED_AND_MARKING: "ATK103",
    ErrorKind.UNKNOWN_HEADER: "ATK104",
    ErrorKind.BAD_REF: "ATK105",
}


class ParseError(Exception):
    def __init__(self, kind: ErrorKind, message: str, span: SourceSpan) -> None:
        self.kind = kind
        self.message = message
        self.span = span
        super().__init__(f"{span}: {kind.code} {kind.value}: {message}")


class SchemaError(ValueError):
    """Canonical document does not match the schema; ``path`` locates the problem."""

    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}")


# ---------------------------------------------------------------------------
# outline DSL


@dataclass
class _Tail:
    title: str
    recorded: RiskTriple | None = None
    and_marked: bool = False
    ref: NodeId | None = None
    tags: frozenset[str] = frozenset()
    and_col: int | None = None


@dataclass
class _Draft:
    id: NodeId
    tail: _Tail
    span: SourceSpan
    children: list["_Draft"] = field(default_factory=list)


@dataclass
class _TreeDraft:
    id: str
    span: SourceSpan
    headers: dict[str, tuple[str, SourceSpan]] = field(default_factory=dict)
    root: _Draft | None = None
    nodes: dict[tuple[int, ...], _Draft] = field(default_factory=dict)


class _LineParser:
    def __init__(self, raw: str, lineno: int, filename: str) -> None:
        self.raw = raw
        self.lineno = lineno
        self.filename = filename

    def span(self, column: int = 1) -> SourceSpan:
        return SourceSpan(self.filename, self.lineno, column)

    def fail(self, kind: ErrorKind, message: str, token: str | None = None) -> ParseError:
        col = 1
        if token:
            pos = self.raw.find(token)
            col = pos + 1 if pos >= 0 else 1
        return ParseError(kind, message, self.span(col))

    def tail(self, text: str) -> _Tail:
        """Split ``title [E/R/G]? AND? (-> ref)? (@tags)?`` from the right."""
        body = " " + text
        tags: frozenset[str] = frozenset()
        m = _TAGS_TAIL.search(body)
        if m:
            items = m.group(1).split(",")
            try:
                tags = frozenset(check_tag(t) for t in items)
            except ValueError as exc:
                raise self.fail(ErrorKind.UNKNOWN_HEADER, f"bad tag list: {exc}", "@" + m.group(1))
            body = body[: m.start()]
        ref = None
        m = _REF_TAIL.search(body)
        if m:
            target = m.group(1)
            if not _REF_TARGET.match(target):
                raise self.fail(ErrorKind.BAD_REF, f"malformed reference {target!r}, expected tree:outline", "->")
            ref = NodeId.parse(target)
            body = body[: m.start()]
        and_marked = False
        m = _AND_TAIL.search(body)
        if m:
            and_marked = True
            body = body[: m.start()]
        recorded = None
        m = _TRIPLE_TAIL.search(body)
        if m:
            try:
                recorded = _strict_triple(m.group(1))
            except OutOfScale as exc:
                raise self.fail(ErrorKind.BAD_TRIPLE, str(exc), "[" + m.group(1) + "]")
            body = body[: m.start()]
        elif body.rstrip().endswith("]") and "[" in body:
            bracket = body[body.rindex("[") :].strip()
            raise self.fail(ErrorKind.BAD_TRIPLE, f"malformed triple {bracket!r}", bracket)
        title = body.strip()
        and_col = self.raw.rfind(" AND") + 2 if and_marked else None
        return _Tail(title, recorded, and_marked, ref, tags, and_col)


def _strict_triple(text: str) -> RiskTriple:
    parts = [p.strip() for p in text.split("/")]
    if len(parts) != 3 or not all(re.fullmatch(r"\d+", p) for p in parts):
        raise OutOfScale(f"malformed triple [{text}], expected [effort/risk/gain]")
    return make_triple(*(int(p) for p in parts))


def parse_outline(text: str, filename: str = "<string>") -> Forest:
    """Parse an outline document into a :class:`Forest`.

    Raises :class:`ParseError` at the first problem found.
    """
    drafts: list[_TreeDraft] = []
    current: _TreeDraft | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        lp = _LineParser(raw, lineno, filename)
        indent = len(raw) - len(raw.lstrip())

        node_m = _NODE_LINE.match(raw)
        if node_m:
            if current is None or current.root is None:
                raise lp.fail(ErrorKind.UNKNOWN_HEADER, "node line before any goal line", node_m.group(2))
            _add_node(current, lp, node_m)
            continue
        if stripped[0].isdigit():
            token = stripped.split()[0]
            raise lp.fail(ErrorKind.BAD_OUTLINE_NUMBER, f"malformed outline number {token!r}", token)

        head_m = _HEADER_LINE.match(raw)
        if not head_m:
            token = stripped.split()[0]
            raise lp.fail(ErrorKind.UNKNOWN_HEADER, f"unrecognised line starting {token!r}", token)
        name, value = head_m.group(2), head_m.group(3).strip()
        if name not in HEADERS:
            raise lp.fail(ErrorKind.UNKNOWN_HEADER, f"unknown header {name!r}", name)

        if name == "tree":
            if not re.fullmatch(r"[A-Za-z0-9][A-Za-z0-9._-]*", value):
                raise lp.fail(ErrorKind.UNKNOWN_HEADER, f"malformed tree id {value!r}", "tree")
            if any(d.id == value for d in drafts):
                raise lp.fail(ErrorKind.UNKNOWN_HEADER, f"duplicate tree id {value!r}", value)
            current = _TreeDraft(value, lp.span(indent + 1))
            drafts.append(current)
            continue
        if current is None:
            raise lp.fail(ErrorKind.UNKNOWN_HEADER, f"{name!r} header before any 'tree:' header", name)
        if name in current.headers or (name == "goal" and current.root is not None):
            raise lp.fail(ErrorKind.UNKNOWN_HEADER, f"repeated {name!r} header in tree {current.id}", name)
        if current.root is not None:
            raise lp.fail(ErrorKind.UNKNOWN_HEADER, f"{name!r} header after the goal line", name)
        if name == "property":
            try:
                ProtectionProperty(value)
            except ValueError:
                raise lp.fail(
                    ErrorKind.UNKNOWN_HEADER,
                    f"unknown protection property {value!r}", value or name,
                ) from None
        if name == "goal":
            offset = raw.index(":") + 1
            tail = lp.tail(raw[offset:])
            if tail.and_marked:
                raise lp.fail(ErrorKind.MIXED_AND_MARKING, "the root goal has no siblings to AND with", "AND")
            current.root = _Draft(NodeId(current.id, ()), tail, lp.span(indent + 1))
            current.nodes[()] = current.root
            continue
        current.headers[name] = (value, lp.span(indent + 1))

    return Forest.of(_finish(d, filename) for d in drafts)


def _add_node(tree: _TreeDraft, lp: _LineParser, m: re.Match) -> None:
    number = m.group(2)
    outline = tuple(int(s) for s in number.split("."))
    if any(s == 0 for s in outline):
        raise lp.fail(ErrorKind.BAD_OUTLINE_NUMBER, f"outline segments start at 1: {number}", number)
    if outline in tree.nodes:
        raise lp.fail(ErrorKind.BAD_OUTLINE_NUMBER, f"duplicate outline number {number}", number)
    parent = tree.nodes.get(outline[:-1])
    if parent is None:
        raise lp.fail(
            ErrorKind.BAD_OUTLINE_NUMBER,
            f"{number} appears before its parent {format_outline(outline[:-1])}", number,
        )
    if outline[-1] != len(parent.children) + 1:
        raise lp.fail(
            ErrorKind.BAD_OUTLINE_NUMBER,
            f"expected item {len(parent.children) + 1} under "
            f"{format_outline(outline[:-1]) or 'the goal'}, got {number}",
            number,
        )
    offset = m.end()
    tail = lp.tail(lp.raw[offset:])
    draft = _Draft(NodeId(tree.id, outline), tail, lp.span(len(m.group(1)) + 1))
    parent.children.append(draft)
    tree.nodes[outline] = draft


def _finish(tree: _TreeDraft, filename: str) -> AttackTree:
    for name in ("title", "asset", "property"):
        if name not in tree.headers:
            raise ParseError(ErrorKind.UNKNOWN_HEADER, f"tree {tree.id} lacks a '{name}:' header", tree.span)
    if tree.root is None:
        raise ParseError(ErrorKind.UNKNOWN_HEADER, f"tree {tree.id} lacks a 'goal:' line", tree.span)
    return AttackTree(
        id=tree.id,
        title=tree.headers["title"][0],
        asset=tree.headers["asset"][0],
        property=ProtectionProperty(tree.headers["property"][0]),
        root=_build(tree.root),
    )


def _build(draft: _Draft) -> AttackNode:
    children = draft.children
    combinator = Combinator.LEAF
    if children:
        marks = [c.tail.and_marked for c in children]
        if not any(marks):
            combinator = Combinator.OR
        elif all(marks[:-1]) and not marks[-1]:
            combinator = Combinator.AND
        else:
            # point at a line that carries the marker
            culprit = next(c for c in children if c.tail.and_marked)
            if marks[-1]:
                culprit = children[-1]
            span = SourceSpan(culprit.span.file, culprit.span.line, culprit.tail.and_col or 1)
            raise ParseError(
                ErrorKind.MIXED_AND_MARKING,
                f"children of {draft.id} must mark AND on every child but the last, or on none",
                span,
            )
    if children and draft.tail.ref is not None:
        raise ParseError(
            ErrorKind.BAD_REF, f"{draft.id} has both a reference and child items", draft.span
        )
    return AttackNode(
        id=draft.id,
        title=draft.tail.title,
        children=tuple(_build(c) for c in children),
        recorded=draft.tail.recorded,
        ref=draft.tail.ref,
        tags=draft.tail.tags,
        combinator=combinator,
        span=draft.span,
    )


def parse_outline_file(path: str | Path) -> Forest:
    path = Path(path)
    return parse_outline(path.read_text(encoding="utf-8"), str(path))


def emit_outline(forest: Forest) -> str:
    """Render ``forest`` in outline syntax; parsing the result gives it back."""
    chunks = []
    for tree in forest:
        lines = [
            f"tree: {tree.id}",
            f"title: {_one_line(tree.title)}",
            f"asset: {tree.asset}",
            f"property: {tree.property.value}",
            "goal: " + _node_tail(tree.root, and_marked=False),
        ]
        _emit_children(tree.root, lines)
        chunks.append("\n".join(lines) + "\n")
    return "\n".join(chunks)


def _emit_children(node: AttackNode, lines: list[str]) -> None:
    last = len(node.children) - 1
    for i, child in enumerate(node.children):
        marked = node.combinator is Combinator.AND and i < last
        indent = "  " * (len(child.id.outline) - 1)
        lines.append(f"{indent}{format_outline(child.id.outline)}. " + _node_tail(child, marked))
        _emit_children(child, lines)


def _node_tail(node: AttackNode, and_marked: bool) -> str:
    title = _one_line(node.title)
    probe = _LineParser(title, 0, "<emit>").tail(title) if title else _Tail("")
    if probe.title != title or probe.recorded or probe.ref or probe.tags or probe.and_marked:
        raise ValueError(f"{node.id}: title {title!r} would be misread by the parser")
    parts = [title]
    if node.recorded is not None:
        parts.append(f"[{node.recorded}]")
    if and_marked:
        parts.append("AND")
    if node.ref is not None:
        parts.append(f"-> {node.ref}")
    if node.tags:
        parts.append("@" + ",".join(sorted(node.tags)))
    return " ".join(parts)


def _one_line(text: str) -> str:
    return " ".join(text.split())


# ---------------------------------------------------------------------------
# canonical JSON


def forest_to_dict(forest: Forest) -> dict:
    return {"version": CANONICAL_VERSION, "trees": [_tree_to_dict(t) for t in forest]}


def _tree_to_dict(tree: AttackTree) -> dict:
    return {
        "id": tree.id,
        "title": tree.title,
        "asset": tree.asset,
        "property": tree.property.value,
        "root": _node_to_dict(tree.root),
    }


def _node_to_dict(node: AttackNode) -> dict:
    d: dict = {
        "outline": format_outline(node.id.outline),
        "title": node.title,
        "combinator": node.combinator.value,
    }
    if node.recorded is not None:
        r = node.recorded
        d["recorded"] = {"effort": r.effort, "risk": r.risk, "gain": r.gain}
    if node.ref is not None:
        d["ref"] = str(node.ref)
    d["tags"] = sorted(node.tags)
    d["children"] = [_node_to_dict(c) for c in node.children]
    return d


def emit_canonical(forest: Forest) -> str:
    return json.dumps(forest_to_dict(forest), indent=2, ensure_ascii=False) + "\n"


def parse_canonical(text: str) -> Forest:
    """Parse canonical JSON; raises :class:`SchemaError` naming the offending path."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return forest_from_dict(doc)


def forest_from_dict(doc) -> Forest:
    _expect(doc, dict, "$")
    if doc.get("version") != CANONICAL_VERSION:
        raise SchemaError("$.version", f"unsupported version {doc.get('version')!r}")
    trees = _expect(doc.get("trees"), list, "$.trees")
    out: dict[str, AttackTree] = {}
    for i, t in enumerate(trees):
        path = f"$.trees[{i}]"
        _expect(t, dict, path)
        tree_id = _string(t, "id", path)
        if tree_id in out:
            raise SchemaError(f"{path}.id", f"duplicate tree id {tree_id!r}")
        try:
            prop = ProtectionProperty(_string(t, "property", path))
        except ValueError:
            raise SchemaError(f"{path}.property", f"unknown protection property {t['property']!r}") from None
        root = _node_from_dict(_expect(t.get("root"), dict, f"{path}.root"), tree_id, f"{path}.root")
        out[tree_id] = AttackTree(tree_id, _string(t, "title", path), _string(t, "asset", path), prop, root)
    return Forest(out)


def _node_from_dict(d: dict, tree_id: str, path: str) -> AttackNode:
    outline_text = _string(d, "outline", path)
    try:
        outline = tuple(int(s) for s in outline_text.split(".")) if outline_text else ()
        if any(s <= 0 for s in outline):
            raise ValueError
    except ValueError:
        raise SchemaError(f"{path}.outline", f"malformed outline {outline_text!r}") from None
    try:
        combinator = Combinator(d.get("combinator"))
    except ValueError:
        raise SchemaError(f"{path}.combinator", f"unknown combinator {d.get('combinator')!r}") from None
    recorded = None
    if "recorded" in d:
        r = _expect(d["recorded"], dict, f"{path}.recorded")
        try:
            recorded = make_triple(r.get("effort"), r.get("risk"), r.get("gain"))
        except OutOfScale as exc:
            raise SchemaError(f"{path}.recorded", str(exc)) from None
    ref = None
    if "ref" in d:
        target = d["ref"]
        if not isinstance(target, str) or not _REF_TARGET.match(target):
            raise SchemaError(f"{path}.ref", f"malformed reference {target!r}")
        ref = NodeId.parse(target)
    tags = _expect(d.get("tags", []), list, f"{path}.tags")
    for j, tag in enumerate(tags):
        try:
            check_tag(tag if isinstance(tag, str) else "")
        except ValueError as exc:
            raise SchemaError(f"{path}.tags[{j}]", str(exc)) from None
    raw_children = _expect(d.get("children", []), list, f"{path}.children")
    children = tuple(
        _node_from_dict(_expect(c, dict, f"{path}.children[{j}]"), tree_id, f"{path}.children[{j}]")
        for j, c in enumerate(raw_children)
    )
    if (combinator is Combinator.LEAF) != (not children):
        raise SchemaError(f"{path}.combinator", f"{combinator.value} does not fit {len(children)} children")
    return AttackNode(
        id=NodeId(tree_id, outline),
        title=_string(d, "title", path),
        children=children,
        recorded=recorded,
        ref=ref,
        tags=frozenset(tags),
        combinator=combinator,
    )


def _expect(value, typ, path: str):
    if not isinstance(value, typ):
        raise SchemaError(path, f"expected {typ.__name__}, got {type(value).__name__}")
    return value


def _string(d: dict, key: str, path: str) -> str:
    return _expect(d.get(key), str, f"{path}.{key}")


# ---------------------------------------------------------------------------


def load_forest(path: str | Path) -> Forest:
    """Load a forest from ``.atk`` or ``.atk.json`` by file extension."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.name.endswith(".json"):
        return parse_canonical(text)
    return parse_outline(text, str(path))
