"""Domain types for annotated attack trees and structural validation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping

SCALE_MIN = 1
SCALE_MAX = 9
LOCI = ("system", "user", "environment")

ASSUMPTION = "assumption"
UNVERIFIED = "unverified"

_TREE_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_FREEFORM_TAG = re.compile(r"^[A-Za-z][A-Za-z0-9_.-]*$")
_LOCUS_TAG = re.compile(r"^locus\((.*)\)$")


class AttackTreeError(Exception):
    """Base class for domain errors."""


class OutOfScale(AttackTreeError, ValueError):
    pass


class DanglingRef(AttackTreeError):
    def __init__(self, source: "NodeId", target: "NodeId") -> None:
        self.source = source
        self.target = target
        super().__init__(f"{source}: reference to missing node {target}")


class CyclicRef(AttackTreeError):
    def __init__(self, cycle: list["NodeId"]) -> None:
        self.cycle = cycle
        super().__init__("reference cycle: " + " -> ".join(str(n) for n in cycle))


class UnknownNode(AttackTreeError, KeyError):
    def __init__(self, ids: list["NodeId"]) -> None:
        self.ids = ids
        super().__init__("unknown node(s): " + ", ".join(str(n) for n in ids))

    def __str__(self) -> str:
        return self.args[0]


class ProtectionProperty(str, Enum):
    INTEGRITY = "integrity"
    CONFIDENTIALITY = "confidentiality"
    AVAILABILITY = "availability"

    @property
    def rank(self) -> int:
        return _PROPERTY_ORDER.index(self)


_PROPERTY_ORDER = list(ProtectionProperty)


class Combinator(str, Enum):
    OR = "OR"
    AND = "AND"
    LEAF = "LEAF"


@dataclass(frozen=True)
class RiskTriple:
    """Effort, risk to the attacker and gain, each scored 1 (low) to 9 (high).

    Construct through :func:`make_triple` to get scale checking; the bare
    constructor does not validate so that :func:`validate` can report bad
    values in hand-built forests.
    """

    effort: int
    risk: int
    gain: int

    def __str__(self) -> str:
        return f"{self.effort}/{self.risk}/{self.gain}"

    def attractiveness_key(self) -> tuple[int, int, int]:
        return (self.effort, self.risk, -self.gain)

    def in_scale(self) -> bool:
        return all(
            type(v) is int and SCALE_MIN <= v <= SCALE_MAX
            for v in (self.effort, self.risk, self.gain)
        )


def make_triple(effort: int, risk: int, gain: int) -> RiskTriple:
    for name, value in (("effort", effort), ("risk", risk), ("gain", gain)):
        if isinstance(value, bool) or not isinstance(value, int):
            raise OutOfScale(f"{name} must be an integer, got {value!r}")
        if not SCALE_MIN <= value <= SCALE_MAX:
            raise OutOfScale(f"{name} {value} outside [{SCALE_MIN}, {SCALE_MAX}]")
    return RiskTriple(effort, risk, gain)


def parse_triple(text: str) -> RiskTriple:
    """Parse ``E/R/G``."""
    parts = text.strip().split("/")
    if len(parts) != 3 or not all(p.strip().isdigit() for p in parts):
        raise OutOfScale(f"malformed triple {text!r}, expected effort/risk/gain")
    return make_triple(*(int(p) for p in parts))


def attractiveness_less(a: RiskTriple, b: RiskTriple) -> bool:
    """True if ``a`` is strictly more attractive to an attacker than ``b``.

    Lower effort wins first, then lower risk, then higher gain.
    """
    return a.attractiveness_key() < b.attractiveness_key()


@dataclass(frozen=True, order=True)
class NodeId:
    tree: str
    outline: tuple[int, ...] = ()

    def __str__(self) -> str:
        return f"{self.tree}:{format_outline(self.outline)}"

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        """Parse ``tree:outline``; an empty outline names the root."""
        tree, sep, outline = text.strip().partition(":")
        if not sep or not _TREE_ID.match(tree):
            raise ValueError(f"malformed node reference {text!r}, expected tree:outline")
        return cls(tree, parse_outline_number(outline))

    def child(self, number: int) -> "NodeId":
        return NodeId(self.tree, self.outline + (number,))

    @property
    def parent(self) -> "NodeId | None":
        if not self.outline:
            return None
        return NodeId(self.tree, self.outline[:-1])

    def is_within(self, other: "NodeId") -> bool:
        """True if this node is ``other`` or lies in its subtree."""
        return self.tree == other.tree and self.outline[: len(other.outline)] == other.outline

    def sort_key(self) -> tuple:
        return (tree_sort_key(self.tree), self.outline)


def format_outline(outline: tuple[int, ...]) -> str:
    return ".".join(str(n) for n in outline)


def parse_outline_number(text: str) -> tuple[int, ...]:
    text = text.strip().rstrip(".")
    if not text:
        return ()
    segments = text.split(".")
    if not all(s.isdigit() and int(s) > 0 for s in segments):
        raise ValueError(f"malformed outline number {text!r}")
    return tuple(int(s) for s in segments)


def tree_sort_key(tree_id: str) -> tuple:
    # C.2.10 sorts after C.2.9
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in tree_id.split("."))


def check_tag(tag: str) -> str:
    """Return ``tag`` if well formed, else raise ValueError."""
    m = _LOCUS_TAG.match(tag)
    if m:
        if m.group(1) not in LOCI:
            raise ValueError(f"locus must be one of {', '.join(LOCI)}, got {m.group(1)!r}")
        return tag
    if tag.startswith("locus"):
        raise ValueError(f"malformed locus tag {tag!r}")
    if not _FREEFORM_TAG.match(tag):
        raise ValueError(f"malformed tag {tag!r}")
    return tag


def locus_of(tags: frozenset[str]) -> str | None:
    for tag in tags:
        m = _LOCUS_TAG.match(tag)
        if m:
            return m.group(1)
    return None


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int  # 1-based
    column: int = 1  # 1-based

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


@dataclass(frozen=True)
class AttackNode:
    id: NodeId
    title: str
    children: tuple["AttackNode", ...] = ()
    recorded: RiskTriple | None = None
    ref: NodeId | None = None
    tags: frozenset[str] = frozenset()
    combinator: Combinator | None = None
    span: SourceSpan | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.combinator is None:
            object.__setattr__(
                self, "combinator", Combinator.OR if self.children else Combinator.LEAF
            )
        if not isinstance(self.tags, frozenset):
            object.__setattr__(self, "tags", frozenset(self.tags))
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))

    @property
    def is_assumption(self) -> bool:
        return ASSUMPTION in self.tags

    @property
    def is_leaf(self) -> bool:
        return not self.children and self.ref is None

    @property
    def locus(self) -> str | None:
        return locus_of(self.tags)

    def walk(self) -> Iterator["AttackNode"]:
        """Pre-order traversal of this subtree (refs are not followed)."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass(frozen=True)
class AttackTree:
    id: str
    title: str
    asset: str
    property: ProtectionProperty
    root: AttackNode

    @property
    def goal_key(self) -> tuple[str, ProtectionProperty]:
        return (self.asset, self.property)


@dataclass(frozen=True)
class Forest:
    trees: Mapping[str, AttackTree] = field(default_factory=dict)

    @classmethod
    def of(cls, trees) -> "Forest":
        return cls({t.id: t for t in trees})

    def __iter__(self) -> Iterator[AttackTree]:
        return iter(self.trees.values())

    def __len__(self) -> int:
        return len(self.trees)

    def __contains__(self, tree_id: object) -> bool:
        return tree_id in self.trees

    def __getitem__(self, tree_id: str) -> AttackTree:
        return self.trees[tree_id]

    def nodes(self) -> Iterator[AttackNode]:
        for tree in self.trees.values():
            yield from tree.root.walk()


@dataclass(frozen=True)
class ResolvedForest:
    """A forest whose references are bound, plus a hypothetical mitigation set.

    ``order`` lists every node so that each one comes after its children and
    after its reference target; propagation walks it front to back.
    """

    forest: Forest
    index: Mapping[NodeId, AttackNode]
    order: tuple[NodeId, ...]
    mitigated: frozenset[NodeId] = frozenset()

    def node(self, node_id: NodeId) -> AttackNode:
        return self.index[node_id]

    def __contains__(self, node_id: object) -> bool:
        return node_id in self.index


def _index(forest: Forest) -> dict[NodeId, AttackNode]:
    index: dict[NodeId, AttackNode] = {}
    for node in forest.nodes():
        index.setdefault(node.id, node)
    return index


def resolve_refs(forest: Forest) -> ResolvedForest:
    """Bind every cross-reference and order nodes for bottom-up evaluation.

    Raises DanglingRef for a missing target and CyclicRef, carrying the
    cycle, when a node depends on itself through children and references.
    """
    index = _index(forest)
    for node in index.values():
        if node.ref is not None and node.ref not in index:
            raise DanglingRef(node.id, node.ref)

    def deps(node: AttackNode) -> list[NodeId]:
        out = [c.id for c in node.children]
        if node.ref is not None:
            out.append(node.ref)
        return out

    # iterative three-colour DFS; post-order gives the evaluation order
    WHITE, GREY, BLACK = 0, 1, 2
    colour = dict.fromkeys(index, WHITE)
    order: list[NodeId] = []
    for start in index:
        if colour[start] != WHITE:
            continue
        path = [start]
        stack = [iter(deps(index[start]))]
        colour[start] = GREY
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                done = path.pop()
                colour[done] = BLACK
                order.append(done)
            elif colour[nxt] == GREY:
                cycle = path[path.index(nxt):] + [nxt]
                raise CyclicRef(cycle)
            elif colour[nxt] == WHITE:
                colour[nxt] = GREY
                path.append(nxt)
                stack.append(iter(deps(index[nxt])))
    return ResolvedForest(forest, index, tuple(order))


class ViolationKind(str, Enum):
    OUT_OF_SCALE = "OutOfScale"
    UNANNOTATED_LEAF = "UnannotatedLeaf"
    OUTLINE_GAP = "OutlineGap"
    DUPLICATE_NODE_ID = "DuplicateNodeId"
    MIXED_AND_MARKING = "MixedAndMarking"
    COMBINATOR_MISMATCH = "CombinatorMismatch"
    REF_WITH_CHILDREN = "RefWithChildren"
    DANGLING_REF = "DanglingRef"
    CYCLIC_REF = "CyclicRef"
    BAD_TAG = "BadTag"
    NO_SCORABLE_CHILD = "NoScorableChild"
    DUPLICATE_GOAL_KEY = "DuplicateGoalKey"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    node: NodeId | None
    message: str

    def __str__(self) -> str:
        where = f"{self.node}: " if self.node is not None else ""
        return f"{where}{self.kind.value}: {self.message}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "node": str(self.node) if self.node is not None else None,
            "message": self.message,
        }


def validate(forest: Forest) -> list[Violation]:
    """Return every structural problem in ``forest``; never raises."""
    out: list[Violation] = []
    seen: set[NodeId] = set()
    keys: dict[tuple, str] = {}

    for tree in forest:
        key = tree.goal_key
        if key in keys:
            out.append(Violation(
                ViolationKind.DUPLICATE_GOAL_KEY, tree.root.id,
                f"goal ({tree.asset}, {tree.property.value}) already covered by tree {keys[key]}",
            ))
        else:
            keys[key] = tree.id
        if tree.root.id != NodeId(tree.id, ()):
            out.append(Violation(
                ViolationKind.OUTLINE_GAP, tree.root.id,
                f"root of tree {tree.id} must have the empty outline",
            ))
        _validate_node(tree.root, NodeId(tree.id, ()), seen, out)

    index = _index(forest)
    for node in forest.nodes():
        if node.ref is not None and node.ref not in index:
            out.append(Violation(
                ViolationKind.DANGLING_REF, node.id, f"reference to missing node {node.ref}"
            ))
    if not any(v.kind is ViolationKind.DANGLING_REF for v in out):
        try:
            resolve_refs(forest)
        except CyclicRef as exc:
            out.append(Violation(ViolationKind.CYCLIC_REF, exc.cycle[0], str(exc)))
    return out


def _validate_node(node: AttackNode, expected: NodeId, seen: set[NodeId], out: list[Violation]) -> None:
    nid = node.id
    if nid in seen:
        out.append(Violation(ViolationKind.DUPLICATE_NODE_ID, nid, "node id used twice"))
    seen.add(nid)
    if nid.outline and nid != expected:
        out.append(Violation(
            ViolationKind.OUTLINE_GAP, nid, f"expected outline {format_outline(expected.outline)}"
        ))

    if node.recorded is not None and not node.recorded.in_scale():
        out.append(Violation(
            ViolationKind.OUT_OF_SCALE, nid, f"triple {node.recorded} outside [1, 9]"
        ))
    for tag in sorted(node.tags):
        try:
            check_tag(tag)
        except ValueError as exc:
            out.append(Violation(ViolationKind.BAD_TAG, nid, str(exc)))

    expected_comb = Combinator.LEAF if not node.children else None
    if expected_comb is Combinator.LEAF and node.combinator is not Combinator.LEAF:
        out.append(Violation(
            ViolationKind.COMBINATOR_MISMATCH, nid, f"{node.combinator.value} node without children"
        ))
    if node.children and node.combinator is Combinator.LEAF:
        out.append(Violation(ViolationKind.COMBINATOR_MISMATCH, nid, "LEAF node with children"))
    if node.combinator is Combinator.AND and len(node.children) < 2:
        out.append(Violation(
            ViolationKind.MIXED_AND_MARKING, nid, "AND node needs at least two children"
        ))
    if node.children and node.ref is not None:
        out.append(Violation(ViolationKind.REF_WITH_CHILDREN, nid, "node has both children and a reference"))
    if node.is_leaf and node.recorded is None and not node.is_assumption:
        out.append(Violation(
            ViolationKind.UNANNOTATED_LEAF, nid, "leaf has neither a triple nor the assumption tag"
        ))
    if node.children and all(c.is_assumption and c.is_leaf for c in node.children):
        out.append(Violation(
            ViolationKind.NO_SCORABLE_CHILD, nid, "every child is an assumption"
        ))

    for i, child in enumerate(node.children, start=1):
        _validate_node(child, nid.child(i), seen, out)
