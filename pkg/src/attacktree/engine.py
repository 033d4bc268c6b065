"""Bottom-up risk propagation, audit, dominant scenarios and mitigation what-ifs.

Rules, applied in dependency order over a resolved forest:

* leaf: its recorded triple
* reference: the target's effort and risk
* OR: copy effort and risk from the most attractive feasible child
* AND: componentwise maximum of effort and risk over the non-assumption
  children; infeasible if any of them is infeasible

Gain is intrinsic. An internal node keeps its recorded gain and falls back to
the selected child (OR) or the highest-effort child (AND) only when none was
recorded. Assumption leaves are preconditions and are never scored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .model import (
    AttackNode,
    AttackTreeError,
    Combinator,
    NodeId,
    ResolvedForest,
    RiskTriple,
    UnknownNode,
    locus_of,
)


class UnresolvedForest(AttackTreeError):
    pass


class Infeasible(AttackTreeError):
    def __init__(self, tree: str) -> None:
        self.tree = tree
        super().__init__(f"goal of tree {tree} is infeasible under the current mitigations")


@dataclass(frozen=True)
class NodeValue:
    feasible: bool
    effort: int | None = None
    risk: int | None = None
    gain: int | None = None
    selected: NodeId | None = None  # OR nodes only
    assumption: bool = False

    @property
    def triple(self) -> RiskTriple | None:
        if not self.feasible or self.effort is None:
            return None
        return RiskTriple(self.effort, self.risk, self.gain)

    def sort_key(self, node_id: NodeId) -> tuple:
        return (self.effort, self.risk, -self.gain, node_id.outline)


_ASSUMED = NodeValue(feasible=True, assumption=True)
_DEAD = NodeValue(feasible=False)


@dataclass(frozen=True)
class Evaluation:
    values: Mapping[NodeId, NodeValue]
    mitigated: frozenset[NodeId] = frozenset()

    def __getitem__(self, node_id: NodeId) -> NodeValue:
        return self.values[node_id]

    def root(self, tree_id: str) -> NodeValue:
        return self.values[NodeId(tree_id, ())]


def _scorable(node: AttackNode) -> bool:
    return not (node.is_assumption and node.is_leaf)


def propagate(forest: ResolvedForest) -> Evaluation:
    if not isinstance(forest, ResolvedForest):
        raise UnresolvedForest("propagate needs a ResolvedForest; call resolve_refs first")
    values: dict[NodeId, NodeValue] = {}
    mitigated = forest.mitigated
    for nid in forest.order:
        node = forest.index[nid]
        values[nid] = _evaluate(node, values, nid in mitigated)
    return Evaluation(values, mitigated)


def _evaluate(node: AttackNode, values: dict[NodeId, NodeValue], mitigated: bool) -> NodeValue:
    if not _scorable(node):
        return _ASSUMED
    if mitigated:
        return _DEAD
    recorded = node.recorded

    if node.ref is not None:
        target = values[node.ref]
        if not target.feasible or target.assumption:
            return _DEAD
        gain = recorded.gain if recorded else target.gain
        return NodeValue(True, target.effort, target.risk, gain)

    if node.is_leaf:
        if recorded is None:
            raise UnresolvedForest(f"{node.id}: leaf without a recorded triple")
        return NodeValue(True, recorded.effort, recorded.risk, recorded.gain)

    scored = [(c.id, values[c.id]) for c in node.children if _scorable(c)]
    if node.combinator is Combinator.AND:
        if not scored or not all(v.feasible for _, v in scored):
            return _DEAD
        effort = max(v.effort for _, v in scored)
        risk = max(v.risk for _, v in scored)
        if recorded is not None:
            gain = recorded.gain
        else:
            # highest effort, ties to the lowest outline
            gain = min(scored, key=lambda iv: (-iv[1].effort, iv[0].outline))[1].gain
        return NodeValue(True, effort, risk, gain)

    feasible = [(cid, v) for cid, v in scored if v.feasible]
    if not feasible:
        return _DEAD
    best_id, best = min(feasible, key=lambda iv: iv[1].sort_key(iv[0]))
    gain = recorded.gain if recorded is not None else best.gain
    return NodeValue(True, best.effort, best.risk, gain, selected=best_id)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditFinding:
    node: NodeId
    recorded: RiskTriple
    computed_effort: int
    computed_risk: int

    @property
    def effort_delta(self) -> int:
        return self.recorded.effort - self.computed_effort

    @property
    def risk_delta(self) -> int:
        return self.recorded.risk - self.computed_risk

    def to_dict(self) -> dict:
        return {
            "node": str(self.node),
            "recorded": {"effort": self.recorded.effort, "risk": self.recorded.risk, "gain": self.recorded.gain},
            "computed": {"effort": self.computed_effort, "risk": self.computed_risk},
            "delta": {"effort": self.effort_delta, "risk": self.risk_delta},
        }


def audit(forest: ResolvedForest, evaluation: Evaluation | None = None) -> list[AuditFinding]:
    """List internal and reference nodes whose recorded effort or risk differs
    from the propagated value, sorted by tree then outline."""
    evaluation = evaluation or propagate(forest)
    findings = []
    for nid, node in forest.index.items():
        if node.is_leaf or node.recorded is None:
            continue
        value = evaluation[nid]
        if not value.feasible or value.assumption:
            continue
        if (node.recorded.effort, node.recorded.risk) != (value.effort, value.risk):
            findings.append(AuditFinding(nid, node.recorded, value.effort, value.risk))
    findings.sort(key=lambda f: f.node.sort_key())
    return findings


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """One concrete attack on a tree's goal.

    ``chain`` follows OR selections and references from the root until it
    reaches an AND node or a leaf; its last entry is the dominant attack.
    """

    root: NodeId
    leaves: frozenset[NodeId]
    or_choices: Mapping[NodeId, NodeId]
    summary: RiskTriple
    chain: tuple[NodeId, ...]

    @property
    def dominant(self) -> NodeId:
        return self.chain[-1]

    def passes_through(self, node_id: NodeId) -> bool:
        return node_id in self.chain


def dominant_scenario(
    forest: ResolvedForest, tree: str, evaluation: Evaluation | None = None
) -> Scenario:
    if tree not in forest.forest:
        raise UnknownNode([NodeId(tree, ())])
    evaluation = evaluation or propagate(forest)
    root_id = NodeId(tree, ())
    root_value = evaluation[root_id]
    if not root_value.feasible or root_value.triple is None:
        raise Infeasible(tree)

    leaves: set[NodeId] = set()
    choices: dict[NodeId, NodeId] = {}
    stack = [root_id]
    while stack:
        nid = stack.pop()
        node = forest.index[nid]
        if not _scorable(node):
            continue
        if node.ref is not None:
            stack.append(node.ref)
        elif node.is_leaf:
            leaves.add(nid)
        elif node.combinator is Combinator.AND:
            stack.extend(c.id for c in node.children if _scorable(c))
        else:
            choice = evaluation[nid].selected
            choices[nid] = choice
            stack.append(choice)

    chain = [root_id]
    while True:
        node = forest.index[chain[-1]]
        if node.ref is not None:
            chain.append(node.ref)
        elif node.combinator is Combinator.OR:
            chain.append(evaluation[node.id].selected)
        else:
            break

    summary = RiskTriple(root_value.effort, root_value.risk, root_value.gain)
    return Scenario(root_id, frozenset(leaves), choices, summary, tuple(chain))


def scenario_locus(forest: ResolvedForest, scenario: Scenario) -> str | None:
    """Locus tag nearest the dominant attack, searching up the chain."""
    for nid in reversed(scenario.chain):
        locus = locus_of(forest.index[nid].tags)
        if locus is not None:
            return locus
    return None


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MitigationSet:
    mitigated: frozenset[NodeId] = frozenset()

    def __iter__(self):
        return iter(sorted(self.mitigated, key=NodeId.sort_key))

    def __len__(self) -> int:
        return len(self.mitigated)

    def __or__(self, other: "MitigationSet") -> "MitigationSet":
        return MitigationSet(self.mitigated | other.mitigated)

    @classmethod
    def of(cls, ids: Iterable[NodeId | str]) -> "MitigationSet":
        return cls(frozenset(NodeId.parse(i) if isinstance(i, str) else i for i in ids))

    def restricted_to(self, forest: ResolvedForest) -> "MitigationSet":
        return MitigationSet(frozenset(n for n in self.mitigated if n.tree in forest.forest))


class MitigationSyntaxError(ValueError):
    def __init__(self, line: int, message: str, file: str = "<string>") -> None:
        self.line = line
        self.file = file
        super().__init__(f"{file}:{line}: {message}")


def parse_mitigations(text: str, filename: str = "<string>") -> MitigationSet:
    """One ``tree-id:outline`` per line; ``#`` starts a comment."""
    ids = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            nid = NodeId.parse(line)
        except ValueError as exc:
            raise MitigationSyntaxError(lineno, str(exc), filename) from None
        ids.add(nid)
    return MitigationSet(frozenset(ids))


def load_mitigations(path: str | Path) -> MitigationSet:
    path = Path(path)
    return parse_mitigations(path.read_text(encoding="utf-8"), str(path))


def emit_mitigations(m: MitigationSet) -> str:
    return "".join(f"{nid}\n" for nid in m)


def apply_mitigations(forest: ResolvedForest, m: MitigationSet) -> ResolvedForest:
    """Return ``forest`` with the nodes of ``m`` declared infeasible.

    Mitigations accumulate on top of any already applied.
    """
    missing = sorted((n for n in m.mitigated if n not in forest.index), key=NodeId.sort_key)
    if missing:
        raise UnknownNode(missing)
    return ResolvedForest(forest.forest, forest.index, forest.order, forest.mitigated | m.mitigated)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WhatIfReport:
    tree: str
    mitigations: MitigationSet
    before: Scenario | None
    after: Scenario | None
    before_locus: str | None = None
    after_locus: str | None = None
    titles: Mapping[NodeId, str] = field(default_factory=dict, compare=False)

    @property
    def feasible_after(self) -> bool:
        return self.after is not None

    def to_dict(self) -> dict:
        def side(s: Scenario | None, locus: str | None) -> dict | None:
            if s is None:
                return None
            return {
                "summary": {"effort": s.summary.effort, "risk": s.summary.risk, "gain": s.summary.gain},
                "dominant": str(s.dominant),
                "dominant_title": self.titles.get(s.dominant),
                "chain": [str(n) for n in s.chain],
                "locus": locus,
            }

        return {
            "tree": self.tree,
            "mitigations": [str(n) for n in self.mitigations],
            "before": side(self.before, self.before_locus),
            "after": side(self.after, self.after_locus),
            "feasible_after": self.feasible_after,
        }


def _try_scenario(forest: ResolvedForest, tree: str) -> tuple[Scenario | None, str | None]:
    try:
        s = dominant_scenario(forest, tree)
    except Infeasible:
        return None, None
    return s, scenario_locus(forest, s)


def what_if(forest: ResolvedForest, tree: str, m: MitigationSet) -> WhatIfReport:
    if tree not in forest.forest:
        raise UnknownNode([NodeId(tree, ())])
    mitigated = apply_mitigations(forest, m)
    before, before_locus = _try_scenario(forest, tree)
    after, after_locus = _try_scenario(mitigated, tree)
    titles = {}
    for s in (before, after):
        if s is not None:
            titles[s.dominant] = forest.index[s.dominant].title
    return WhatIfReport(tree, m, before, after, before_locus, after_locus, titles)
