"""Goal-by-goal comparison of two designs' attack forests."""

from __future__ import annotations

from dataclasses import dataclass

from .assets import GoalKey, goal_sort_key
from .engine import (
    Infeasible,
    MitigationSet,
    apply_mitigations,
    dominant_scenario,
    propagate,
    scenario_locus,
)
from .model import AttackTreeError, Forest, NodeId, ResolvedForest, RiskTriple, UnknownNode, resolve_refs

DEFAULT_THRESHOLD = 1


class DuplicateGoalKey(AttackTreeError):
    def __init__(self, key: GoalKey, trees: list[str]) -> None:
        self.key = key
        self.trees = trees
        super().__init__(f"goal ({key[0]}, {key[1].value}) covered by several trees: {', '.join(trees)}")


@dataclass(frozen=True)
class GoalMatch:
    pairs: tuple[tuple[GoalKey, str, str], ...]
    only_a: tuple[tuple[GoalKey, str], ...]
    only_b: tuple[tuple[GoalKey, str], ...]


def _keys(forest: Forest) -> dict[GoalKey, str]:
    out: dict[GoalKey, str] = {}
    for tree in forest:
        if tree.goal_key in out:
            raise DuplicateGoalKey(tree.goal_key, [out[tree.goal_key], tree.id])
        out[tree.goal_key] = tree.id
    return out


def match_goals(a: Forest, b: Forest) -> GoalMatch:
    ka, kb = _keys(a), _keys(b)
    pairs = tuple((k, ka[k], kb[k]) for k in sorted(ka.keys() & kb.keys(), key=goal_sort_key))
    only_a = tuple((k, ka[k]) for k in sorted(ka.keys() - kb.keys(), key=goal_sort_key))
    only_b = tuple((k, kb[k]) for k in sorted(kb.keys() - ka.keys(), key=goal_sort_key))
    return GoalMatch(pairs, only_a, only_b)


@dataclass(frozen=True)
class Side:
    tree: str
    summary: RiskTriple | None  # None when infeasible
    dominant: NodeId | None = None
    dominant_title: str | None = None
    locus: str | None = None


@dataclass(frozen=True)
class ComparisonRow:
    key: GoalKey
    a: Side
    b: Side
    delta_effort: int | None
    delta_risk: int | None
    delta_gain: int | None
    significant: bool


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]
    only_a: tuple[tuple[GoalKey, str], ...]
    only_b: tuple[tuple[GoalKey, str], ...]
    mitigations: MitigationSet
    threshold: int

    def row(self, asset: str, prop) -> ComparisonRow:
        for r in self.rows:
            if r.key[0] == asset and r.key[1] == prop:
                return r
        raise KeyError((asset, prop))

    @property
    def any_significant(self) -> bool:
        return any(r.significant for r in self.rows)

    def to_dict(self) -> dict:
        def side(s: Side) -> dict:
            return {
                "tree": s.tree,
                "summary": None if s.summary is None else
                {"effort": s.summary.effort, "risk": s.summary.risk, "gain": s.summary.gain},
                "dominant": None if s.dominant is None else str(s.dominant),
                "dominant_title": s.dominant_title,
                "locus": s.locus,
            }

        def unmatched(items):
            return [{"asset": k[0], "property": k[1].value, "tree": t} for k, t in items]

        return {
            "threshold": self.threshold,
            "mitigations": [str(n) for n in self.mitigations],
            "rows": [
                {
                    "asset": r.key[0],
                    "property": r.key[1].value,
                    "a": side(r.a),
                    "b": side(r.b),
                    "delta": {"effort": r.delta_effort, "risk": r.delta_risk, "gain": r.delta_gain},
                    "significant": r.significant,
                }
                for r in self.rows
            ],
            "only_a": unmatched(self.only_a),
            "only_b": unmatched(self.only_b),
        }


def _side(forest: ResolvedForest, evaluation, tree: str) -> Side:
    try:
        s = dominant_scenario(forest, tree, evaluation)
    except Infeasible:
        return Side(tree, None)
    return Side(tree, s.summary, s.dominant, forest.index[s.dominant].title, scenario_locus(forest, s))


def compare(
    a: Forest | ResolvedForest,
    b: Forest | ResolvedForest,
    m: MitigationSet | None = None,
    threshold: int = DEFAULT_THRESHOLD,
) -> ComparisonReport:
    """Evaluate both designs under ``m`` and diff every matched goal.

    Each mitigation applies to whichever side contains its tree, so one set
    may name nodes of both forests. Deltas are ``b - a``. A row is
    significant when the effort or risk delta exceeds ``threshold`` in
    magnitude, or when exactly one side is infeasible.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    if isinstance(a, Forest):
        a = resolve_refs(a)
    if isinstance(b, Forest):
        b = resolve_refs(b)
    m = m or MitigationSet()
    stray = [n for n in m.mitigated if n.tree not in a.forest and n.tree not in b.forest]
    if stray:
        raise UnknownNode(sorted(stray, key=NodeId.sort_key))
    a_m = apply_mitigations(a, m.restricted_to(a))
    b_m = apply_mitigations(b, m.restricted_to(b))
    ev_a, ev_b = propagate(a_m), propagate(b_m)

    match = match_goals(a.forest, b.forest)
    rows = []
    for key, ta, tb in match.pairs:
        sa, sb = _side(a_m, ev_a, ta), _side(b_m, ev_b, tb)
        if sa.summary is not None and sb.summary is not None:
            de = sb.summary.effort - sa.summary.effort
            dr = sb.summary.risk - sa.summary.risk
            dg = sb.summary.gain - sa.summary.gain
            significant = abs(de) > threshold or abs(dr) > threshold
        else:
            de = dr = dg = None
            significant = (sa.summary is None) != (sb.summary is None)
        rows.append(ComparisonRow(key, sa, sb, de, dr, dg, significant))
    return ComparisonReport(tuple(rows), match.only_a, match.only_b, m, threshold)
